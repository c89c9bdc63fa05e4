//! Stage glue: recording -> split -> raw windows -> per-window preprocessing.
//!
//! Slicing happens on the raw stream and preprocessing runs inside each
//! window, so a 52-sample raw window shrinks to the model's 38-sample input.

use crate::augment::{augment_window, AugmentConfig};
use crate::data::{split_by_repetition, DatasetSpec, Recording};
use crate::dsp::{preprocess, FilterSpec, SmootherSpec};
use crate::error::Result;
use crate::windowing::{slice_windows, Window, WindowSet};

/// Model input shape produced by this geometry: (timesteps, channels).
pub fn model_input_shape(spec: &DatasetSpec, smoother: &SmootherSpec) -> (usize, usize) {
    (
        spec.window_samples() + 1 - smoother.kernel_len,
        spec.channels,
    )
}

/// Slices raw windows and preprocesses each one.
pub fn slice_and_preprocess(
    rec: &Recording,
    spec: &DatasetSpec,
    filter: &FilterSpec,
    smoother: &SmootherSpec,
) -> Result<WindowSet> {
    let raw = slice_windows(rec, spec.window_ms, spec.overlap_ms)?;
    preprocess_windows(&raw, rec.sample_rate_hz, filter, smoother)
}

/// Applies the rectify/filter/smooth chain to every window in a set.
pub fn preprocess_windows(
    ws: &WindowSet,
    sample_rate_hz: f64,
    filter: &FilterSpec,
    smoother: &SmootherSpec,
) -> Result<WindowSet> {
    let mut windows = Vec::with_capacity(ws.len());
    for w in &ws.windows {
        windows.push(Window {
            data: preprocess(&w.data, sample_rate_hz, filter, smoother)?,
            label: w.label,
            source: w.source,
        });
    }
    Ok(WindowSet {
        windows,
        warning: ws.warning.clone(),
    })
}

/// Splits by repetition and windows each split: (train, val, test).
pub fn prepare_splits(
    rec: &Recording,
    spec: &DatasetSpec,
    filter: &FilterSpec,
    smoother: &SmootherSpec,
    val_rep: usize,
    test_rep: usize,
) -> Result<(WindowSet, WindowSet, WindowSet)> {
    let (train_rec, val_rec, test_rec) = split_by_repetition(rec, test_rep, val_rep)?;
    Ok((
        slice_and_preprocess(&train_rec, spec, filter, smoother)?,
        slice_and_preprocess(&val_rec, spec, filter, smoother)?,
        slice_and_preprocess(&test_rec, spec, filter, smoother)?,
    ))
}

/// One offline augmentation pass over a whole set (rest windows unchanged).
/// The training loop does its own per-epoch augmentation; this exists for
/// the standalone CLI stage.
pub fn augment_set(ws: &WindowSet, cfg: &AugmentConfig) -> Result<WindowSet> {
    cfg.validate()?;
    let mut rng = cfg.rng();
    let windows = ws
        .windows
        .iter()
        .map(|w| augment_window(w, cfg, &mut rng))
        .collect();
    Ok(WindowSet {
        windows,
        warning: ws.warning.clone(),
    })
}
