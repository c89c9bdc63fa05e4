//! Overlapping window segmentation and the window file format.
//!
//! Windows are sliced from the raw stream (260 ms / 235 ms overlap by
//! default), labeled with the gesture of their first sample, and dropped when
//! they touch two different non-rest repetitions. Preprocessing happens
//! per-window afterwards, so a 52-sample raw window becomes the model's
//! 38-sample input.

use crate::data::{ms_to_samples, Recording};
use crate::error::{Error, Result};
use crate::tensor::Tensor2;
use std::io::{Read, Write};
use std::path::Path;

/// A fixed-length slice of the recording with a single gesture label.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `T x C` sample matrix; IMU columns, when present, follow the sEMG ones.
    pub data: Tensor2,
    pub label: usize,
    /// Originating recording/subject, for provenance in merged sets.
    pub source: usize,
}

/// An ordered collection of windows plus its label histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<Window>,
    /// Set when the input was too short to produce a single window.
    pub warning: Option<String>,
}

impl WindowSet {
    pub fn new(windows: Vec<Window>) -> Self {
        Self {
            windows,
            warning: None,
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Exact label counts, indexed by label, sized to the largest label seen.
    pub fn class_counts(&self) -> Vec<usize> {
        class_histogram(self)
    }
}

/// Exact per-label window counts.
pub fn class_histogram(ws: &WindowSet) -> Vec<usize> {
    let size = ws.windows.iter().map(|w| w.label + 1).max().unwrap_or(0);
    let mut counts = vec![0usize; size];
    for w in &ws.windows {
        counts[w.label] += 1;
    }
    counts
}

/// Slices a recording into overlapping raw windows.
///
/// Stride is `window - overlap` (in samples, round-half-up). A window takes
/// the gesture of its first sample; windows containing two different non-rest
/// repetition labels are discarded; a tail shorter than one window is
/// dropped. A recording shorter than one window yields an empty set with a
/// warning.
pub fn slice_windows(rec: &Recording, window_ms: f64, overlap_ms: f64) -> Result<WindowSet> {
    if overlap_ms >= window_ms {
        return Err(Error::Validation(format!(
            "overlap {} ms must be shorter than window {} ms",
            overlap_ms, window_ms
        )));
    }
    let fs = rec.sample_rate_hz;
    let width = ms_to_samples(window_ms, fs);
    let stride = width - ms_to_samples(overlap_ms, fs);
    if width == 0 || stride == 0 {
        return Err(Error::Validation(format!(
            "degenerate window geometry: {} samples wide, stride {}",
            width, stride
        )));
    }
    if rec.len() < width {
        return Ok(WindowSet {
            windows: Vec::new(),
            warning: Some(format!(
                "recording of {} samples is shorter than one {}-sample window",
                rec.len(),
                width
            )),
        });
    }

    let imu_cols = rec.imu.as_ref().map_or(0, Tensor2::cols);
    let cols = rec.channels() + imu_cols;
    let mut windows = Vec::new();
    let mut start = 0;
    while start + width <= rec.len() {
        let range = start..start + width;

        // Discard on two distinct non-rest repetitions.
        let mut seen_rep = 0usize;
        let mut multi_rep = false;
        for i in range.clone() {
            let r = rec.repetition[i];
            if r != 0 {
                if seen_rep != 0 && r != seen_rep {
                    multi_rep = true;
                    break;
                }
                seen_rep = r;
            }
        }
        if !multi_rep {
            let mut data = Tensor2::zeros(width, cols);
            for (row, i) in range.clone().enumerate() {
                data.row_mut(row)[..rec.channels()].copy_from_slice(rec.samples.row(i));
                if let Some(imu) = &rec.imu {
                    data.row_mut(row)[rec.channels()..].copy_from_slice(imu.row(i));
                }
            }
            windows.push(Window {
                data,
                label: rec.gesture[start],
                source: 0,
            });
        }
        start += stride;
    }
    Ok(WindowSet::new(windows))
}

// ---------------------------------------------------------------------------
// Window file format
// ---------------------------------------------------------------------------
//
// Little-endian throughout. See docs/formats.md.
//
//   magic   8 bytes  "SEMGWIN1"
//   version u32      1
//   count   u32
//   records, each:
//     len    u32     byte length of the rest of the record
//     t      u32     timesteps
//     c      u32     channels
//     label  u32
//     source u32
//     data   t*c f32, row-major

const WINDOW_MAGIC: &[u8; 8] = b"SEMGWIN1";
const WINDOW_VERSION: u32 = 1;

/// Writes a window set; samples are stored as 32-bit floats.
pub fn write_windows(ws: &WindowSet, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(WINDOW_MAGIC)?;
    out.write_all(&WINDOW_VERSION.to_le_bytes())?;
    out.write_all(&(ws.windows.len() as u32).to_le_bytes())?;
    for w in &ws.windows {
        let (t, c) = w.data.shape();
        let len = 16 + (t * c * 4) as u32;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(&(t as u32).to_le_bytes())?;
        out.write_all(&(c as u32).to_le_bytes())?;
        out.write_all(&(w.label as u32).to_le_bytes())?;
        out.write_all(&(w.source as u32).to_le_bytes())?;
        for v in w.data.as_slice() {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_u32(reader: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Reads a window file written by [`write_windows`].
pub fn read_windows(path: &Path) -> Result<WindowSet> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if &magic != WINDOW_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?} in {}",
            magic,
            path.display()
        )));
    }
    let version = read_u32(&mut reader)?;
    if version != WINDOW_VERSION {
        return Err(Error::Format(format!(
            "unsupported window file version {}",
            version
        )));
    }
    let count = read_u32(&mut reader)? as usize;
    let mut windows = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut reader)? as usize;
        let t = read_u32(&mut reader)? as usize;
        let c = read_u32(&mut reader)? as usize;
        let label = read_u32(&mut reader)? as usize;
        let source = read_u32(&mut reader)? as usize;
        if len != 16 + t * c * 4 {
            return Err(Error::Format(format!(
                "record length {} does not match {}x{} payload",
                len, t, c
            )));
        }
        let mut data = Tensor2::zeros(t, c);
        let mut buf = [0u8; 4];
        for v in data.as_mut_slice() {
            reader.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf) as f64;
        }
        windows.push(Window {
            data,
            label,
            source,
        });
    }
    Ok(WindowSet::new(windows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_recording, DatasetSpec};

    fn flat_recording(samples: usize, gesture: Vec<usize>, repetition: Vec<usize>) -> Recording {
        Recording {
            samples: Tensor2::from_fn(samples, 2, |r, c| (r * 2 + c) as f64),
            sample_rate_hz: 200.0,
            gesture,
            repetition,
            imu: None,
        }
    }

    #[test]
    fn window_count_matches_stride_formula() {
        let rec = flat_recording(1000, vec![1; 1000], vec![1; 1000]);
        let ws = slice_windows(&rec, 260.0, 235.0).unwrap();
        // floor((1000 - 52) / 5) + 1
        assert_eq!(ws.len(), 190);
    }

    #[test]
    fn label_comes_from_first_sample() {
        // 30 rest rows, then gesture 5 for the remainder; rest rows carry
        // repetition 0.
        let mut gesture = vec![0usize; 110];
        let mut repetition = vec![0usize; 110];
        for i in 30..110 {
            gesture[i] = 5;
            repetition[i] = 1;
        }
        let rec = flat_recording(110, gesture, repetition);
        let ws = slice_windows(&rec, 260.0, 235.0).unwrap();
        // Windows starting in the rest run are labeled rest even though the
        // gesture begins inside them.
        assert_eq!(ws.windows[0].label, 0);
        assert_eq!(ws.windows[5].label, 0); // starts at sample 25
        // A window starting inside the gesture carries the gesture label.
        assert_eq!(ws.windows[6].label, 5); // starts at sample 30
        assert!(ws.windows.iter().any(|w| w.label == 5));
    }

    #[test]
    fn window_spanning_two_repetitions_is_discarded() {
        // Repetition 2 then immediately repetition 3, no rest between.
        let mut repetition = vec![2usize; 60];
        for r in repetition.iter_mut().skip(30) {
            *r = 3;
        }
        let rec = flat_recording(60, vec![1; 60], repetition);
        let ws = slice_windows(&rec, 260.0, 235.0).unwrap();
        // 60 samples, width 52, stride 5: starts 0 and 5 fit, both span the
        // 30-sample boundary, so everything is discarded.
        assert_eq!(ws.len(), 0);
        assert!(ws.warning.is_none());

        // Rest (repetition 0) next to a repetition does NOT discard.
        let mut repetition = vec![2usize; 60];
        for r in repetition.iter_mut().skip(30) {
            *r = 0;
        }
        let rec = flat_recording(60, vec![1; 60], repetition);
        let ws = slice_windows(&rec, 260.0, 235.0).unwrap();
        assert_eq!(ws.len(), 2);
    }

    #[test]
    fn short_recording_gives_empty_set_with_warning() {
        let rec = flat_recording(20, vec![0; 20], vec![0; 20]);
        let ws = slice_windows(&rec, 260.0, 235.0).unwrap();
        assert!(ws.is_empty());
        assert!(ws.warning.is_some());
    }

    #[test]
    fn windows_are_contiguous_slices_of_the_source() {
        let rec = flat_recording(100, vec![1; 100], vec![1; 100]);
        let ws = slice_windows(&rec, 260.0, 235.0).unwrap();
        for (k, w) in ws.windows.iter().enumerate() {
            let start = k * 5;
            for t in 0..52 {
                for c in 0..2 {
                    assert_eq!(w.data[(t, c)], rec.samples[(start + t, c)]);
                }
            }
        }
    }

    #[test]
    fn imu_columns_are_appended() {
        let mut rec = flat_recording(60, vec![1; 60], vec![1; 60]);
        rec.imu = Some(Tensor2::from_fn(60, 3, |r, c| -((r * 3 + c) as f64)));
        let ws = slice_windows(&rec, 260.0, 235.0).unwrap();
        assert_eq!(ws.windows[0].data.cols(), 5);
        assert_eq!(ws.windows[0].data[(0, 2)], -0.0);
        assert_eq!(ws.windows[0].data[(1, 2)], -3.0);
    }

    #[test]
    fn histogram_counts_labels() {
        let empty = WindowSet::new(Vec::new());
        assert!(class_histogram(&empty).is_empty());

        let spec = DatasetSpec::synthetic(1, 2);
        let rec = synth_recording(&spec, 1, 2, 9).unwrap();
        let ws = slice_windows(&rec, 260.0, 235.0).unwrap();
        let hist = class_histogram(&ws);
        assert_eq!(hist.len(), 2);
        assert_eq!(hist.iter().sum::<usize>(), ws.len());
        assert!(hist[0] > 0 && hist[1] > 0);
    }

    #[test]
    fn db5_like_rest_fraction() {
        // Rest dominates at roughly the DB5 ratio when rest buffers are
        // 600 samples against 345-sample gestures.
        let mut gesture = Vec::new();
        let mut repetition = Vec::new();
        for g in 1..=3usize {
            for rep in 1..=6usize {
                gesture.extend(std::iter::repeat_n(g, 345));
                repetition.extend(std::iter::repeat_n(rep, 345));
                gesture.extend(std::iter::repeat_n(0, 600));
                repetition.extend(std::iter::repeat_n(0, 600));
            }
        }
        let n = gesture.len();
        let rec = flat_recording(n, gesture, repetition);
        let ws = slice_windows(&rec, 260.0, 235.0).unwrap();
        let hist = class_histogram(&ws);
        let rest_fraction = hist[0] as f64 / ws.len() as f64;
        assert!(
            (rest_fraction - 0.635).abs() < 0.02,
            "rest fraction {}",
            rest_fraction
        );
    }

    #[test]
    fn window_file_roundtrip() {
        let spec = DatasetSpec::synthetic(2, 3);
        let rec = synth_recording(&spec, 2, 2, 4).unwrap();
        let ws = slice_windows(&rec, 260.0, 235.0).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.windows");
        write_windows(&ws, &path).unwrap();
        let back = read_windows(&path).unwrap();

        assert_eq!(back.len(), ws.len());
        for (a, b) in back.windows.iter().zip(&ws.windows) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.data.shape(), b.data.shape());
            // Storage is f32; values must match at f32 precision exactly.
            for i in 0..a.data.len() {
                assert_eq!(a.data.as_slice()[i], b.data.as_slice()[i] as f32 as f64);
            }
        }

        // Second write of the re-read set is byte-identical.
        let path2 = dir.path().join("w2.windows");
        write_windows(&back, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn window_file_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.windows");
        std::fs::write(&path, b"NOTMAGIC\x01\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_windows(&path), Err(Error::Format(_))));
    }
}
