//! Labeled multichannel recordings: CSV exchange format, synthetic
//! generation, and repetition-based splitting.
//!
//! The exchange format is plain CSV with header
//! `ch0,...,chN[,imu0,...,imuM],gesture,repetition`, one row per sample,
//! UTF-8, LF line endings. Gesture 0 is rest; repetition 0 marks the rest
//! buffer between gesture repetitions. Converting from other containers
//! (e.g. NinaPro MAT exports) is documented in `docs/ninapro-csv.md`.

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor2;
use rand::Rng;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Dataset-level geometry and labeling contract.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    /// Total label count including rest (54 for full DB5/DB4).
    pub num_classes: usize,
    /// sEMG channel count (IMU columns are extra, discovered from the file).
    pub channels: usize,
    pub sample_rate_hz: f64,
    pub window_ms: f64,
    pub overlap_ms: f64,
}

impl DatasetSpec {
    /// Double-MYO armband dataset: 16 channels at 200 Hz, 53 gestures + rest.
    pub fn db5() -> Self {
        Self {
            num_classes: 54,
            channels: 16,
            sample_rate_hz: 200.0,
            window_ms: 260.0,
            overlap_ms: 235.0,
        }
    }

    /// High-frequency companion dataset: 12 channels at 2 kHz.
    pub fn db4() -> Self {
        Self {
            num_classes: 54,
            channels: 12,
            sample_rate_hz: 2000.0,
            window_ms: 260.0,
            overlap_ms: 235.0,
        }
    }

    /// Desk-scale spec for synthetic data: `num_gestures` non-rest classes.
    pub fn synthetic(num_gestures: usize, channels: usize) -> Self {
        Self {
            num_classes: num_gestures + 1,
            channels,
            sample_rate_hz: 200.0,
            window_ms: 260.0,
            overlap_ms: 235.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Validation("num_classes must be >= 2".into()));
        }
        if self.channels == 0 {
            return Err(Error::Validation("channel count must be >= 1".into()));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::Validation("sample_rate_hz must be positive".into()));
        }
        if self.overlap_ms >= self.window_ms {
            return Err(Error::Validation(format!(
                "overlap {} ms must be shorter than window {} ms",
                self.overlap_ms, self.window_ms
            )));
        }
        Ok(())
    }

    /// Window length in samples, round-half-up (260 ms at 200 Hz -> 52).
    pub fn window_samples(&self) -> usize {
        ms_to_samples(self.window_ms, self.sample_rate_hz)
    }

    /// Hop between window starts in samples (25 ms at 200 Hz -> 5).
    pub fn stride_samples(&self) -> usize {
        self.window_samples() - ms_to_samples(self.overlap_ms, self.sample_rate_hz)
    }
}

/// Milliseconds to samples with round-half-up.
pub fn ms_to_samples(ms: f64, sample_rate_hz: f64) -> usize {
    (ms * sample_rate_hz / 1000.0).round() as usize
}

/// A multichannel sEMG stream with per-sample labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    /// One row per timestep, one column per sEMG channel.
    pub samples: Tensor2,
    pub sample_rate_hz: f64,
    /// Gesture label per row; 0 is rest.
    pub gesture: Vec<usize>,
    /// Repetition label per row; 0 marks rest buffers.
    pub repetition: Vec<usize>,
    /// Optional accelerometer channels, row-aligned with `samples`.
    pub imu: Option<Tensor2>,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.rows() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.cols()
    }

    /// Checks the structural invariants against a dataset spec.
    pub fn validate(&self, spec: &DatasetSpec) -> Result<()> {
        let n = self.samples.rows();
        if self.gesture.len() != n || self.repetition.len() != n {
            return Err(Error::Validation(format!(
                "label rows ({} gesture, {} repetition) do not match {} samples",
                self.gesture.len(),
                self.repetition.len(),
                n
            )));
        }
        if let Some(imu) = &self.imu {
            if imu.rows() != n {
                return Err(Error::Validation(format!(
                    "imu rows {} do not match {} samples",
                    imu.rows(),
                    n
                )));
            }
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::Validation("sample_rate_hz must be positive".into()));
        }
        if self.channels() == 0 {
            return Err(Error::Validation("channel count must be >= 1".into()));
        }
        if self.channels() != spec.channels {
            return Err(Error::Validation(format!(
                "recording has {} channels, spec expects {}",
                self.channels(),
                spec.channels
            )));
        }
        for (i, &g) in self.gesture.iter().enumerate() {
            if g >= spec.num_classes {
                return Err(Error::Validation(format!(
                    "gesture label {} at row {} outside [0, {})",
                    g,
                    i + 2, // 1-based file row, counting the header
                    spec.num_classes
                )));
            }
        }
        Ok(())
    }

    /// NinaPro-style recordings use repetition labels 0..=6.
    pub fn check_repetition_range(&self, max_rep: usize) -> Result<()> {
        for (i, &r) in self.repetition.iter().enumerate() {
            if r > max_rep {
                return Err(Error::Validation(format!(
                    "repetition label {} at row {} outside [0, {}]",
                    r,
                    i + 2,
                    max_rep
                )));
            }
        }
        Ok(())
    }

    /// Distinct non-rest repetition labels, ascending.
    pub fn repetition_labels(&self) -> Vec<usize> {
        let mut labels: Vec<usize> = self.repetition.iter().copied().filter(|&r| r != 0).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

// ---------------------------------------------------------------------------
// CSV exchange format
// ---------------------------------------------------------------------------

fn expected_header(channels: usize, imu_channels: usize) -> String {
    let mut h = String::new();
    for c in 0..channels {
        let _ = write!(h, "ch{},", c);
    }
    for m in 0..imu_channels {
        let _ = write!(h, "imu{},", m);
    }
    h.push_str("gesture,repetition");
    h
}

/// Parses the header, returning the IMU column count.
fn parse_header(line: &str, spec: &DatasetSpec) -> Result<usize> {
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    if fields.len() < spec.channels + 2 {
        return Err(Error::Format(format!(
            "header has {} fields, need at least {} (ch0..ch{},gesture,repetition)",
            fields.len(),
            spec.channels + 2,
            spec.channels - 1
        )));
    }
    let imu_channels = fields.len() - spec.channels - 2;
    let want = expected_header(spec.channels, imu_channels);
    if line.trim_end() != want {
        return Err(Error::Format(format!(
            "header mismatch: expected `{}`, found `{}`",
            want,
            line.trim_end()
        )));
    }
    Ok(imu_channels)
}

/// Reads just the header and reports `(semg_channels, imu_channels)`.
pub fn sniff_channels(path: &Path) -> Result<(usize, usize)> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    if reader.read_line(&mut header)? == 0 {
        return Err(Error::Format("empty file".into()));
    }
    let fields: Vec<&str> = header.trim_end().split(',').collect();
    let channels = fields.iter().take_while(|f| f.starts_with("ch")).count();
    if channels == 0 {
        return Err(Error::Format(format!(
            "header does not start with ch0: `{}`",
            header.trim_end()
        )));
    }
    if fields.len() < channels + 2 {
        return Err(Error::Format("header too short".into()));
    }
    let imu = fields.len() - channels - 2;
    Ok((channels, imu))
}

/// Loads a recording from the CSV exchange format.
///
/// Rows are preserved in file order. IMU columns are optional and detected
/// from the header.
pub fn load_csv(path: &Path, spec: &DatasetSpec) -> Result<Recording> {
    spec.validate()?;
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);

    let mut header = String::new();
    if reader.read_line(&mut header)? == 0 {
        return Err(Error::Format("empty file".into()));
    }
    let imu_channels = parse_header(&header, spec)?;

    let mut samples = Vec::new();
    let mut imu = Vec::new();
    let mut gesture = Vec::new();
    let mut repetition = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let row_no = i + 2; // header is row 1
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = spec.channels + imu_channels + 2;
        if fields.len() != expected {
            return Err(Error::Parse {
                row: row_no,
                msg: format!("{} fields, expected {}", fields.len(), expected),
            });
        }
        for f in &fields[..spec.channels] {
            samples.push(parse_float(f, row_no)?);
        }
        for f in &fields[spec.channels..spec.channels + imu_channels] {
            imu.push(parse_float(f, row_no)?);
        }
        gesture.push(parse_label(fields[expected - 2], row_no, "gesture")?);
        repetition.push(parse_label(fields[expected - 1], row_no, "repetition")?);
    }

    let rows = gesture.len();
    let rec = Recording {
        samples: Tensor2::from_vec(rows, spec.channels, samples)?,
        sample_rate_hz: spec.sample_rate_hz,
        gesture,
        repetition,
        imu: if imu_channels > 0 {
            Some(Tensor2::from_vec(rows, imu_channels, imu)?)
        } else {
            None
        },
    };
    rec.validate(spec)?;
    Ok(rec)
}

fn parse_float(field: &str, row: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse {
        row,
        msg: format!("non-numeric cell `{}`", field),
    })
}

fn parse_label(field: &str, row: usize, name: &str) -> Result<usize> {
    field.parse::<usize>().map_err(|_| Error::Parse {
        row,
        msg: format!("non-integer {} label `{}`", name, field),
    })
}

/// Writes a recording in the CSV exchange format.
///
/// Floats use Rust's shortest round-trip formatting, so
/// `load_csv(write_csv(r)) == r` bit-exactly.
pub fn write_csv(rec: &Recording, path: &Path) -> Result<()> {
    let imu_channels = rec.imu.as_ref().map_or(0, Tensor2::cols);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", expected_header(rec.channels(), imu_channels))?;
    let mut line = String::new();
    for r in 0..rec.len() {
        line.clear();
        for v in rec.samples.row(r) {
            let _ = write!(line, "{},", v);
        }
        if let Some(imu) = &rec.imu {
            for v in imu.row(r) {
                let _ = write!(line, "{},", v);
            }
        }
        let _ = write!(line, "{},{}", rec.gesture[r], rec.repetition[r]);
        writeln!(out, "{}", line)?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic recordings
// ---------------------------------------------------------------------------

/// Gesture segment duration in the synthetic protocol.
const SYNTH_GESTURE_SECS: f64 = 1.5;
/// Rest buffer duration after each repetition.
const SYNTH_REST_SECS: f64 = 2.0;
/// Noise floor present everywhere.
const SYNTH_FLOOR: f64 = 0.25;

/// Generates a deterministic synthetic recording.
///
/// Each gesture class activates its own subset of channels (strong
/// amplitude on roughly half, faint on the rest) with a class-specific
/// carrier frequency above the high-pass cutoff; segments are that carrier
/// plus amplitude-modulated noise, embedded in a low noise floor. Every
/// repetition is followed by a rest segment (gesture 0, repetition 0), so
/// the class layout mimics lab collection protocols: repetitions of each
/// gesture buffered by rest.
pub fn synth_recording(
    spec: &DatasetSpec,
    num_gestures: usize,
    reps: usize,
    seed: u64,
) -> Result<Recording> {
    spec.validate()?;
    if num_gestures == 0 || reps == 0 {
        return Err(Error::Validation(
            "need at least one gesture and one repetition".into(),
        ));
    }
    if num_gestures >= spec.num_classes {
        return Err(Error::Validation(format!(
            "{} gestures plus rest exceed num_classes {}",
            num_gestures, spec.num_classes
        )));
    }

    let fs = spec.sample_rate_hz;
    let gesture_len = (SYNTH_GESTURE_SECS * fs).round() as usize;
    let rest_len = (SYNTH_REST_SECS * fs).round() as usize;
    let channels = spec.channels;

    // Class signatures come from their own stream so the sample noise does
    // not shift them when segment lengths change.
    let mut sig_rng = rng::stream_rng(seed, 0);
    let mut amp = vec![vec![0.0f64; channels]; num_gestures + 1];
    let mut freq = vec![0.0f64; num_gestures + 1];
    for g in 1..=num_gestures {
        for a in amp[g].iter_mut() {
            *a = if sig_rng.random::<bool>() {
                sig_rng.random_range(5.0..9.0)
            } else {
                sig_rng.random_range(0.5..1.0)
            };
        }
        // Channel-less classes would be indistinguishable from rest; force
        // at least one strong channel.
        if amp[g].iter().all(|&a| a < 5.0) {
            let ch = sig_rng.random_range(0..channels);
            amp[g][ch] = sig_rng.random_range(5.0..9.0);
        }
        // Carriers sit above the 20 Hz high-pass and below Nyquist.
        freq[g] = sig_rng.random_range(25.0..(fs / 2.0 - 20.0).max(26.0));
    }

    let mut noise_rng = rng::stream_rng(seed, 1);
    let total = num_gestures * reps * (gesture_len + rest_len);
    let mut samples = Vec::with_capacity(total * channels);
    let mut gesture = Vec::with_capacity(total);
    let mut repetition = Vec::with_capacity(total);

    let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
    let push_rest = |samples: &mut Vec<f64>,
                         gesture: &mut Vec<usize>,
                         repetition: &mut Vec<usize>,
                         noise_rng: &mut rand_chacha::ChaCha8Rng| {
        for _ in 0..rest_len {
            for _ in 0..channels {
                samples.push(SYNTH_FLOOR * noise_rng.sample(normal));
            }
            gesture.push(0);
            repetition.push(0);
        }
    };

    for g in 1..=num_gestures {
        for rep in 1..=reps {
            let phase: Vec<f64> = (0..channels)
                .map(|_| noise_rng.random_range(0.0..2.0 * std::f64::consts::PI))
                .collect();
            for t in 0..gesture_len {
                for (ch, ph) in phase.iter().enumerate() {
                    let carrier =
                        (2.0 * std::f64::consts::PI * freq[g] * t as f64 / fs + ph).sin();
                    let v = amp[g][ch] * carrier
                        + 0.2 * amp[g][ch] * noise_rng.sample(normal)
                        + SYNTH_FLOOR * noise_rng.sample(normal);
                    samples.push(v);
                }
                gesture.push(g);
                repetition.push(rep);
            }
            push_rest(&mut samples, &mut gesture, &mut repetition, &mut noise_rng);
        }
    }

    let rows = gesture.len();
    Ok(Recording {
        samples: Tensor2::from_vec(rows, channels, samples)?,
        sample_rate_hz: fs,
        gesture,
        repetition,
        imu: None,
    })
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Splits a recording into (train, validation, test) by repetition label.
///
/// Rest rows travel with the preceding repetition segment; rest before the
/// first repetition travels with the first. Non-rest rows go to the split
/// owning their repetition label. Row order is preserved and every row lands
/// in exactly one split.
pub fn split_by_repetition(
    rec: &Recording,
    test_rep: usize,
    val_rep: usize,
) -> Result<(Recording, Recording, Recording)> {
    if test_rep == val_rep {
        return Err(Error::Validation(format!(
            "test and validation repetition are both {}",
            test_rep
        )));
    }
    let present = rec.repetition_labels();
    for rep in [test_rep, val_rep] {
        if !present.contains(&rep) {
            return Err(Error::Validation(format!(
                "repetition {} not present in recording (have {:?})",
                rep, present
            )));
        }
    }

    // Effective repetition: forward-fill from gesture rows; leading rest
    // backfills from the first gesture row.
    let n = rec.len();
    let mut eff = vec![0usize; n];
    let mut current = 0usize;
    for i in 0..n {
        if rec.repetition[i] != 0 {
            current = rec.repetition[i];
        }
        eff[i] = current;
    }
    if let Some(first) = rec.repetition.iter().position(|&r| r != 0) {
        let first_rep = rec.repetition[first];
        for e in eff.iter_mut().take(first) {
            *e = first_rep;
        }
    }

    let select = |keep: &dyn Fn(usize) -> bool| -> Recording {
        let rows: Vec<usize> = (0..n).filter(|&i| keep(eff[i])).collect();
        let channels = rec.channels();
        let mut samples = Vec::with_capacity(rows.len() * channels);
        let mut gesture = Vec::with_capacity(rows.len());
        let mut repetition = Vec::with_capacity(rows.len());
        let mut imu = rec.imu.as_ref().map(|_| Vec::new());
        for &i in &rows {
            samples.extend_from_slice(rec.samples.row(i));
            gesture.push(rec.gesture[i]);
            repetition.push(rec.repetition[i]);
            if let (Some(buf), Some(src)) = (imu.as_mut(), rec.imu.as_ref()) {
                buf.extend_from_slice(src.row(i));
            }
        }
        Recording {
            samples: Tensor2::from_vec(rows.len(), channels, samples).expect("row-aligned"),
            sample_rate_hz: rec.sample_rate_hz,
            gesture,
            repetition,
            imu: imu.map(|buf| {
                let imu_cols = rec.imu.as_ref().unwrap().cols();
                Tensor2::from_vec(rows.len(), imu_cols, buf).expect("row-aligned")
            }),
        }
    };

    let test = select(&|r| r == test_rep);
    let val = select(&|r| r == val_rep);
    let train = select(&|r| r != test_rep && r != val_rep);
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny_spec() -> DatasetSpec {
        DatasetSpec::synthetic(4, 2)
    }

    #[test]
    fn csv_minimal_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mini.csv");
        std::fs::write(
            &path,
            "ch0,ch1,gesture,repetition\n0.5,-1.5,0,0\n1.25,2.5,1,1\n-0.125,0,1,1\n",
        )
        .unwrap();
        let rec = load_csv(&path, &tiny_spec()).unwrap();
        assert_eq!(rec.len(), 3);
        assert_eq!(rec.channels(), 2);
        assert_eq!(rec.gesture, vec![0, 1, 1]);
        assert!(rec.imu.is_none());

        let out = dir.path().join("out.csv");
        write_csv(&rec, &out).unwrap();
        let back = load_csv(&out, &tiny_spec()).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn csv_sixteen_channels_at_200hz() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db5.csv");
        let mut body = String::from(
            "ch0,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8,ch9,ch10,ch11,ch12,ch13,ch14,ch15,gesture,repetition\n",
        );
        for r in 0..3 {
            for c in 0..16 {
                body.push_str(&format!("{}.5,", r * 16 + c));
            }
            body.push_str("0,0\n");
        }
        std::fs::write(&path, body).unwrap();
        let rec = load_csv(&path, &DatasetSpec::db5()).unwrap();
        assert_eq!(rec.channels(), 16);
        assert_eq!(rec.sample_rate_hz, 200.0);
    }

    #[test]
    fn csv_header_mismatch_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b,gesture,repetition\n1,2,0,0\n").unwrap();
        assert!(matches!(
            load_csv(&path, &tiny_spec()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn csv_non_numeric_cell_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "ch0,ch1,gesture,repetition\n1,2,0,0\n1,oops,0,0\n",
        )
        .unwrap();
        match load_csv(&path, &tiny_spec()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn csv_gesture_out_of_range_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        // num_classes = 5 for the tiny spec, so gesture 5 is out of range.
        std::fs::write(&path, "ch0,ch1,gesture,repetition\n1,2,5,1\n").unwrap();
        assert!(matches!(
            load_csv(&path, &tiny_spec()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn csv_imu_columns_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imu.csv");
        std::fs::write(
            &path,
            "ch0,ch1,imu0,imu1,imu2,gesture,repetition\n1,2,0.1,0.2,0.3,0,0\n3,4,0.4,0.5,0.6,1,1\n",
        )
        .unwrap();
        let rec = load_csv(&path, &tiny_spec()).unwrap();
        let imu = rec.imu.as_ref().unwrap();
        assert_eq!(imu.shape(), (2, 3));
        assert_eq!(imu[(1, 2)], 0.6);

        let out = dir.path().join("imu_out.csv");
        write_csv(&rec, &out).unwrap();
        assert_eq!(load_csv(&out, &tiny_spec()).unwrap(), rec);
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = tiny_spec();
        let a = synth_recording(&spec, 4, 6, 7).unwrap();
        let b = synth_recording(&spec, 4, 6, 7).unwrap();
        assert_eq!(a, b);
        let c = synth_recording(&spec, 4, 6, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_single_gesture_structure() {
        let spec = DatasetSpec::synthetic(1, 2);
        let rec = synth_recording(&spec, 1, 1, 3).unwrap();
        // Exactly one non-rest segment followed by rest.
        let first_rest_after_gesture = rec
            .gesture
            .iter()
            .position(|&g| g == 1)
            .map(|start| rec.gesture[start..].iter().position(|&g| g == 0).unwrap() + start)
            .unwrap();
        assert!(rec.gesture[..first_rest_after_gesture].iter().all(|&g| g == 1));
        assert!(rec.gesture[first_rest_after_gesture..].iter().all(|&g| g == 0));
        assert_eq!(rec.repetition_labels(), vec![1]);
    }

    #[test]
    fn synth_classes_beat_chance_with_nearest_centroid() {
        // Oracle: mean |x| per channel per segment, nearest centroid.
        let spec = DatasetSpec::synthetic(4, 4);
        let rec = synth_recording(&spec, 4, 6, 11).unwrap();

        // Collect (label, feature) per gesture segment.
        let mut segments: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut i = 0;
        while i < rec.len() {
            if rec.gesture[i] == 0 {
                i += 1;
                continue;
            }
            let label = rec.gesture[i];
            let start = i;
            while i < rec.len() && rec.gesture[i] == label && rec.repetition[i] == rec.repetition[start] {
                i += 1;
            }
            let mut feat = vec![0.0; rec.channels()];
            for t in start..i {
                for (c, f) in feat.iter_mut().enumerate() {
                    *f += rec.samples[(t, c)].abs();
                }
            }
            for f in feat.iter_mut() {
                *f /= (i - start) as f64;
            }
            segments.push((label, feat));
        }
        assert_eq!(segments.len(), 24);

        let mut centroids = vec![vec![0.0; rec.channels()]; 5];
        let mut counts = vec![0usize; 5];
        for (label, feat) in &segments {
            counts[*label] += 1;
            for (c, f) in feat.iter().enumerate() {
                centroids[*label][c] += f;
            }
        }
        for (cent, &count) in centroids.iter_mut().zip(&counts) {
            if count > 0 {
                for v in cent.iter_mut() {
                    *v /= count as f64;
                }
            }
        }
        let correct = segments
            .iter()
            .filter(|(label, feat)| {
                let best = (1..=4)
                    .min_by(|&a, &b| {
                        let da: f64 = feat
                            .iter()
                            .zip(&centroids[a])
                            .map(|(x, c)| (x - c) * (x - c))
                            .sum();
                        let db: f64 = feat
                            .iter()
                            .zip(&centroids[b])
                            .map(|(x, c)| (x - c) * (x - c))
                            .sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                best == *label
            })
            .count();
        let accuracy = correct as f64 / segments.len() as f64;
        assert!(
            accuracy > 0.25,
            "nearest-centroid oracle accuracy {} not above chance",
            accuracy
        );
    }

    #[test]
    fn split_train_holds_remaining_reps() {
        let spec = tiny_spec();
        let rec = synth_recording(&spec, 2, 6, 5).unwrap();
        let (train, val, test) = split_by_repetition(&rec, 5, 3).unwrap();
        assert_eq!(train.repetition_labels(), vec![1, 2, 4, 6]);
        assert_eq!(val.repetition_labels(), vec![3]);
        assert_eq!(test.repetition_labels(), vec![5]);
        assert_eq!(train.len() + val.len() + test.len(), rec.len());
    }

    #[test]
    fn split_missing_rep_is_error() {
        let spec = tiny_spec();
        let rec = synth_recording(&spec, 2, 3, 5).unwrap();
        assert!(matches!(
            split_by_repetition(&rec, 5, 3),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            split_by_repetition(&rec, 2, 2),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn split_same_rep_rejected() {
        let spec = tiny_spec();
        let rec = synth_recording(&spec, 2, 6, 5).unwrap();
        assert!(split_by_repetition(&rec, 3, 3).is_err());
    }

    proptest! {
        #[test]
        fn csv_roundtrip_is_bit_exact(seed in 0u64..30) {
            let spec = tiny_spec();
            let rec = synth_recording(&spec, 3, 2, seed).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.csv");
            write_csv(&rec, &path).unwrap();
            let back = load_csv(&path, &spec).unwrap();
            prop_assert_eq!(back, rec);
        }

        #[test]
        fn split_partitions_rows(seed in 0u64..20) {
            let spec = tiny_spec();
            let rec = synth_recording(&spec, 3, 4, seed).unwrap();
            let (train, val, test) = split_by_repetition(&rec, 4, 2).unwrap();
            // Conservation: multiset of rows matches the original.
            prop_assert_eq!(train.len() + val.len() + test.len(), rec.len());
            let mut rows: Vec<Vec<u64>> = Vec::new();
            for part in [&train, &val, &test] {
                for r in 0..part.len() {
                    let mut key: Vec<u64> =
                        part.samples.row(r).iter().map(|v| v.to_bits()).collect();
                    key.push(part.gesture[r] as u64);
                    key.push(part.repetition[r] as u64);
                    rows.push(key);
                }
            }
            let mut orig: Vec<Vec<u64>> = (0..rec.len())
                .map(|r| {
                    let mut key: Vec<u64> =
                        rec.samples.row(r).iter().map(|v| v.to_bits()).collect();
                    key.push(rec.gesture[r] as u64);
                    key.push(rec.repetition[r] as u64);
                    key
                })
                .collect();
            rows.sort();
            orig.sort();
            prop_assert_eq!(rows, orig);
        }
    }
}
