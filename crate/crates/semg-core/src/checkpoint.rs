//! Parameter checkpoints: versioned binary, layer-ordered, little-endian
//! 64-bit floats with shape headers. Optionally carries the optimizer state
//! (moments, slow weights, step count, completed epochs) so a run can stop
//! at an epoch boundary and resume bit-exactly. See docs/formats.md.

use crate::error::{Error, Result};
use crate::model::{build, ModelConfig, ModelParams};
use crate::tensor::Tensor2;
use crate::train::{MomentState, Ranger, RangerConfig};
use std::io::{Read, Write};
use std::path::Path;

const CKPT_MAGIC: &[u8; 8] = b"SEMGCKP1";
const CKPT_VERSION: u32 = 1;

/// Optimizer half of a resumable checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub optimizer: Ranger,
    /// Epochs already completed; resuming starts here.
    pub epochs_done: usize,
}

fn write_u32(out: &mut impl Write, v: u32) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_bytes(out: &mut impl Write, bytes: &[u8]) -> Result<()> {
    write_u32(out, bytes.len() as u32)?;
    out.write_all(bytes)?;
    Ok(())
}

fn write_tensor(out: &mut impl Write, t: &Tensor2) -> Result<()> {
    write_u32(out, t.rows() as u32)?;
    write_u32(out, t.cols() as u32)?;
    for v in t.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(reader: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(reader: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    reader.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_bytes(reader: &mut impl Read) -> Result<Vec<u8>> {
    let len = read_u32(reader)? as usize;
    let mut buf = vec![0u8; len];
    reader.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_tensor(reader: &mut impl Read) -> Result<Tensor2> {
    let rows = read_u32(reader)? as usize;
    let cols = read_u32(reader)? as usize;
    let mut t = Tensor2::zeros(rows, cols);
    let mut buf = [0u8; 8];
    for v in t.as_mut_slice() {
        reader.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(t)
}

/// Saves parameters (and optionally the optimizer state) to `path`.
pub fn save(path: &Path, params: &ModelParams, train_state: Option<&TrainState>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(CKPT_MAGIC)?;
    write_u32(&mut out, CKPT_VERSION)?;

    let config_json = serde_json::to_vec(&params.config)
        .map_err(|e| Error::Format(format!("config serialization: {}", e)))?;
    write_bytes(&mut out, &config_json)?;

    let mut count = 0u32;
    params.for_each_tensor(&mut |_, _, _| count += 1);
    write_u32(&mut out, count)?;
    let mut io_err: Option<Error> = None;
    params.for_each_tensor(&mut |name, _, value| {
        if io_err.is_none() {
            let r = write_bytes(&mut out, name.as_bytes()).and_then(|_| write_tensor(&mut out, value));
            if let Err(e) = r {
                io_err = Some(e);
            }
        }
    });
    if let Some(e) = io_err {
        return Err(e);
    }

    match train_state {
        None => out.write_all(&[0u8])?,
        Some(state) => {
            out.write_all(&[1u8])?;
            let ranger_json = serde_json::to_vec(&state.optimizer.config)
                .map_err(|e| Error::Format(format!("optimizer config: {}", e)))?;
            write_bytes(&mut out, &ranger_json)?;
            out.write_all(&(state.optimizer.step_count as u64).to_le_bytes())?;
            write_u32(&mut out, state.epochs_done as u32)?;
            write_u32(&mut out, state.optimizer.moments.len() as u32)?;
            for (moment, slow) in state.optimizer.moments.iter().zip(&state.optimizer.slow) {
                write_tensor(&mut out, &moment.m)?;
                write_tensor(&mut out, &moment.v)?;
                write_tensor(&mut out, slow)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Loads a checkpoint written by [`save`]. Gradient slots come back zeroed.
pub fn load(path: &Path) -> Result<(ModelParams, Option<TrainState>)> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);

    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic in {}",
            path.display()
        )));
    }
    let version = read_u32(&mut reader)?;
    if version != CKPT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {}",
            version
        )));
    }

    let config: ModelConfig = serde_json::from_slice(&read_bytes(&mut reader)?)
        .map_err(|e| Error::Format(format!("config deserialization: {}", e)))?;
    let mut params = build(&config, 0)?;

    let count = read_u32(&mut reader)? as usize;
    let mut loaded: Vec<(String, Tensor2)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name = String::from_utf8(read_bytes(&mut reader)?)
            .map_err(|e| Error::Format(format!("tensor name: {}", e)))?;
        loaded.push((name, read_tensor(&mut reader)?));
    }

    let mut idx = 0usize;
    let mut mismatch: Option<String> = None;
    params.for_each_tensor_mut(&mut |name, _, value, grad| {
        if mismatch.is_some() {
            return;
        }
        let Some((got_name, got)) = loaded.get(idx) else {
            mismatch = Some(format!("checkpoint ends before tensor {}", name));
            return;
        };
        if got_name != name || got.shape() != value.shape() {
            mismatch = Some(format!(
                "tensor {} ({}x{}) vs checkpoint {} ({}x{})",
                name,
                value.rows(),
                value.cols(),
                got_name,
                got.rows(),
                got.cols()
            ));
            return;
        }
        *value = got.clone();
        grad.fill(0.0);
        idx += 1;
    });
    if let Some(msg) = mismatch {
        return Err(Error::Format(msg));
    }
    if idx != count {
        return Err(Error::Format(format!(
            "checkpoint has {} tensors, model consumes {}",
            count, idx
        )));
    }

    let mut flag = [0u8; 1];
    reader.read_exact(&mut flag)?;
    let train_state = if flag[0] == 1 {
        let ranger_config: RangerConfig = serde_json::from_slice(&read_bytes(&mut reader)?)
            .map_err(|e| Error::Format(format!("optimizer config: {}", e)))?;
        let step_count = read_u64(&mut reader)? as usize;
        let epochs_done = read_u32(&mut reader)? as usize;
        let slots = read_u32(&mut reader)? as usize;
        let mut moments = Vec::with_capacity(slots);
        let mut slow = Vec::with_capacity(slots);
        for _ in 0..slots {
            let m = read_tensor(&mut reader)?;
            let v = read_tensor(&mut reader)?;
            moments.push(MomentState { m, v });
            slow.push(read_tensor(&mut reader)?);
        }
        Some(TrainState {
            optimizer: Ranger {
                config: ranger_config,
                step_count,
                moments,
                slow,
            },
            epochs_done,
        })
    } else {
        None
    };

    Ok((params, train_state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClassifierKind;

    fn toy_params(seed: u64) -> ModelParams {
        let mut cfg = ModelConfig::full(6, 4, 3);
        cfg.expanded_channels = 8;
        cfg.classifier = ClassifierKind::Custom(vec![10]);
        cfg.dropout_rate = 0.1;
        build(&cfg, seed).unwrap()
    }

    #[test]
    fn parameter_roundtrip_is_bit_exact() {
        let params = toy_params(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&path, &params, None).unwrap();
        let (loaded, state) = load(&path).unwrap();
        assert!(state.is_none());
        assert_eq!(loaded, params);
    }

    #[test]
    fn optimizer_state_roundtrip() {
        let mut params = toy_params(5);
        let opt = Ranger::new(&mut params, RangerConfig::default());
        let state = TrainState {
            optimizer: opt,
            epochs_done: 7,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&path, &params, Some(&state)).unwrap();
        let (loaded, loaded_state) = load(&path).unwrap();
        assert_eq!(loaded, params);
        let loaded_state = loaded_state.unwrap();
        assert_eq!(loaded_state.epochs_done, 7);
        assert_eq!(loaded_state.optimizer, state.optimizer);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOTACKPTxxxxxxx").unwrap();
        assert!(matches!(load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn resume_reproduces_uninterrupted_training() {
        use crate::data::{split_by_repetition, synth_recording, DatasetSpec};
        use crate::dsp::{FilterSpec, SmootherSpec};
        use crate::pipeline::slice_and_preprocess;
        use crate::train::{train_range, TrainConfig};

        let spec = DatasetSpec::synthetic(2, 3);
        let rec = synth_recording(&spec, 2, 3, 17).unwrap();
        let (train_rec, val_rec, _) = split_by_repetition(&rec, 3, 2).unwrap();
        let filter = FilterSpec::default();
        let smoother = SmootherSpec::auto_for(spec.sample_rate_hz, spec.window_samples());
        let train = slice_and_preprocess(&train_rec, &spec, &filter, &smoother).unwrap();
        let val = slice_and_preprocess(&val_rec, &spec, &filter, &smoother).unwrap();

        let mut mc = ModelConfig::full(38, 3, 3);
        mc.expanded_channels = 8;
        mc.classifier = ClassifierKind::Custom(vec![12]);

        let tc = TrainConfig {
            epochs: 4,
            batch_size: 32,
            warm_epochs: 2,
            ..TrainConfig::paper(23)
        };

        // Uninterrupted: 4 epochs straight.
        let mut p_full = build(&mc, 1).unwrap();
        let mut opt_full = Ranger::new(&mut p_full, tc.ranger);
        train_range(&mut p_full, &train, &val, &tc, None, 0..4, &mut opt_full).unwrap();

        // Interrupted: 2 epochs, checkpoint, reload, 2 more.
        let mut p_half = build(&mc, 1).unwrap();
        let mut opt_half = Ranger::new(&mut p_half, tc.ranger);
        train_range(&mut p_half, &train, &val, &tc, None, 0..2, &mut opt_half).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mid.ckpt");
        save(
            &path,
            &p_half,
            Some(&TrainState {
                optimizer: opt_half,
                epochs_done: 2,
            }),
        )
        .unwrap();
        let (mut p_resumed, state) = load(&path).unwrap();
        let mut state = state.unwrap();
        train_range(
            &mut p_resumed,
            &train,
            &val,
            &tc,
            None,
            state.epochs_done..4,
            &mut state.optimizer,
        )
        .unwrap();

        assert_eq!(p_resumed, p_full);
    }
}
