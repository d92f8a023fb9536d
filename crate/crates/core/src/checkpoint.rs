//! Checkpoint files.
//!
//! Container format (`.ddck`): magic `DDCK`, version u32 LE, segment count
//! u32 LE, then per segment: name length u32 LE + UTF-8 name, rank u32 LE,
//! dims (u64 LE each), values (f64 LE). Round-trips are bit-exact.
//!
//! A model checkpoint holds the parameter segments under their own names.
//! A full training checkpoint adds optimizer buffers and run counters under
//! reserved `__opt__/` and `__run__/` names so training can resume exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::CoreError;
use crate::model::Model;
use crate::optim::Optimizer;
use crate::scalar::{fc, to_f64, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSegment {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl CheckpointSegment {
    pub fn scalar(name: &str, v: f64) -> Self {
        CheckpointSegment {
            name: name.to_string(),
            shape: vec![1],
            values: vec![v],
        }
    }

    pub fn vector(name: &str, values: Vec<f64>) -> Self {
        CheckpointSegment {
            name: name.to_string(),
            shape: vec![values.len()],
            values,
        }
    }
}

pub fn write_segments(path: &Path, segments: &[CheckpointSegment]) -> Result<(), CoreError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(segments.len() as u32).to_le_bytes());
    for seg in segments {
        let name = seg.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(seg.shape.len() as u32).to_le_bytes());
        for d in &seg.shape {
            buf.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        let n: usize = seg.shape.iter().product();
        assert_eq!(n, seg.values.len(), "segment {} shape/value mismatch", seg.name);
        for v in &seg.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file =
        std::fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    file.write_all(&buf)
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn read_segments(path: &Path) -> Result<Vec<CheckpointSegment>, CoreError> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize, what: &str| -> Result<&[u8], CoreError> {
        if *off + n > data.len() {
            return Err(CoreError::CheckpointFormat {
                offset: *off as u64,
                detail: format!("truncated while reading {what}"),
            });
        }
        let s = &data[*off..*off + n];
        *off += n;
        Ok(s)
    };
    let magic = take(&mut off, 4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CoreError::CheckpointFormat {
            offset: 0,
            detail: format!("bad magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"),
        });
    }
    let version = u32::from_le_bytes(take(&mut off, 4, "version")?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CoreError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let count = u32::from_le_bytes(take(&mut off, 4, "segment count")?.try_into().unwrap());
    let mut segments = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(&mut off, 4, "name length")?.try_into().unwrap());
        let name_bytes = take(&mut off, name_len as usize, "name")?;
        let name = String::from_utf8(name_bytes.to_vec()).map_err(|_| CoreError::CheckpointFormat {
            offset: off as u64,
            detail: "segment name is not UTF-8".into(),
        })?;
        let rank = u32::from_le_bytes(take(&mut off, 4, "rank")?.try_into().unwrap());
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(&mut off, 8, "dim")?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f64::from_le_bytes(take(&mut off, 8, "values")?.try_into().unwrap()));
        }
        segments.push(CheckpointSegment { name, shape, values });
    }
    if off != data.len() {
        return Err(CoreError::CheckpointFormat {
            offset: off as u64,
            detail: format!("{} trailing bytes", data.len() - off),
        });
    }
    Ok(segments)
}

fn model_segments<F: Scalar>(model: &Model<F>) -> Vec<CheckpointSegment> {
    model
        .params()
        .segments()
        .iter()
        .enumerate()
        .map(|(i, seg)| CheckpointSegment {
            name: seg.name.clone(),
            shape: seg.shape.clone(),
            values: model.params().segment_values(i).iter().map(|v| to_f64(*v)).collect(),
        })
        .collect()
}

/// Save model parameters only.
pub fn save_model<F: Scalar>(model: &Model<F>, path: &Path) -> Result<(), CoreError> {
    write_segments(path, &model_segments(model))
}

/// Load parameter segments into an already-built model; names and shapes
/// must match the model's layout exactly.
pub fn load_model_params<F: Scalar>(model: &mut Model<F>, path: &Path) -> Result<(), CoreError> {
    let segments = read_segments(path)?;
    apply_model_segments(model, &segments)
}

fn apply_model_segments<F: Scalar>(
    model: &mut Model<F>,
    segments: &[CheckpointSegment],
) -> Result<(), CoreError> {
    let layout: Vec<(String, Vec<usize>)> = model
        .params()
        .segments()
        .iter()
        .map(|s| (s.name.clone(), s.shape.clone()))
        .collect();
    for (i, (name, shape)) in layout.iter().enumerate() {
        let seg = segments
            .iter()
            .find(|s| &s.name == name)
            .ok_or_else(|| CoreError::InvalidConfig(format!("checkpoint is missing segment '{name}'")))?;
        if &seg.shape != shape {
            return Err(CoreError::InvalidConfig(format!(
                "segment '{name}' has shape {:?}, model wants {:?}",
                seg.shape, shape
            )));
        }
        let dst = model.params_mut().segment_values_mut(i);
        for (d, v) in dst.iter_mut().zip(&seg.values) {
            *d = fc(*v);
        }
    }
    Ok(())
}

const OPT_STEP: &str = "__opt__/step";
const OPT_VELOCITY: &str = "__opt__/velocity";
const OPT_M: &str = "__opt__/m";
const OPT_V: &str = "__opt__/v";
const RUN_ITERATION: &str = "__run__/iteration";
const RUN_EPOCH: &str = "__run__/epoch";

/// Save parameters, optimizer buffers, and run counters in one file.
pub fn save_training_state<F: Scalar>(
    path: &Path,
    model: &Model<F>,
    optimizer: &Optimizer<F>,
    iteration: u64,
    epoch: u64,
) -> Result<(), CoreError> {
    let mut segments = model_segments(model);
    segments.push(CheckpointSegment::scalar(OPT_STEP, optimizer.step_count() as f64));
    let dump = |vals: &[F]| vals.iter().map(|v| to_f64(*v)).collect::<Vec<f64>>();
    if !optimizer.velocity().is_empty() {
        segments.push(CheckpointSegment::vector(OPT_VELOCITY, dump(optimizer.velocity())));
    }
    let (m, v) = optimizer.moments();
    if !m.is_empty() {
        segments.push(CheckpointSegment::vector(OPT_M, dump(m)));
        segments.push(CheckpointSegment::vector(OPT_V, dump(v)));
    }
    segments.push(CheckpointSegment::scalar(RUN_ITERATION, iteration as f64));
    segments.push(CheckpointSegment::scalar(RUN_EPOCH, epoch as f64));
    write_segments(path, &segments)
}

/// Iteration counter stored in a training checkpoint, if any (model-only
/// checkpoints have none).
pub fn read_run_iteration(path: &Path) -> Result<Option<u64>, CoreError> {
    let segments = read_segments(path)?;
    Ok(segments
        .iter()
        .find(|s| s.name == RUN_ITERATION)
        .map(|s| s.values[0] as u64))
}

/// Restore parameters, optimizer buffers, and run counters saved by
/// [`save_training_state`]. Returns `(iteration, epoch)`.
pub fn load_training_state<F: Scalar>(
    path: &Path,
    model: &mut Model<F>,
    optimizer: &mut Optimizer<F>,
) -> Result<(u64, u64), CoreError> {
    let segments = read_segments(path)?;
    apply_model_segments(model, &segments)?;
    let get_scalar = |name: &str| -> Result<f64, CoreError> {
        segments
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.values[0])
            .ok_or_else(|| CoreError::InvalidConfig(format!("checkpoint is missing '{name}'")))
    };
    let load_vec = |name: &str| -> Vec<F> {
        segments
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.values.iter().map(|v| fc(*v)).collect())
            .unwrap_or_default()
    };
    let step = get_scalar(OPT_STEP)? as u64;
    optimizer.restore(step, load_vec(OPT_VELOCITY), load_vec(OPT_M), load_vec(OPT_V))?;
    let iteration = get_scalar(RUN_ITERATION)? as u64;
    let epoch = get_scalar(RUN_EPOCH)? as u64;
    Ok((iteration, epoch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, Activation, Family, ModelConfig};
    use crate::optim::{OptHyper, OptKind};
    use crate::regularizers::SdGranularity;

    fn cfg() -> ModelConfig {
        ModelConfig {
            family: Family::ResidualMlp,
            input_dim: 5,
            output_dim: 3,
            hidden_dim: 6,
            depth: 2,
            activation: Activation::Gelu,
            init_seed: 4,
            init_std: 0.02,
            sd_granularity: SdGranularity::PerBatch,
        }
    }

    fn tmpdir() -> std::path::PathBuf {
        let d = std::env::temp_dir().join("dropdyn_ckpt_test");
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn segments_round_trip_bit_exact() {
        let path = tmpdir().join("segs.ddck");
        let segs = vec![
            CheckpointSegment {
                name: "w".into(),
                shape: vec![2, 3],
                values: vec![1.0, -2.5, 0.1, f64::MIN_POSITIVE, 1e300, -0.0],
            },
            CheckpointSegment::scalar("s", 42.0),
        ];
        write_segments(&path, &segs).unwrap();
        let back = read_segments(&path).unwrap();
        assert_eq!(segs.len(), back.len());
        for (a, b) in segs.iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            let abits: Vec<u64> = a.values.iter().map(|v| v.to_bits()).collect();
            let bbits: Vec<u64> = b.values.iter().map(|v| v.to_bits()).collect();
            assert_eq!(abits, bbits);
        }
    }

    #[test]
    fn model_params_round_trip() {
        let model: Model<f64> = build_model(&cfg()).unwrap();
        let path = tmpdir().join("model.ddck");
        save_model(&model, &path).unwrap();
        let mut other: Model<f64> = build_model(&ModelConfig { init_seed: 99, ..cfg() }).unwrap();
        assert_ne!(model.params(), other.params());
        load_model_params(&mut other, &path).unwrap();
        assert_eq!(model.params(), other.params());
    }

    #[test]
    fn training_state_round_trip_including_optimizer() {
        let mut model: Model<f64> = build_model(&cfg()).unwrap();
        let n = model.param_count();
        let mut opt = Optimizer::<f64>::new(OptKind::AdamW, OptHyper::default(), n).unwrap();
        let grad: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        for _ in 0..3 {
            let mut params = model.params().values().to_vec();
            opt.step(&mut params, &grad, 1e-3).unwrap();
            model.set_param_values(&params).unwrap();
        }
        let path = tmpdir().join("train.ddck");
        save_training_state(&path, &model, &opt, 123, 4).unwrap();

        let mut model2: Model<f64> = build_model(&cfg()).unwrap();
        let mut opt2 = Optimizer::<f64>::new(OptKind::AdamW, OptHyper::default(), n).unwrap();
        let (it, ep) = load_training_state(&path, &mut model2, &mut opt2).unwrap();
        assert_eq!((it, ep), (123, 4));
        assert_eq!(opt, opt2);
        assert_eq!(model.params(), model2.params());
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let path = tmpdir().join("magic.ddck");
        let model: Model<f64> = build_model(&cfg()).unwrap();
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_segments(&path),
            Err(CoreError::CheckpointFormat { offset: 0, .. })
        ));
    }
}
