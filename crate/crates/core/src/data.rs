//! Synthetic classification datasets, binary file IO, and seeded
//! mini-batch iteration.
//!
//! Two generators with controllable difficulty:
//!
//! * `gaussian_clusters`: class means on a scaled simplex (standard basis
//!   vectors scaled to separation 2), isotropic feature noise of the given
//!   std. With zero noise a linear probe separates the classes perfectly.
//! * `teacher_mlp`: inputs are standard normal, labels come from the argmax
//!   of a frozen randomly-initialized teacher MLP; `noise` is a label-flip
//!   probability applied to the train split only.
//!
//! File format (`.dds`): magic `DDDS`, version u32 LE, then u64 LE counts
//! `n`, `input_dim`, `n_classes`, then `n * input_dim` f64 LE inputs, then
//! `n` u32 LE labels. Round-trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::CoreError;
use crate::model::{build_model, Activation, Batch, Family, ForwardCtx, Model, ModelConfig};
use crate::regularizers::SdGranularity;
use crate::rng::{stream_id, CounterRng, StreamDomain};
use crate::scalar::{fc, to_f64, Scalar};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 4] = b"DDDS";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    GaussianClusters,
    TeacherMlp,
}

impl DatasetKind {
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        Ok(match s {
            "gaussian_clusters" => DatasetKind::GaussianClusters,
            "teacher_mlp" => DatasetKind::TeacherMlp,
            _ => return Err(CoreError::InvalidConfig(format!("unknown dataset kind '{s}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::GaussianClusters => "gaussian_clusters",
            DatasetKind::TeacherMlp => "teacher_mlp",
        }
    }
}

/// Full recipe for a reproducible synthetic dataset, including the frozen
/// teacher's architecture when labels come from a teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n_train: usize,
    pub n_test: usize,
    pub input_dim: usize,
    pub n_classes: usize,
    /// Feature noise std (gaussian_clusters) or label-flip probability
    /// (teacher_mlp, train split only).
    pub noise: f64,
    pub seed: u64,
    pub teacher_hidden: usize,
    pub teacher_depth: usize,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.n_classes < 2 {
            return Err(CoreError::InvalidConfig("n_classes must be at least 2".into()));
        }
        if self.n_train < self.n_classes {
            return Err(CoreError::InvalidConfig(format!(
                "degenerate spec: n_train {} < n_classes {}",
                self.n_train, self.n_classes
            )));
        }
        if self.n_test == 0 || self.input_dim == 0 {
            return Err(CoreError::InvalidConfig(
                "n_test and input_dim must be positive".into(),
            ));
        }
        if matches!(self.kind, DatasetKind::GaussianClusters) && self.input_dim < self.n_classes {
            return Err(CoreError::InvalidConfig(format!(
                "gaussian_clusters needs input_dim >= n_classes ({} < {})",
                self.input_dim, self.n_classes
            )));
        }
        if self.noise < 0.0 || (matches!(self.kind, DatasetKind::TeacherMlp) && self.noise >= 1.0) {
            return Err(CoreError::InvalidConfig(format!("noise {} out of range", self.noise)));
        }
        if matches!(self.kind, DatasetKind::TeacherMlp)
            && (self.teacher_hidden == 0 || self.teacher_depth == 0)
        {
            return Err(CoreError::InvalidConfig(
                "teacher_mlp needs positive teacher_hidden and teacher_depth".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F: Scalar> {
    pub inputs: Tensor<F>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl<F: Scalar> Dataset<F> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Materialize a batch from example indices.
    pub fn batch(&self, indices: &[usize]) -> Batch<F> {
        let d = self.input_dim();
        let mut values = Vec::with_capacity(indices.len() * d);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(&self.inputs.values()[i * d..(i + 1) * d]);
            targets.push(self.labels[i]);
        }
        Batch {
            inputs: Tensor::new(vec![indices.len(), d], values).expect("batch shape"),
            targets,
        }
    }

    pub fn full_batch(&self) -> Batch<F> {
        let indices: Vec<usize> = (0..self.len()).collect();
        self.batch(&indices)
    }
}

/// Generate `(train, test)` splits, deterministic in the spec seed.
pub fn generate<F: Scalar>(spec: &DatasetSpec) -> Result<(Dataset<F>, Dataset<F>), CoreError> {
    spec.validate()?;
    match spec.kind {
        DatasetKind::GaussianClusters => {
            let train = gaussian_split(spec, 0, spec.n_train)?;
            let test = gaussian_split(spec, 1, spec.n_test)?;
            Ok((train, test))
        }
        DatasetKind::TeacherMlp => teacher_splits(spec),
    }
}

const CLUSTER_SEPARATION: f64 = 2.0;

fn gaussian_split<F: Scalar>(
    spec: &DatasetSpec,
    split: u64,
    n: usize,
) -> Result<Dataset<F>, CoreError> {
    let mut rng = CounterRng::new(spec.seed, stream_id(StreamDomain::DataGen, split, 0));
    let d = spec.input_dim;
    let mut values = vec![F::zero(); n * d];
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        // round-robin labels guarantee every class is present
        let class = i % spec.n_classes;
        labels.push(class);
        for j in 0..d {
            let mean = if j == class { CLUSTER_SEPARATION } else { 0.0 };
            values[i * d + j] = fc(mean + spec.noise * rng.next_normal());
        }
    }
    Ok(Dataset {
        inputs: Tensor::new(vec![n, d], values)?,
        labels,
        n_classes: spec.n_classes,
    })
}

fn teacher_config(spec: &DatasetSpec, attempt: u64) -> ModelConfig {
    ModelConfig {
        family: Family::Mlp,
        input_dim: spec.input_dim,
        output_dim: spec.n_classes,
        hidden_dim: spec.teacher_hidden,
        depth: spec.teacher_depth,
        activation: Activation::Relu,
        init_seed: stream_id(StreamDomain::DataGen, 2, spec.seed ^ attempt),
        // wide init keeps the teacher's argmax varied across inputs
        init_std: 0.5,
        sd_granularity: SdGranularity::PerBatch,
    }
}

fn teacher_splits<F: Scalar>(spec: &DatasetSpec) -> Result<(Dataset<F>, Dataset<F>), CoreError> {
    const MAX_TEACHER_ATTEMPTS: u64 = 16;
    for attempt in 0..MAX_TEACHER_ATTEMPTS {
        let teacher: Model<F> = build_model(&teacher_config(spec, attempt))?;
        // presence is checked on the clean labels, before flips, so the
        // accepted teacher does not depend on the noise setting
        let mut train = teacher_split(spec, &teacher, 0, spec.n_train)?;
        let mut seen = vec![false; spec.n_classes];
        for &l in &train.labels {
            seen[l] = true;
        }
        if seen.iter().all(|s| *s) {
            apply_label_flips(&mut train.labels, spec, 0);
            let test = teacher_split(spec, &teacher, 1, spec.n_test)?;
            return Ok((train, test));
        }
    }
    Err(CoreError::InvalidConfig(format!(
        "teacher produced degenerate labels (some class absent) after {MAX_TEACHER_ATTEMPTS} attempts; \
         adjust n_classes or teacher size"
    )))
}

fn apply_label_flips(labels: &mut [usize], spec: &DatasetSpec, split: u64) {
    if spec.noise <= 0.0 {
        return;
    }
    let mut flip_rng = CounterRng::new(spec.seed, stream_id(StreamDomain::DataGen, split, 2));
    for l in labels.iter_mut() {
        if flip_rng.next_f64() < spec.noise {
            // flip to a uniformly random *other* class
            let shift = 1 + flip_rng.next_below(spec.n_classes as u64 - 1) as usize;
            *l = (*l + shift) % spec.n_classes;
        }
    }
}

fn teacher_split<F: Scalar>(
    spec: &DatasetSpec,
    teacher: &Model<F>,
    split: u64,
    n: usize,
) -> Result<Dataset<F>, CoreError> {
    let d = spec.input_dim;
    let mut feat_rng = CounterRng::new(spec.seed, stream_id(StreamDomain::DataGen, split, 1));
    let mut values = vec![F::zero(); n * d];
    for v in values.iter_mut() {
        *v = fc(feat_rng.next_normal());
    }
    let inputs = Tensor::new(vec![n, d], values)?;

    // label by teacher argmax, in chunks to bound tape size
    let mut labels = Vec::with_capacity(n);
    let chunk = 512;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let rows = end - start;
        let slice = inputs.values()[start * d..end * d].to_vec();
        let batch = Batch {
            inputs: Tensor::new(vec![rows, d], slice)?,
            targets: vec![0; rows],
        };
        let logits = teacher.forward(&batch, &ForwardCtx::eval())?.logits().clone();
        for i in 0..rows {
            let row = &logits.values()[i * spec.n_classes..(i + 1) * spec.n_classes];
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            labels.push(best);
        }
        start = end;
    }

    Ok(Dataset {
        inputs,
        labels,
        n_classes: spec.n_classes,
    })
}

/// Write a dataset in the binary `.dds` format.
pub fn save<F: Scalar>(dataset: &Dataset<F>, path: &Path) -> Result<(), CoreError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(dataset.input_dim() as u64).to_le_bytes());
    buf.extend_from_slice(&(dataset.n_classes as u64).to_le_bytes());
    for v in dataset.inputs.values() {
        buf.extend_from_slice(&to_f64(*v).to_le_bytes());
    }
    for l in &dataset.labels {
        buf.extend_from_slice(&(*l as u32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    file.write_all(&buf)
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CoreError> {
        if self.offset + n > self.data.len() {
            return Err(CoreError::DatasetFormat {
                offset: self.offset as u64,
                detail: format!("truncated while reading {what}"),
            });
        }
        let s = &self.data[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CoreError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CoreError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, CoreError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Read a dataset back from the binary `.dds` format.
pub fn load<F: Scalar>(path: &Path) -> Result<Dataset<F>, CoreError> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut cur = Cursor { data: &data, offset: 0 };

    let magic = cur.take(4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(CoreError::DatasetFormat {
            offset: 0,
            detail: format!("bad magic {magic:?}, expected {DATASET_MAGIC:?}"),
        });
    }
    let version = cur.u32("version")?;
    if version != DATASET_VERSION {
        return Err(CoreError::VersionMismatch {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let n = cur.u64("n")? as usize;
    let d = cur.u64("input_dim")? as usize;
    let n_classes = cur.u64("n_classes")? as usize;
    if n_classes < 2 || d == 0 {
        return Err(CoreError::DatasetFormat {
            offset: cur.offset as u64,
            detail: format!("implausible header: n={n} input_dim={d} n_classes={n_classes}"),
        });
    }
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        values.push(fc::<F>(cur.f64("inputs")?));
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let l = cur.u32("labels")? as usize;
        if l >= n_classes {
            return Err(CoreError::DatasetFormat {
                offset: (cur.offset - 4) as u64,
                detail: format!("label {l} out of range for {n_classes} classes"),
            });
        }
        labels.push(l);
    }
    if cur.offset != data.len() {
        return Err(CoreError::DatasetFormat {
            offset: cur.offset as u64,
            detail: format!("{} trailing bytes", data.len() - cur.offset),
        });
    }
    Ok(Dataset {
        inputs: Tensor::new(vec![n, d], values)?,
        labels,
        n_classes,
    })
}

/// Index batches of one epoch: a seeded permutation of the dataset chopped
/// into `batch_size` chunks, final short batch kept. The permutation is a
/// pure function of `(seed, epoch)`.
pub fn minibatch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1 && batch_size <= n, "batch_size {batch_size} out of range for {n}");
    let mut rng = CounterRng::new(seed, stream_id(StreamDomain::DataOrder, epoch, 0));
    let order = rng.permutation(n);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster_spec() -> DatasetSpec {
        DatasetSpec {
            kind: DatasetKind::GaussianClusters,
            n_train: 300,
            n_test: 60,
            input_dim: 8,
            n_classes: 3,
            noise: 0.0,
            seed: 11,
            teacher_hidden: 0,
            teacher_depth: 0,
        }
    }

    fn teacher_spec() -> DatasetSpec {
        DatasetSpec {
            kind: DatasetKind::TeacherMlp,
            n_train: 400,
            n_test: 100,
            input_dim: 10,
            n_classes: 4,
            noise: 0.0,
            seed: 17,
            teacher_hidden: 16,
            teacher_depth: 3,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for spec in [cluster_spec(), teacher_spec()] {
            let (a_train, a_test) = generate::<f64>(&spec).unwrap();
            let (b_train, b_test) = generate::<f64>(&spec).unwrap();
            assert_eq!(a_train, b_train);
            assert_eq!(a_test, b_test);
        }
    }

    #[test]
    fn every_class_present_in_train() {
        for spec in [cluster_spec(), teacher_spec()] {
            let (train, _) = generate::<f64>(&spec).unwrap();
            let mut seen = vec![false; spec.n_classes];
            for &l in &train.labels {
                seen[l] = true;
            }
            assert!(seen.iter().all(|s| *s), "{:?}", spec.kind);
            assert!(train.inputs.all_finite());
        }
    }

    // Nearest-class-mean is a linear classifier; with zero noise it must be
    // perfect on the training split.
    #[test]
    fn noiseless_clusters_are_linearly_separable() {
        let (train, _) = generate::<f64>(&cluster_spec()).unwrap();
        let d = train.input_dim();
        let k = train.n_classes;
        let mut means = vec![vec![0.0f64; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in train.labels.iter().enumerate() {
            counts[l] += 1;
            for j in 0..d {
                means[l][j] += train.inputs.values()[i * d + j];
            }
        }
        for (m, c) in means.iter_mut().zip(&counts) {
            for v in m.iter_mut() {
                *v /= *c as f64;
            }
        }
        let mut correct = 0;
        for (i, &l) in train.labels.iter().enumerate() {
            let x = &train.inputs.values()[i * d..(i + 1) * d];
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (c, m) in means.iter().enumerate() {
                let dot: f64 = x.iter().zip(m).map(|(a, b)| a * b).sum();
                let norm2: f64 = m.iter().map(|v| v * v).sum();
                let score = 2.0 * dot - norm2;
                if score > best_score {
                    best_score = score;
                    best = c;
                }
            }
            if best == l {
                correct += 1;
            }
        }
        assert_eq!(correct, train.len());
    }

    #[test]
    fn label_flip_fraction_matches_noise() {
        let mut spec = teacher_spec();
        spec.n_train = 100_000;
        spec.n_test = 10;
        spec.noise = 0.1;
        let clean = DatasetSpec { noise: 0.0, ..spec.clone() };
        let (noisy_train, _) = generate::<f64>(&spec).unwrap();
        let (clean_train, _) = generate::<f64>(&clean).unwrap();
        let flipped = noisy_train
            .labels
            .iter()
            .zip(&clean_train.labels)
            .filter(|(a, b)| a != b)
            .count();
        let fraction = flipped as f64 / spec.n_train as f64;
        assert!((fraction - 0.1).abs() < 0.01, "flip fraction {fraction}");
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (train, _) = generate::<f64>(&teacher_spec()).unwrap();
        let dir = std::env::temp_dir().join("dropdyn_data_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.dds");
        save(&train, &path).unwrap();
        let back: Dataset<f64> = load(&path).unwrap();
        assert_eq!(train, back);
        let a = train.inputs.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        let b = back.inputs.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let (train, _) = generate::<f64>(&cluster_spec()).unwrap();
        let dir = std::env::temp_dir().join("dropdyn_data_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trunc.dds");
        save(&train, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load::<f64>(&path) {
            Err(CoreError::DatasetFormat { detail, .. }) => {
                assert!(detail.contains("truncated"), "{detail}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_refused() {
        let (train, _) = generate::<f64>(&cluster_spec()).unwrap();
        let dir = std::env::temp_dir().join("dropdyn_data_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("version.dds");
        save(&train, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load::<f64>(&path),
            Err(CoreError::VersionMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn degenerate_spec_is_rejected() {
        let mut spec = cluster_spec();
        spec.n_train = 2;
        assert!(generate::<f64>(&spec).is_err());
    }

    #[test]
    fn minibatch_sizes_and_coverage() {
        let batches = minibatch_indices(10, 4, 3, 0);
        let sizes: Vec<usize> = batches.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let mut all: Vec<usize> = batches.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn single_batch_covers_everything_in_order_domain() {
        let batches = minibatch_indices(6, 6, 1, 0);
        assert_eq!(batches.len(), 1);
        let mut b = batches[0].clone();
        b.sort_unstable();
        assert_eq!(b, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn epoch_permutations_differ_but_replay() {
        let a0 = minibatch_indices(64, 8, 5, 0);
        let a1 = minibatch_indices(64, 8, 5, 1);
        let b0 = minibatch_indices(64, 8, 5, 0);
        assert_ne!(a0, a1);
        assert_eq!(a0, b0);
    }
}
