//! Gradient-dynamics measurements at a frozen model checkpoint.
//!
//! At a checkpoint we harvest a set `G` of mini-batch gradients (train mode,
//! fresh masks per batch) plus the whole-dataset gradient (eval mode, all
//! stochastic regularizers off), then summarize: GDV within `G`, GDE from
//! `G` to the whole-dataset gradient, and the bias norm
//! `|mean(G) - g_hat|`.
//!
//! Batch work can fan out over threads; every reduction runs in batch-index
//! order, so results do not depend on the worker count.

use crate::data::Dataset;
use crate::error::CoreError;
use crate::metrics::{gde, gdv};
use crate::model::{ForwardCtx, Model};
use crate::params::GradientVector;
use crate::rng::{CounterRng, StreamDomain};
use crate::scalar::{fc, Scalar};

/// Mini-batch gradients harvested at one checkpoint.
#[derive(Debug, Clone)]
pub struct GradientSet<F: Scalar> {
    pub members: Vec<GradientVector<F>>,
    /// (checkpoint iteration, collection seed, batch size)
    pub source: (u64, u64, usize),
    /// Zero gradients are excluded from the set rather than failing the
    /// run; this records how many were dropped.
    pub dropped_zero: usize,
}

/// One row of the diagnostics time series.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub lr: f64,
    pub drop_rate: f64,
    pub train_loss: f64,
    pub grad_norm: f64,
    pub model_distance: f64,
    pub gdv: f64,
    pub gde: f64,
    pub bias_norm: f64,
}

pub const DIAGNOSTICS_CSV_HEADER: &str =
    "iteration,epoch,lr,drop_rate,train_loss,grad_norm,model_distance,gdv,gde,bias_norm";

impl DiagnosticsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.epoch,
            self.lr,
            self.drop_rate,
            self.train_loss,
            self.grad_norm,
            self.model_distance,
            self.gdv,
            self.gde,
            self.bias_norm
        )
    }
}

/// Cadence and sizing knobs for the diagnostics pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    pub enabled: bool,
    /// |G|: how many mini-batch gradients to harvest per checkpoint.
    pub k: usize,
    /// Collect mini-batch gradients with the regularizers active (`train`,
    /// fresh masks per batch) or disabled (`eval`).
    pub collect_train_mode: bool,
    /// Collection batch size (defaults to the training batch size).
    pub batch_size: usize,
    /// Chunk size for the whole-dataset gradient accumulation.
    pub ghat_chunk: usize,
    /// Sample every `every_early` iterations up to `early_until`, then
    /// every `every_late`.
    pub every_early: u64,
    pub early_until: u64,
    pub every_late: u64,
    /// Iteration window for the GDE area-under-curve summary.
    pub auc_window: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            enabled: false,
            k: 8,
            collect_train_mode: true,
            batch_size: 32,
            ghat_chunk: 256,
            every_early: 10,
            early_until: 300,
            every_late: 100,
            auc_window: 1500,
        }
    }
}

impl DiagnosticsConfig {
    pub fn should_sample(&self, iteration: u64) -> bool {
        if !self.enabled {
            return false;
        }
        if iteration <= self.early_until {
            iteration % self.every_early == 0
        } else {
            iteration % self.every_late == 0
        }
    }
}

/// Number of worker threads for diagnostics, from `DROPDYN_THREADS`
/// (default: available parallelism, capped at 8).
pub fn thread_count() -> usize {
    if let Ok(v) = std::env::var("DROPDYN_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get().min(8))
        .unwrap_or(1)
}

/// Run `f` over `0..n` on up to `threads` workers (round-robin split) and
/// return results in index order, independent of the worker count.
fn indexed_map<T, Fn_>(n: usize, threads: usize, f: Fn_) -> Vec<T>
where
    T: Send,
    Fn_: Fn(usize) -> T + Sync,
{
    if threads <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let workers = threads.min(n);
    let mut results: Vec<(usize, T)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                scope.spawn(move || {
                    let mut out = Vec::new();
                    let mut i = w;
                    while i < n {
                        out.push((i, f(i)));
                        i += workers;
                    }
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("diagnostics worker panicked"))
            .collect()
    });
    results.sort_by_key(|(i, _)| *i);
    results.into_iter().map(|(_, v)| v).collect()
}

/// Gradient of the mean loss over the entire dataset, with all stochastic
/// regularizers in eval mode. Accumulated over fixed-size chunks in index
/// order: equal to the size-weighted mean of per-chunk gradients.
pub fn whole_dataset_gradient<F: Scalar>(
    model: &Model<F>,
    dataset: &Dataset<F>,
    chunk: usize,
    threads: usize,
) -> Result<GradientVector<F>, CoreError> {
    assert!(!dataset.is_empty(), "dataset must be nonempty");
    let n = dataset.len();
    let chunk = chunk.max(1);
    let ranges: Vec<(usize, usize)> = (0..n)
        .step_by(chunk)
        .map(|s| (s, (s + chunk).min(n)))
        .collect();
    let grads = indexed_map(ranges.len(), threads, |ci| {
        let (s, e) = ranges[ci];
        let indices: Vec<usize> = (s..e).collect();
        let batch = dataset.batch(&indices);
        let mut pass = model.forward(&batch, &ForwardCtx::eval())?;
        Ok::<(usize, GradientVector<F>), CoreError>((e - s, pass.backward()?))
    });
    let mut acc = GradientVector::zeros(model.param_count());
    let inv_n = F::one() / fc::<F>(n as f64);
    for g in grads {
        let (len, grad) = g?;
        acc.add_scaled(&grad, fc::<F>(len as f64) * inv_n);
    }
    Ok(acc)
}

/// Harvest `k` mini-batch gradients at the frozen checkpoint. Each batch is
/// sampled without replacement (independently per batch) from a stream of
/// `seed`; train mode draws fresh masks per batch from the same seed. The
/// model is never modified.
pub fn collect_minibatch_gradients<F: Scalar>(
    model: &Model<F>,
    dataset: &Dataset<F>,
    k: usize,
    batch_size: usize,
    ctx_template: &ForwardCtx,
    seed: u64,
    checkpoint_iteration: u64,
    threads: usize,
) -> Result<GradientSet<F>, CoreError> {
    if k < 2 {
        return Err(CoreError::GradientSetTooSmall { need: 2, got: k });
    }
    if batch_size == 0 || batch_size > dataset.len() {
        return Err(CoreError::InvalidConfig(format!(
            "collection batch_size {} out of range for dataset of {}",
            batch_size,
            dataset.len()
        )));
    }
    let grads = indexed_map(k, threads, |j| {
        let mut rng = CounterRng::for_stream(seed, StreamDomain::DiagBatch, j as u64, checkpoint_iteration);
        let indices = rng.sample_without_replacement(dataset.len(), batch_size);
        let batch = dataset.batch(&indices);
        let ctx = ForwardCtx {
            mask_seed: seed,
            iteration: checkpoint_iteration.wrapping_mul(1_000_003).wrapping_add(j as u64),
            ..*ctx_template
        };
        let mut pass = model.forward(&batch, &ctx)?;
        pass.backward()
    });
    let mut members = Vec::with_capacity(k);
    let mut dropped_zero = 0usize;
    for g in grads {
        let g = g?;
        if g.l2_norm() == F::zero() {
            dropped_zero += 1;
        } else {
            members.push(g);
        }
    }
    Ok(GradientSet {
        members,
        source: (checkpoint_iteration, seed, batch_size),
        dropped_zero,
    })
}

/// GDV, GDE, and bias norm of a gradient set against the whole-dataset
/// gradient.
pub fn direction_metrics<F: Scalar>(
    set: &GradientSet<F>,
    g_hat: &GradientVector<F>,
) -> Result<(F, F, F), CoreError> {
    let v = gdv(&set.members)?;
    let e = gde(&set.members, g_hat)?;
    let mut mean = GradientVector::zeros(g_hat.len());
    let w = F::one() / fc::<F>(set.members.len() as f64);
    for m in &set.members {
        mean.add_scaled(m, w);
    }
    let mut bias = mean;
    bias.add_scaled(g_hat, -F::one());
    Ok((v, e, bias.l2_norm()))
}
