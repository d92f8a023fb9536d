//! Dropout and stochastic depth.
//!
//! Dropout uses the inverted convention: survivors are scaled by `1/(1-p)`
//! at train time so that inference is a pure identity. Stochastic depth
//! skips whole residual blocks at train time and scales the block body by
//! its survival probability `1-p` at eval time. Per-block rates ramp
//! linearly from 0 at the first block to the configured maximum at the last.

use crate::autodiff::Mode;
use crate::error::CoreError;
use crate::rng::CounterRng;
use crate::scalar::{fc, Scalar};
use crate::tensor::Tensor;

/// Whether a stochastic-depth decision applies to the whole mini-batch or
/// independently to each sample row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SdGranularity {
    #[default]
    PerBatch,
    PerSample,
}

pub fn check_rate(p: f64) -> Result<(), CoreError> {
    if !(0.0..1.0).contains(&p) {
        return Err(CoreError::RateOutOfRange { rate: p });
    }
    Ok(())
}

/// Inverted-dropout mask: each element is 0 with probability `p`, else
/// `1/(1-p)`. One uniform draw per element, in row-major order.
pub fn dropout_mask<F: Scalar>(shape: &[usize], p: f64, rng: &mut CounterRng) -> Tensor<F> {
    let n: usize = shape.iter().product();
    let keep = fc::<F>(1.0 / (1.0 - p));
    let values: Vec<F> = (0..n)
        .map(|_| if rng.next_f64() < p { F::zero() } else { keep })
        .collect();
    Tensor::new(shape.to_vec(), values).expect("mask shape")
}

/// Standalone dropout on a tensor. Train mode zeroes elements independently
/// with probability `p` and rescales survivors; eval mode and `p == 0` are
/// identities that consume no randomness.
pub fn dropout_forward<F: Scalar>(
    x: &Tensor<F>,
    p: f64,
    mode: Mode,
    rng: &mut CounterRng,
) -> Result<Tensor<F>, CoreError> {
    check_rate(p)?;
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask::<F>(x.shape(), p, rng);
    let values: Vec<F> = x
        .values()
        .iter()
        .zip(mask.values())
        .map(|(v, m)| *v * *m)
        .collect();
    Tensor::new(x.shape().to_vec(), values)
}

/// Per-block stochastic-depth rate: linear ramp from 0 (first block) to
/// `p_max` (last block); a single block gets `p_max`.
pub fn sd_rate_for_layer(p_max: f64, layer_index: usize, depth: usize) -> Result<f64, CoreError> {
    check_rate(p_max)?;
    if depth == 0 || layer_index >= depth {
        return Err(CoreError::LayerIndexOutOfRange {
            index: layer_index,
            depth,
        });
    }
    if depth == 1 {
        return Ok(p_max);
    }
    Ok(p_max * layer_index as f64 / (depth - 1) as f64)
}

/// Keep/skip decisions for one block application. `PerBatch` draws once,
/// `PerSample` draws once per row.
pub fn sd_keep_decisions(
    rows: usize,
    p: f64,
    granularity: SdGranularity,
    rng: &mut CounterRng,
) -> Vec<bool> {
    match granularity {
        SdGranularity::PerBatch => {
            let keep = rng.next_f64() >= p;
            vec![keep; rows]
        }
        SdGranularity::PerSample => (0..rows).map(|_| rng.next_f64() >= p).collect(),
    }
}

/// Standalone stochastic depth around an arbitrary body function.
///
/// Train mode returns `x` exactly for skipped rows (or the whole batch with
/// `PerBatch`); eval mode returns `x + (1-p) * body(x)`.
pub fn stochastic_depth_forward<F: Scalar>(
    x: &Tensor<F>,
    body: impl Fn(&Tensor<F>) -> Tensor<F>,
    p: f64,
    granularity: SdGranularity,
    mode: Mode,
    rng: &mut CounterRng,
) -> Result<Tensor<F>, CoreError> {
    check_rate(p)?;
    let (n, m) = (x.rows(), x.cols());
    match mode {
        Mode::Eval => {
            let b = body(x);
            let scale = fc::<F>(1.0 - p);
            let values: Vec<F> = x
                .values()
                .iter()
                .zip(b.values())
                .map(|(xv, bv)| *xv + scale * *bv)
                .collect();
            Tensor::new(x.shape().to_vec(), values)
        }
        Mode::Train => {
            let keeps = sd_keep_decisions(n, p, granularity, rng);
            if keeps.iter().all(|k| !k) {
                return Ok(x.clone());
            }
            let b = body(x);
            let mut values = x.values().to_vec();
            for (i, keep) in keeps.iter().enumerate() {
                if *keep {
                    for j in 0..m {
                        values[i * m + j] = values[i * m + j] + b.values()[i * m + j];
                    }
                }
            }
            Tensor::new(x.shape().to_vec(), values)
        }
    }
}
