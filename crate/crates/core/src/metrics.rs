//! Direction and distance metrics over gradients.
//!
//! * cosine distance: `0.5 * (1 - <a,b> / (|a||b|))`, in `[0, 1]`
//! * GDV: average pairwise cosine distance within a gradient set
//! * GDE: average cosine distance from each member to a reference gradient
//! * GDE-AUC: trapezoidal integral of a GDE-vs-iteration series
//!
//! All results are clamped into their mathematical range so downstream
//! records can rely on the bounds exactly.

use crate::error::CoreError;
use crate::params::{GradientVector, ParameterVector};
use crate::scalar::{fc, Scalar};

/// Half of one minus the cosine similarity. Zero for identical directions,
/// one for opposite, one half for orthogonal.
pub fn cosine_distance<F: Scalar>(a: &GradientVector<F>, b: &GradientVector<F>) -> Result<F, CoreError> {
    let (na, nb) = (a.l2_norm(), b.l2_norm());
    if na == F::zero() || nb == F::zero() {
        return Err(CoreError::ZeroVector);
    }
    // equal vectors have cosine exactly 1; skip the rounding of the norms
    if a.values() == b.values() {
        return Ok(F::zero());
    }
    let half = fc::<F>(0.5);
    let cos = a.dot(b) / (na * nb);
    Ok((half * (F::one() - cos)).max(F::zero()).min(F::one()))
}

/// Gradient direction variance: mean cosine distance over all unordered
/// pairs of the set.
pub fn gdv<F: Scalar>(members: &[GradientVector<F>]) -> Result<F, CoreError> {
    if members.len() < 2 {
        return Err(CoreError::GradientSetTooSmall {
            need: 2,
            got: members.len(),
        });
    }
    let k = members.len();
    let mut sum = F::zero();
    for i in 0..k {
        for j in (i + 1)..k {
            sum = sum + cosine_distance(&members[i], &members[j])?;
        }
    }
    let pairs = fc::<F>((k * (k - 1)) as f64 / 2.0);
    Ok((sum / pairs).max(F::zero()).min(F::one()))
}

/// Gradient direction error: mean cosine distance from each member to the
/// whole-dataset gradient `g_hat`.
pub fn gde<F: Scalar>(members: &[GradientVector<F>], g_hat: &GradientVector<F>) -> Result<F, CoreError> {
    if members.is_empty() {
        return Err(CoreError::GradientSetTooSmall { need: 1, got: 0 });
    }
    if g_hat.l2_norm() == F::zero() {
        return Err(CoreError::ZeroVector);
    }
    let mut sum = F::zero();
    for m in members {
        sum = sum + cosine_distance(m, g_hat)?;
    }
    Ok((sum / fc::<F>(members.len() as f64)).max(F::zero()).min(F::one()))
}

/// Euclidean norm of a gradient.
pub fn gradient_norm<F: Scalar>(g: &GradientVector<F>) -> F {
    g.l2_norm()
}

/// Euclidean distance between two parameter vectors.
pub fn model_distance<F: Scalar>(
    w1: &ParameterVector<F>,
    w2: &ParameterVector<F>,
) -> Result<F, CoreError> {
    w1.distance(w2)
}

/// Trapezoidal integral of `(iteration, value)` points from the first
/// iteration up to `window_end`. A segment straddling the window end is cut
/// by linear interpolation. Needs at least two points at or before the end.
pub fn gde_auc(series: &[(u64, f64)], window_end: u64) -> Result<f64, CoreError> {
    let in_window = series.iter().filter(|(it, _)| *it <= window_end).count();
    if in_window < 2 {
        return Err(CoreError::InsufficientAucPoints {
            window_end,
            got: in_window,
        });
    }
    debug_assert!(
        series.windows(2).all(|w| w[0].0 < w[1].0),
        "series must be sorted by iteration"
    );
    let mut auc = 0.0;
    for pair in series.windows(2) {
        let (x0, y0) = (pair[0].0 as f64, pair[0].1);
        let (x1, y1) = (pair[1].0 as f64, pair[1].1);
        if pair[0].0 >= window_end {
            break;
        }
        if pair[1].0 <= window_end {
            auc += 0.5 * (y0 + y1) * (x1 - x0);
        } else {
            // cut the last segment at the window boundary
            let xe = window_end as f64;
            let ye = y0 + (y1 - y0) * (xe - x0) / (x1 - x0);
            auc += 0.5 * (y0 + ye) * (xe - x0);
            break;
        }
    }
    Ok(auc)
}
