//! Loss-landscape probing around a trained model.
//!
//! Two random perturbation directions are drawn in parameter space and
//! normalized per segment to the segment's own weight norm (then the whole
//! direction to unit length), so layers of very different scales perturb
//! proportionally. The loss is evaluated in eval mode on a square grid
//! `w + alpha * d1 + beta * d2`, and the curvature score `delta` is the
//! mean absolute loss difference over 4-connected neighboring grid points.

use std::path::Path;

use crate::data::Dataset;
use crate::error::CoreError;
use crate::model::{ForwardCtx, Model};
use crate::params::ParameterVector;
use crate::rng::{CounterRng, StreamDomain};

/// Square grid of losses. `losses[row * resolution + col]` is the loss at
/// `alpha = coords[col]`, `beta = coords[row]`.
#[derive(Debug, Clone)]
pub struct LandscapeGrid {
    pub resolution: usize,
    pub span: f64,
    pub coords: Vec<f64>,
    pub losses: Vec<f64>,
    /// Grid points whose loss came back non-finite; they are excluded from
    /// the neighbor set when computing delta.
    pub non_finite: usize,
}

impl LandscapeGrid {
    pub fn loss_at(&self, row: usize, col: usize) -> f64 {
        self.losses[row * self.resolution + col]
    }

    pub fn center_loss(&self) -> f64 {
        let mid = self.resolution / 2;
        self.loss_at(mid, mid)
    }
}

/// Grid coordinates: `resolution` points from `-span` to `span` with the
/// exact midpoint 0 (resolution must be odd, at least 3).
fn grid_coords(resolution: usize, span: f64) -> Result<Vec<f64>, CoreError> {
    if resolution < 3 || resolution % 2 == 0 {
        return Err(CoreError::InvalidConfig(format!(
            "landscape resolution must be odd and >= 3, got {resolution}"
        )));
    }
    if !(span > 0.0) {
        return Err(CoreError::InvalidConfig(format!("landscape span must be positive, got {span}")));
    }
    let mid = (resolution / 2) as i64;
    let h = span / mid as f64;
    Ok((0..resolution as i64).map(|i| (i - mid) as f64 * h).collect())
}

/// Evaluate a loss function over the grid.
pub fn landscape_grid(
    resolution: usize,
    span: f64,
    mut loss: impl FnMut(f64, f64) -> f64,
) -> Result<LandscapeGrid, CoreError> {
    let coords = grid_coords(resolution, span)?;
    let mut losses = Vec::with_capacity(resolution * resolution);
    let mut non_finite = 0usize;
    for beta in &coords {
        for alpha in &coords {
            let l = loss(*alpha, *beta);
            if !l.is_finite() {
                non_finite += 1;
            }
            losses.push(l);
        }
    }
    Ok(LandscapeGrid {
        resolution,
        span,
        coords,
        losses,
        non_finite,
    })
}

/// Mean absolute loss difference over 4-connected neighbor pairs. Pairs
/// touching a non-finite cell are excluded.
pub fn delta(grid: &LandscapeGrid) -> f64 {
    let r = grid.resolution;
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut visit = |a: f64, b: f64| {
        if a.is_finite() && b.is_finite() {
            sum += (a - b).abs();
            count += 1;
        }
    };
    for row in 0..r {
        for col in 0..r {
            if col + 1 < r {
                visit(grid.loss_at(row, col), grid.loss_at(row, col + 1));
            }
            if row + 1 < r {
                visit(grid.loss_at(row, col), grid.loss_at(row + 1, col));
            }
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Random direction matching the parameter layout: per-segment gaussian,
/// rescaled so each segment's norm equals the corresponding weight-segment
/// norm, then the whole vector normalized to unit length. Zero-norm
/// segments (for example untouched biases) stay zero.
pub fn random_direction(params: &ParameterVector<f64>, seed: u64, index: u64) -> Vec<f64> {
    let mut dir = vec![0.0f64; params.total_len()];
    for (si, seg) in params.segments().iter().enumerate() {
        let mut rng = CounterRng::for_stream(seed, StreamDomain::LandscapeDirection, index, si as u64);
        let w = params.segment_values(si);
        let wnorm: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if wnorm == 0.0 {
            continue;
        }
        let raw: Vec<f64> = (0..seg.len()).map(|_| rng.next_normal()).collect();
        let rnorm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm == 0.0 {
            continue;
        }
        for (d, r) in dir[seg.offset..seg.offset + seg.len()].iter_mut().zip(&raw) {
            *d = r * wnorm / rnorm;
        }
    }
    let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for d in &mut dir {
            *d /= norm;
        }
    }
    dir
}

/// Landscape of a model's eval-mode mean loss over a dataset, probed along
/// two seeded random directions. Returns the grid, the two directions, and
/// delta.
pub fn model_landscape(
    model: &Model<f64>,
    dataset: &Dataset<f64>,
    resolution: usize,
    span: f64,
    seed: u64,
) -> Result<(LandscapeGrid, Vec<f64>, Vec<f64>, f64), CoreError> {
    let d1 = random_direction(model.params(), seed, 0);
    let d2 = random_direction(model.params(), seed, 1);
    let base = model.params().values().to_vec();
    let batch = dataset.full_batch();
    let mut probe = model.clone();
    let grid = landscape_grid(resolution, span, |alpha, beta| {
        let w: Vec<f64> = base
            .iter()
            .zip(&d1)
            .zip(&d2)
            .map(|((w, a), b)| w + alpha * a + beta * b)
            .collect();
        probe.set_param_values(&w).expect("layout unchanged");
        match probe.forward(&batch, &ForwardCtx::eval()) {
            Ok(pass) => pass.loss,
            Err(_) => f64::NAN,
        }
    })?;
    let d = delta(&grid);
    Ok((grid, d1, d2, d))
}

/// Write the grid as `alpha,beta,loss` CSV plus a one-line delta footer
/// file next to it.
pub fn write_landscape_artifacts(
    grid: &LandscapeGrid,
    delta_value: f64,
    out_dir: &Path,
) -> Result<(), CoreError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir.display().to_string(), e))?;
    let mut csv = String::from("alpha,beta,loss\n");
    for (bi, beta) in grid.coords.iter().enumerate() {
        for (ai, alpha) in grid.coords.iter().enumerate() {
            csv.push_str(&format!("{},{},{}\n", alpha, beta, grid.loss_at(bi, ai)));
        }
    }
    let csv_path = out_dir.join("landscape.csv");
    std::fs::write(&csv_path, csv).map_err(|e| CoreError::io(csv_path.display().to_string(), e))?;
    let delta_path = out_dir.join("landscape_delta.txt");
    std::fs::write(&delta_path, format!("delta={delta_value}\n"))
        .map_err(|e| CoreError::io(delta_path.display().to_string(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_loss_matches_closed_form() {
        // L(alpha, beta) = alpha: horizontal pairs differ by h, vertical by 0
        let res = 5usize;
        let span = 1.0;
        let grid = landscape_grid(res, span, |a, _| a).unwrap();
        let h = span / (res / 2) as f64;
        let horiz = res * (res - 1);
        let vert = res * (res - 1);
        let expect = h * horiz as f64 / (horiz + vert) as f64;
        assert!((delta(&grid) - expect).abs() < 1e-12);
        assert_eq!(grid.center_loss(), 0.0);
    }

    #[test]
    fn constant_loss_has_zero_delta() {
        let grid = landscape_grid(7, 0.5, |_, _| 3.25).unwrap();
        assert_eq!(delta(&grid), 0.0);
    }

    #[test]
    fn quadratic_matches_brute_force_enumeration() {
        let res = 3usize;
        let grid = landscape_grid(res, 1.0, |a, b| a * a + b * b).unwrap();
        // brute force over all 12 neighbor pairs
        let coord = |i: usize| (i as f64) - 1.0;
        let l = |r: usize, c: usize| coord(c) * coord(c) + coord(r) * coord(r);
        let mut sum = 0.0;
        let mut n = 0;
        for r in 0..res {
            for c in 0..res {
                if c + 1 < res {
                    sum += (l(r, c) - l(r, c + 1)).abs();
                    n += 1;
                }
                if r + 1 < res {
                    sum += (l(r, c) - l(r + 1, c)).abs();
                    n += 1;
                }
            }
        }
        assert_eq!(n, 12);
        assert!((delta(&grid) - sum / 12.0).abs() < 1e-12);
    }

    #[test]
    fn delta_invariant_to_constant_shift() {
        let a = landscape_grid(5, 1.0, |x, y| (3.0 * x).sin() + y * y).unwrap();
        let b = landscape_grid(5, 1.0, |x, y| (3.0 * x).sin() + y * y + 100.0).unwrap();
        assert!((delta(&a) - delta(&b)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_cells_are_excluded_with_count() {
        let grid = landscape_grid(3, 1.0, |a, b| {
            if a == 1.0 && b == 1.0 {
                f64::NAN
            } else {
                a
            }
        })
        .unwrap();
        assert_eq!(grid.non_finite, 1);
        let d = delta(&grid);
        assert!(d.is_finite());
        // 12 pairs minus the 2 touching the bad corner; 5 horizontal pairs
        // remain at |dL| = h = 1, the 5 vertical ones are flat
        let expect = 5.0 / 10.0;
        assert!((d - expect).abs() < 1e-12, "delta {d} expect {expect}");
    }

    #[test]
    fn even_or_tiny_resolution_rejected() {
        assert!(landscape_grid(4, 1.0, |_, _| 0.0).is_err());
        assert!(landscape_grid(1, 1.0, |_, _| 0.0).is_err());
    }

    #[test]
    fn directions_are_unit_norm_and_deterministic() {
        let mut pv = ParameterVector::<f64>::new();
        pv.push_segment("w1", vec![4, 4], (0..16).map(|i| 0.1 * (i as f64 + 1.0)).collect());
        pv.push_segment("b1", vec![4], vec![0.0; 4]);
        pv.push_segment("w2", vec![4, 2], (0..8).map(|i| -0.3 * (i as f64 + 1.0)).collect());
        let d1 = random_direction(&pv, 9, 0);
        let d1_again = random_direction(&pv, 9, 0);
        let d2 = random_direction(&pv, 9, 1);
        assert_eq!(d1, d1_again);
        assert_ne!(d1, d2);
        let norm: f64 = d1.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        // zero-norm segment stays zero
        let seg = &pv.segments()[1];
        assert!(d1[seg.offset..seg.offset + seg.len()].iter().all(|v| *v == 0.0));
    }
}
