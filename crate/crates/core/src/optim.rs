//! SGD, momentum SGD, and AdamW over flat parameter slices.
//!
//! Weight decay is decoupled for all three kinds: the decay term
//! `lr * weight_decay * w` is subtracted alongside the gradient update and
//! never enters the momentum or moment buffers.

use crate::error::CoreError;
use crate::scalar::{fc, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptKind {
    Sgd,
    MomentumSgd,
    AdamW,
}

impl OptKind {
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        Ok(match s {
            "sgd" => OptKind::Sgd,
            "momentum_sgd" => OptKind::MomentumSgd,
            "adamw" => OptKind::AdamW,
            _ => return Err(CoreError::InvalidConfig(format!("unknown optimizer '{s}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptKind::Sgd => "sgd",
            OptKind::MomentumSgd => "momentum_sgd",
            OptKind::AdamW => "adamw",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptHyper {
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptHyper {
    fn default() -> Self {
        OptHyper {
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Optimizer state: buffers aligned with the parameter vector plus a step
/// counter that increments by exactly one per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<F: Scalar> {
    kind: OptKind,
    hyper: OptHyper,
    step_count: u64,
    velocity: Vec<F>,
    first_moment: Vec<F>,
    second_moment: Vec<F>,
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(kind: OptKind, hyper: OptHyper, param_len: usize) -> Result<Self, CoreError> {
        if !(hyper.eps > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "optimizer eps must be positive, got {}",
                hyper.eps
            )));
        }
        let (velocity, first, second) = match kind {
            OptKind::Sgd => (Vec::new(), Vec::new(), Vec::new()),
            OptKind::MomentumSgd => (vec![F::zero(); param_len], Vec::new(), Vec::new()),
            OptKind::AdamW => (
                Vec::new(),
                vec![F::zero(); param_len],
                vec![F::zero(); param_len],
            ),
        };
        Ok(Optimizer {
            kind,
            hyper,
            step_count: 0,
            velocity,
            first_moment: first,
            second_moment: second,
        })
    }

    pub fn kind(&self) -> OptKind {
        self.kind
    }

    pub fn hyper(&self) -> &OptHyper {
        &self.hyper
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn velocity(&self) -> &[F] {
        &self.velocity
    }

    pub fn moments(&self) -> (&[F], &[F]) {
        (&self.first_moment, &self.second_moment)
    }

    /// Restore buffers and step count (checkpoint resume). Lengths must
    /// match the optimizer kind's layout.
    pub fn restore(
        &mut self,
        step_count: u64,
        velocity: Vec<F>,
        first_moment: Vec<F>,
        second_moment: Vec<F>,
    ) -> Result<(), CoreError> {
        if velocity.len() != self.velocity.len()
            || first_moment.len() != self.first_moment.len()
            || second_moment.len() != self.second_moment.len()
        {
            return Err(CoreError::InvalidConfig(
                "optimizer buffer lengths do not match checkpoint".into(),
            ));
        }
        self.step_count = step_count;
        self.velocity = velocity;
        self.first_moment = first_moment;
        self.second_moment = second_moment;
        Ok(())
    }

    /// One update step. `params` and `grad` must be aligned with the
    /// buffers. Non-finite gradient components are reported with the step
    /// index for context.
    pub fn step(&mut self, params: &mut [F], grad: &[F], lr: f64) -> Result<(), CoreError> {
        assert_eq!(params.len(), grad.len(), "param/grad length mismatch");
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(CoreError::NonFiniteGradient {
                step: self.step_count + 1,
                index,
            });
        }
        self.step_count += 1;
        let lr_f = fc::<F>(lr);
        let wd = fc::<F>(self.hyper.weight_decay);
        let apply_decay = self.hyper.weight_decay != 0.0;
        match self.kind {
            OptKind::Sgd => {
                for (w, g) in params.iter_mut().zip(grad) {
                    let decay = if apply_decay { lr_f * wd * *w } else { F::zero() };
                    *w = *w - lr_f * *g - decay;
                }
            }
            OptKind::MomentumSgd => {
                let beta = fc::<F>(self.hyper.momentum);
                for ((w, g), v) in params.iter_mut().zip(grad).zip(&mut self.velocity) {
                    *v = beta * *v + *g;
                    let decay = if apply_decay { lr_f * wd * *w } else { F::zero() };
                    *w = *w - lr_f * *v - decay;
                }
            }
            OptKind::AdamW => {
                let b1 = fc::<F>(self.hyper.beta1);
                let b2 = fc::<F>(self.hyper.beta2);
                let eps = fc::<F>(self.hyper.eps);
                let one = F::one();
                let bc1 = one - fc::<F>(self.hyper.beta1.powi(self.step_count as i32));
                let bc2 = one - fc::<F>(self.hyper.beta2.powi(self.step_count as i32));
                for (((w, g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    *m = b1 * *m + (one - b1) * *g;
                    *v = b2 * *v + (one - b2) * *g * *g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    let decay = if apply_decay { wd * *w } else { F::zero() };
                    *w = *w - lr_f * (m_hat / (v_hat.sqrt() + eps) + decay);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sgd(wd: f64) -> Optimizer<f64> {
        Optimizer::new(
            OptKind::Sgd,
            OptHyper {
                weight_decay: wd,
                ..OptHyper::default()
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn sgd_hand_values() {
        let mut w = [1.0];
        sgd(0.0).step(&mut w, &[2.0], 0.1).unwrap();
        assert_eq!(w[0], 0.8);

        let mut w = [1.0];
        sgd(0.0).step(&mut w, &[0.0], 0.1).unwrap();
        assert_eq!(w[0], 1.0);

        let mut w = [1.0];
        sgd(0.5).step(&mut w, &[0.0], 0.1).unwrap();
        assert_eq!(w[0], 0.95);
    }

    #[test]
    fn momentum_first_step_equals_sgd() {
        let mut a = [0.7];
        let mut b = [0.7];
        let mut m = Optimizer::<f64>::new(OptKind::MomentumSgd, OptHyper::default(), 1).unwrap();
        m.step(&mut a, &[0.3], 0.05).unwrap();
        sgd(0.0).step(&mut b, &[0.3], 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn momentum_two_step_trace() {
        // g=1 twice, beta=0.9, lr=1, w0=0: v1=1 w1=-1; v2=1.9 w2=-2.9
        let mut w = [0.0];
        let mut m = Optimizer::<f64>::new(OptKind::MomentumSgd, OptHyper::default(), 1).unwrap();
        m.step(&mut w, &[1.0], 1.0).unwrap();
        assert_eq!(w[0], -1.0);
        m.step(&mut w, &[1.0], 1.0).unwrap();
        assert!((w[0] - -2.9).abs() < 1e-15);
    }

    #[test]
    fn momentum_zero_grad_decays_geometrically() {
        let mut w = [0.0];
        let mut m = Optimizer::<f64>::new(OptKind::MomentumSgd, OptHyper::default(), 1).unwrap();
        m.step(&mut w, &[1.0], 0.1).unwrap();
        // buffer is now v=1; with g=0 the update at step k is lr * 0.9^k
        let mut expect = w[0];
        for k in 1..=5 {
            m.step(&mut w, &[0.0], 0.1).unwrap();
            expect -= 0.1 * 0.9f64.powi(k);
            assert!((w[0] - expect).abs() < 1e-15, "step {k}");
        }
    }

    #[test]
    fn adamw_single_step_trace() {
        // g=1: m_hat=1, v_hat=1, w1 = -lr/(1+eps)
        let mut w = [0.0];
        let mut opt = Optimizer::<f64>::new(OptKind::AdamW, OptHyper::default(), 1).unwrap();
        opt.step(&mut w, &[1.0], 0.1).unwrap();
        let expect = -0.1 * (1.0 / (1.0 + 1e-8));
        assert!((w[0] - expect).abs() < 1e-16, "got {}", w[0]);
        assert!((w[0] - -0.1).abs() < 1e-8);
    }

    #[test]
    fn adamw_zero_grad_without_decay_is_identity() {
        let mut w = [0.35];
        let mut opt = Optimizer::<f64>::new(OptKind::AdamW, OptHyper::default(), 1).unwrap();
        opt.step(&mut w, &[0.0], 0.1).unwrap();
        assert_eq!(w[0], 0.35);
    }

    #[test]
    fn adamw_decoupled_decay_hand_value() {
        // decay 0.05, lr 0.1, zero grad: w1 = 1 - 0.1 * 0.05 = 0.995
        let mut w = [1.0];
        let mut opt = Optimizer::<f64>::new(
            OptKind::AdamW,
            OptHyper {
                weight_decay: 0.05,
                ..OptHyper::default()
            },
            1,
        )
        .unwrap();
        opt.step(&mut w, &[0.0], 0.1).unwrap();
        assert_eq!(w[0], 0.995);
    }

    #[test]
    fn non_finite_gradient_is_reported_with_step() {
        let mut w = [1.0, 2.0];
        let mut opt = Optimizer::<f64>::new(OptKind::Sgd, OptHyper::default(), 2).unwrap();
        match opt.step(&mut w, &[1.0, f64::NAN], 0.1) {
            Err(CoreError::NonFiniteGradient { step, index }) => {
                assert_eq!((step, index), (1, 1));
            }
            other => panic!("expected non-finite gradient error, got {other:?}"),
        }
        assert_eq!(opt.step_count(), 0, "failed step must not count");
    }

    #[test]
    fn zero_lr_is_identity_for_all_kinds() {
        for kind in [OptKind::Sgd, OptKind::MomentumSgd, OptKind::AdamW] {
            let mut w = [0.4, -1.2, 3.0];
            let orig = w;
            let mut opt = Optimizer::<f64>::new(kind, OptHyper::default(), 3).unwrap();
            for _ in 0..3 {
                opt.step(&mut w, &[0.5, -0.25, 1.0], 0.0).unwrap();
            }
            assert_eq!(w, orig, "{kind:?}");
        }
    }

    #[test]
    fn sgd_update_scales_linearly_with_gradient() {
        // power-of-two factors keep float scaling exact
        for c in [0.5f64, 2.0, 4.0] {
            let g = [0.3, -0.7, 1.1];
            let mut w1 = [0.0; 3];
            let mut w2 = [0.0; 3];
            let gc: Vec<f64> = g.iter().map(|v| v * c).collect();
            sgd(0.0).step(&mut w1, &g, 0.25).unwrap();
            let mut o2 = sgd(0.0);
            o2.step(&mut w2, &gc, 0.25).unwrap();
            for i in 0..3 {
                assert_eq!(w2[i], w1[i] * c);
            }
        }
    }

    #[test]
    fn adamw_first_step_direction_ignores_gradient_scale() {
        let g = [0.3, -0.7, 1.1, -0.001];
        for c in [0.1f64, 1.0, 13.7] {
            let mut w = [0.0; 4];
            let mut opt = Optimizer::<f64>::new(OptKind::AdamW, OptHyper::default(), 4).unwrap();
            let gc: Vec<f64> = g.iter().map(|v| v * c).collect();
            opt.step(&mut w, &gc, 0.1).unwrap();
            for (wi, gi) in w.iter().zip(&g) {
                assert_eq!(wi.signum(), -gi.signum(), "c={c}");
            }
        }
    }

    #[test]
    fn step_count_increments_by_one() {
        let mut w = [0.0];
        let mut opt = Optimizer::<f64>::new(OptKind::AdamW, OptHyper::default(), 1).unwrap();
        for want in 1..=5u64 {
            opt.step(&mut w, &[0.1], 0.01).unwrap();
            assert_eq!(opt.step_count(), want);
        }
    }
}
