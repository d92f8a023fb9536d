//! Drop-rate and learning-rate schedules.
//!
//! Drop rates are interpolated per iteration (time is a continuous epoch
//! count), never stepped per epoch. Every strategy is a pure function of
//! `(schedule, t, total_epochs)`.

use crate::error::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    None,
    Standard,
    Early,
    Late,
    Increasing,
    Decreasing,
    Annealed,
    Curriculum,
}

impl Strategy {
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        Ok(match s {
            "none" => Strategy::None,
            "standard" => Strategy::Standard,
            "early" => Strategy::Early,
            "late" => Strategy::Late,
            "increasing" => Strategy::Increasing,
            "decreasing" => Strategy::Decreasing,
            "annealed" => Strategy::Annealed,
            "curriculum" => Strategy::Curriculum,
            _ => return Err(CoreError::InvalidConfig(format!("unknown drop strategy '{s}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Standard => "standard",
            Strategy::Early => "early",
            Strategy::Late => "late",
            Strategy::Increasing => "increasing",
            Strategy::Decreasing => "decreasing",
            Strategy::Annealed => "annealed",
            Strategy::Curriculum => "curriculum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Constant,
    Linear,
    Cosine,
    Exponential,
}

impl Shape {
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        Ok(match s {
            "constant" => Shape::Constant,
            "linear" => Shape::Linear,
            "cosine" => Shape::Cosine,
            "exponential" => Shape::Exponential,
            _ => return Err(CoreError::InvalidConfig(format!("unknown drop shape '{s}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Constant => "constant",
            Shape::Linear => "linear",
            Shape::Cosine => "cosine",
            Shape::Exponential => "exponential",
        }
    }
}

/// Which regularizer the schedule drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DropTarget {
    #[default]
    Dropout,
    StochasticDepth,
}

impl DropTarget {
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        Ok(match s {
            "dropout" => DropTarget::Dropout,
            "stochastic_depth" => DropTarget::StochasticDepth,
            _ => return Err(CoreError::InvalidConfig(format!("unknown drop target '{s}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            DropTarget::Dropout => "dropout",
            DropTarget::StochasticDepth => "stochastic_depth",
        }
    }
}

/// Drop rate as a function of training time.
///
/// `window_epochs` is the early/late switch point E; it is ignored by the
/// full-length strategies. `curvature` only applies to the exponential
/// (curriculum) shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DropSchedule {
    pub strategy: Strategy,
    pub shape: Shape,
    pub p: f64,
    pub window_epochs: f64,
    pub curvature: f64,
}

impl DropSchedule {
    pub fn none() -> Self {
        DropSchedule {
            strategy: Strategy::None,
            shape: Shape::Constant,
            p: 0.0,
            window_epochs: 0.0,
            curvature: 0.0,
        }
    }

    pub fn standard(p: f64) -> Self {
        DropSchedule {
            strategy: Strategy::Standard,
            shape: Shape::Constant,
            p,
            window_epochs: 0.0,
            curvature: 0.0,
        }
    }

    pub fn early(shape: Shape, p: f64, window_epochs: f64) -> Self {
        DropSchedule {
            strategy: Strategy::Early,
            shape,
            p,
            window_epochs,
            curvature: 0.0,
        }
    }

    pub fn late(p: f64, window_epochs: f64) -> Self {
        DropSchedule {
            strategy: Strategy::Late,
            shape: Shape::Constant,
            p,
            window_epochs,
            curvature: 0.0,
        }
    }

    /// Rate at continuous epoch `t` of a `total_epochs`-epoch run.
    ///
    /// The caller derives `t` from the global iteration
    /// (`t = iteration / iterations_per_epoch`) so the rate moves every
    /// iteration.
    pub fn rate_at_epoch(&self, t: f64, total_epochs: f64) -> f64 {
        let p = self.p;
        let e = self.window_epochs;
        let rate = match self.strategy {
            Strategy::None => 0.0,
            Strategy::Standard => p,
            Strategy::Early => {
                if t >= e || e == 0.0 {
                    0.0
                } else {
                    match self.shape {
                        Shape::Constant => p,
                        Shape::Linear => p * (1.0 - t / e),
                        Shape::Cosine => p * 0.5 * (1.0 + (std::f64::consts::PI * t / e).cos()),
                        Shape::Exponential => p * (-self.curvature * t / e).exp(),
                    }
                }
            }
            Strategy::Late => {
                if t < e {
                    0.0
                } else {
                    p
                }
            }
            Strategy::Increasing => p * (t / total_epochs).clamp(0.0, 1.0),
            Strategy::Decreasing | Strategy::Annealed => p * (1.0 - (t / total_epochs).clamp(0.0, 1.0)),
            Strategy::Curriculum => p * (1.0 - (-self.curvature * t / total_epochs).exp()),
        };
        rate.clamp(0.0, p)
    }

    /// Same schedule parameterized by the fraction of training elapsed.
    pub fn rate_at_fraction(&self, epoch_fraction: f64, total_epochs: f64) -> f64 {
        self.rate_at_epoch(epoch_fraction * total_epochs, total_epochs)
    }

    /// Check the schedule against a run length. Returns warnings (window
    /// outside the 1%-50% range that is known to work well); hard problems
    /// come back as one error listing everything wrong at once.
    pub fn validate(&self, total_epochs: f64) -> Result<Vec<String>, CoreError> {
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        if !(0.0..1.0).contains(&self.p) {
            errors.push(format!("rate {} outside [0, 1)", self.p));
        }
        if self.window_epochs < 0.0 {
            errors.push(format!("window_epochs {} is negative", self.window_epochs));
        }
        if self.window_epochs > total_epochs {
            errors.push(format!(
                "window_epochs {} exceeds total_epochs {}",
                self.window_epochs, total_epochs
            ));
        }
        let needs_curvature = matches!(self.strategy, Strategy::Curriculum)
            || (matches!(self.strategy, Strategy::Early) && matches!(self.shape, Shape::Exponential));
        if needs_curvature && !(self.curvature > 0.0) {
            errors.push("exponential shape requires a positive curvature".to_string());
        }
        let shape_ok = match self.strategy {
            Strategy::None | Strategy::Standard | Strategy::Late => {
                matches!(self.shape, Shape::Constant)
            }
            Strategy::Early => !matches!(self.shape, Shape::Exponential) || self.curvature > 0.0,
            Strategy::Increasing | Strategy::Decreasing | Strategy::Annealed => {
                matches!(self.shape, Shape::Linear)
            }
            Strategy::Curriculum => matches!(self.shape, Shape::Exponential),
        };
        if !shape_ok {
            errors.push(format!(
                "strategy '{}' does not support shape '{}'",
                self.strategy.name(),
                self.shape.name()
            ));
        }
        if matches!(self.strategy, Strategy::Early | Strategy::Late) {
            let lo = 0.01 * total_epochs;
            let hi = 0.50 * total_epochs;
            if self.window_epochs < lo || self.window_epochs > hi {
                warnings.push(format!(
                    "window of {} epochs is outside 1%-50% of {} total epochs",
                    self.window_epochs, total_epochs
                ));
            }
        }
        if errors.is_empty() {
            Ok(warnings)
        } else {
            Err(CoreError::InvalidSchedule(errors))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrDecay {
    Cosine,
    Constant,
}

impl LrDecay {
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        Ok(match s {
            "cosine" => LrDecay::Cosine,
            "constant" => LrDecay::Constant,
            _ => return Err(CoreError::InvalidConfig(format!("unknown lr decay '{s}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LrDecay::Cosine => "cosine",
            LrDecay::Constant => "constant",
        }
    }
}

/// Learning-rate schedule: linear warmup to an effective base rate, then
/// cosine decay to zero (or constant). The base rate is scaled linearly
/// with the batch size against a reference batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LrConfig {
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub decay: LrDecay,
    pub reference_batch: usize,
    pub batch: usize,
}

impl LrConfig {
    pub fn effective_base(&self) -> f64 {
        self.base_lr * self.batch as f64 / self.reference_batch as f64
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.base_lr > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "base_lr must be positive, got {}",
                self.base_lr
            )));
        }
        if self.warmup_epochs > self.total_epochs {
            return Err(CoreError::InvalidConfig(format!(
                "warmup_epochs {} exceeds total_epochs {}",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if self.reference_batch == 0 || self.batch == 0 || self.total_epochs == 0 {
            return Err(CoreError::InvalidConfig(
                "batch sizes and total_epochs must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Learning rate at a global iteration.
    pub fn lr_at(&self, global_iteration: u64, iterations_per_epoch: u64) -> f64 {
        let base = self.effective_base();
        let warmup_iters = self.warmup_epochs as u64 * iterations_per_epoch;
        let total_iters = self.total_epochs as u64 * iterations_per_epoch;
        if global_iteration < warmup_iters {
            return base * global_iteration as f64 / warmup_iters as f64;
        }
        match self.decay {
            LrDecay::Constant => base,
            LrDecay::Cosine => {
                let span = total_iters.saturating_sub(warmup_iters);
                if span == 0 {
                    return base;
                }
                let progress = (global_iteration - warmup_iters) as f64 / span as f64;
                base * 0.5 * (1.0 + (std::f64::consts::PI * progress.clamp(0.0, 1.0)).cos())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, prop_assert_eq, proptest};

    #[test]
    fn early_linear_endpoints() {
        let s = DropSchedule::early(Shape::Linear, 0.1, 50.0);
        assert_eq!(s.rate_at_epoch(0.0, 400.0), 0.1);
        assert_eq!(s.rate_at_epoch(25.0, 400.0), 0.05);
        assert_eq!(s.rate_at_epoch(50.0, 400.0), 0.0);
        assert_eq!(s.rate_at_epoch(399.0, 400.0), 0.0);
    }

    #[test]
    fn early_constant_and_cosine() {
        let c = DropSchedule::early(Shape::Constant, 0.2, 20.0);
        assert_eq!(c.rate_at_epoch(0.0, 100.0), 0.2);
        assert_eq!(c.rate_at_epoch(19.999, 100.0), 0.2);
        assert_eq!(c.rate_at_epoch(20.0, 100.0), 0.0);
        let k = DropSchedule::early(Shape::Cosine, 0.2, 50.0);
        assert_eq!(k.rate_at_epoch(0.0, 100.0), 0.2);
        assert!((k.rate_at_epoch(25.0, 100.0) - 0.1).abs() < 1e-15);
        assert_eq!(k.rate_at_epoch(50.0, 100.0), 0.0);
    }

    #[test]
    fn late_switches_on_at_window() {
        let s = DropSchedule::late(0.4, 50.0);
        assert_eq!(s.rate_at_epoch(10.0, 300.0), 0.0);
        assert_eq!(s.rate_at_epoch(50.0, 300.0), 0.4);
        assert_eq!(s.rate_at_epoch(299.0, 300.0), 0.4);
    }

    #[test]
    fn standard_and_none_are_flat() {
        let s = DropSchedule::standard(0.1);
        for t in [0.0, 1.0, 123.4, 600.0] {
            assert_eq!(s.rate_at_epoch(t, 600.0), 0.1);
        }
        let n = DropSchedule::none();
        for t in [0.0, 300.0] {
            assert_eq!(n.rate_at_epoch(t, 600.0), 0.0);
        }
    }

    #[test]
    fn increasing_decreasing_and_curriculum() {
        let inc = DropSchedule {
            strategy: Strategy::Increasing,
            shape: Shape::Linear,
            p: 0.3,
            window_epochs: 0.0,
            curvature: 0.0,
        };
        assert_eq!(inc.rate_at_epoch(0.0, 100.0), 0.0);
        assert_eq!(inc.rate_at_epoch(100.0, 100.0), 0.3);
        let dec = DropSchedule {
            strategy: Strategy::Decreasing,
            ..inc.clone()
        };
        assert_eq!(dec.rate_at_epoch(0.0, 100.0), 0.3);
        assert_eq!(dec.rate_at_epoch(100.0, 100.0), 0.0);
        let ann = DropSchedule {
            strategy: Strategy::Annealed,
            ..inc.clone()
        };
        assert_eq!(ann.rate_at_epoch(30.0, 100.0), dec.rate_at_epoch(30.0, 100.0));
        let cur = DropSchedule {
            strategy: Strategy::Curriculum,
            shape: Shape::Exponential,
            p: 0.3,
            window_epochs: 0.0,
            curvature: 5.0,
        };
        assert_eq!(cur.rate_at_epoch(0.0, 100.0), 0.0);
        let almost = cur.rate_at_epoch(100.0, 100.0);
        assert!(almost > 0.29 && almost < 0.3);
    }

    #[test]
    fn validation_examples() {
        // paper-scale early window: ok, no warning
        let ok = DropSchedule::early(Shape::Linear, 0.1, 50.0);
        assert!(ok.validate(600.0).unwrap().is_empty());
        // window exceeding training: error
        let long = DropSchedule::early(Shape::Linear, 0.1, 700.0);
        assert!(matches!(long.validate(600.0), Err(CoreError::InvalidSchedule(_))));
        // rate bound
        let bad = DropSchedule::standard(1.0);
        assert!(bad.validate(600.0).is_err());
        // tiny window: warning, not error
        let tiny = DropSchedule::early(Shape::Linear, 0.1, 1.0);
        assert_eq!(tiny.validate(600.0).unwrap().len(), 1);
        // curriculum without curvature: error
        let cur = DropSchedule {
            strategy: Strategy::Curriculum,
            shape: Shape::Exponential,
            p: 0.1,
            window_epochs: 0.0,
            curvature: 0.0,
        };
        assert!(cur.validate(600.0).is_err());
        // shape/strategy mismatch caught up front, not mid-training
        let mism = DropSchedule {
            strategy: Strategy::Late,
            shape: Shape::Cosine,
            p: 0.1,
            window_epochs: 50.0,
            curvature: 0.0,
        };
        assert!(mism.validate(600.0).is_err());
    }

    #[test]
    fn lr_warmup_end_hits_effective_base() {
        let lr = LrConfig {
            base_lr: 4e-3,
            warmup_epochs: 10,
            total_epochs: 100,
            decay: LrDecay::Cosine,
            reference_batch: 4096,
            batch: 4096,
        };
        let ipe = 7u64;
        assert_eq!(lr.lr_at(10 * ipe, ipe), 4e-3);
        assert_eq!(lr.lr_at(0, ipe), 0.0);
        // last iteration is within one cosine step of zero
        let last = lr.lr_at(100 * ipe - 1, ipe);
        let step = 4e-3 * 0.5 * std::f64::consts::PI / (90 * ipe) as f64;
        assert!(last <= 2.0 * step + 1e-12, "last lr {last}");
    }

    #[test]
    fn batch_scaling_is_linear() {
        let lr = LrConfig {
            base_lr: 4e-3,
            warmup_epochs: 0,
            total_epochs: 10,
            decay: LrDecay::Constant,
            reference_batch: 4096,
            batch: 8192,
        };
        assert_eq!(lr.effective_base(), 8e-3);
        assert_eq!(lr.lr_at(5, 10), 8e-3);
    }

    #[test]
    fn warmup_longer_than_run_is_rejected() {
        let lr = LrConfig {
            base_lr: 1e-3,
            warmup_epochs: 20,
            total_epochs: 10,
            decay: LrDecay::Cosine,
            reference_batch: 64,
            batch: 64,
        };
        assert!(lr.validate().is_err());
    }

    proptest! {
        // rate is always within [0, p], and a pure function of its inputs
        #[test]
        fn rate_stays_in_range(
            strat in 0usize..8,
            t in 0.0f64..600.0,
            p in 0.0f64..0.95,
        ) {
            let (strategy, shape) = match strat {
                0 => (Strategy::None, Shape::Constant),
                1 => (Strategy::Standard, Shape::Constant),
                2 => (Strategy::Early, Shape::Linear),
                3 => (Strategy::Early, Shape::Cosine),
                4 => (Strategy::Late, Shape::Constant),
                5 => (Strategy::Increasing, Shape::Linear),
                6 => (Strategy::Decreasing, Shape::Linear),
                _ => (Strategy::Curriculum, Shape::Exponential),
            };
            let s = DropSchedule { strategy, shape, p, window_epochs: 50.0, curvature: 5.0 };
            let r = s.rate_at_epoch(t, 600.0);
            prop_assert!((0.0..=p.max(0.0)).contains(&r), "rate {} for p {}", r, p);
            prop_assert_eq!(r.to_bits(), s.rate_at_epoch(t, 600.0).to_bits());
        }

        // early is identically zero past its window; late before it
        #[test]
        fn early_late_windows_are_hard(t in 0.0f64..600.0, p in 0.01f64..0.9) {
            let early = DropSchedule::early(Shape::Cosine, p, 50.0);
            let late = DropSchedule::late(p, 50.0);
            if t >= 50.0 {
                prop_assert_eq!(early.rate_at_epoch(t, 600.0), 0.0);
                prop_assert_eq!(late.rate_at_epoch(t, 600.0), p);
            } else {
                prop_assert_eq!(late.rate_at_epoch(t, 600.0), 0.0);
            }
        }

        // linear increasing/decreasing mirror each other
        #[test]
        fn linear_mirror_symmetry(t in 0.0f64..100.0, p in 0.0f64..0.9) {
            let inc = DropSchedule {
                strategy: Strategy::Increasing, shape: Shape::Linear,
                p, window_epochs: 0.0, curvature: 0.0,
            };
            let dec = DropSchedule { strategy: Strategy::Decreasing, ..inc.clone() };
            let a = inc.rate_at_epoch(t, 100.0);
            let b = dec.rate_at_epoch(100.0 - t, 100.0);
            prop_assert!((a - b).abs() <= 1e-15, "inc {} vs mirrored dec {}", a, b);
        }
    }
}
