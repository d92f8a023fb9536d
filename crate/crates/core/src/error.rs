//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by the numeric core and the experiment harness.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch in {layer}: {detail}")]
    ShapeMismatch { layer: String, detail: String },

    #[error("non-finite loss at iteration {iteration}: {value}")]
    NonFiniteLoss { iteration: u64, value: f64 },

    #[error("non-finite gradient at step {step}, component {index}")]
    NonFiniteGradient { step: u64, index: usize },

    #[error("tape already consumed by backward")]
    TapeConsumed,

    #[error("loss is not deterministic under repeated evaluation; freeze masks first")]
    NondeterministicLoss,

    #[error("drop rate {rate} outside [0, 1)")]
    RateOutOfRange { rate: f64 },

    #[error("layer index {index} out of range for depth {depth}")]
    LayerIndexOutOfRange { index: usize, depth: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("gradient set needs at least {need} members, got {got}")]
    GradientSetTooSmall { need: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("schedule validation failed: {}", .0.join("; "))]
    InvalidSchedule(Vec<String>),

    #[error("dataset file error at offset {offset}: {detail}")]
    DatasetFormat { offset: u64, detail: String },

    #[error("checkpoint file error at offset {offset}: {detail}")]
    CheckpointFormat { offset: u64, detail: String },

    #[error("unsupported file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("missing CSV columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    #[error("empty series: nothing to plot")]
    EmptySeries,

    #[error("insufficient points for AUC window ending at {window_end}: need 2, got {got}")]
    InsufficientAucPoints { window_end: u64, got: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs/configuration rather than a
    /// failure at run time. The CLI maps these to exit code 1.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            CoreError::InvalidConfig(_)
                | CoreError::InvalidSchedule(_)
                | CoreError::RateOutOfRange { .. }
                | CoreError::LayerIndexOutOfRange { .. }
                | CoreError::GradientSetTooSmall { .. }
                | CoreError::MissingColumns(_)
                | CoreError::VersionMismatch { .. }
        )
    }
}
