//! Dense tensors, reverse-mode gradients, optimizers and the learning-rate schedule.

mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::{adam_step, cosine_warmup_lr, sgd_step, AdamConfig, AdamState};
pub use params::{GroupRates, ParamGroup, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Storage precision. 64-bit unless the `f32` feature is enabled.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} does not support shape {shape:?}")]
    RankMismatch { op: &'static str, shape: Vec<usize> },
    #[error("index out of bounds in {op}")]
    IndexOutOfBounds { op: &'static str },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("backward root must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("variable does not belong to this tape")]
    ForeignVar,
}
