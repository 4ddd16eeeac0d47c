//! Dense `f64` tensors with tape-based reverse-mode differentiation, plus
//! the optimizer pieces the trainer needs.

mod optim;
mod tape;
mod tensor;

pub use optim::{adam_step, cosine_lr, dropout_mask, AdamState, CosineSchedule, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tape::{EdgeIndex, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::softmax_in_place;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("schedule step {step} outside 0..={total}")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("invalid tensor data: {0}")]
    InvalidData(String),
}
