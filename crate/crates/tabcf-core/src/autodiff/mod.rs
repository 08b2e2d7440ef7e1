//! Reverse-mode automatic differentiation on dense `f64` tensors.
//!
//! The design is define-by-run: a [`Tape`] records each primitive as it
//! executes, and [`Tape::backward`] replays the records in reverse to push
//! vector-Jacobian products down to the leaves. Tensors are cheap handles
//! over shared storage, so the parameters a model hands to several ops
//! accumulate gradient contributions from every use.
//!
//! Everything is double precision and single threaded on purpose: the
//! models trained here are small, and exact run-to-run reproducibility is
//! worth far more than raw throughput.

mod sgd;
mod tape;
mod tensor;

pub use sgd::{clip_grad_norm, sgd_step, zero_grads};
pub use tape::Tape;
pub use tensor::Tensor;

pub(crate) use tape::argmax;

use std::fmt;

/// Errors surfaced by tensor construction, tape ops, and optimizer steps.
#[derive(Debug, Clone, PartialEq)]
pub enum AutodiffError {
    /// A binary op received shapes it cannot combine.
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// A shape argument is malformed for the op that received it.
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: &'static str,
    },
    /// An input value lies outside the op's domain (e.g. `log` of 0).
    DomainError { op: &'static str, value: f64 },
    /// `backward` was called on a tensor that is not a scalar.
    NonScalarLoss { shape: Vec<usize> },
    /// `backward` was called a second time on the same tape.
    TapeConsumed,
    /// An optimizer step found a parameter with no gradient.
    MissingGradient,
    /// The learning rate is negative or non-finite.
    InvalidLearningRate { value: f64 },
}

impl fmt::Display for AutodiffError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutodiffError::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: incompatible shapes {left:?} and {right:?}")
            }
            AutodiffError::InvalidShape { op, shape, reason } => {
                write!(f, "{op}: invalid shape {shape:?} ({reason})")
            }
            AutodiffError::DomainError { op, value } => {
                write!(f, "{op}: input {value} is outside the op's domain")
            }
            AutodiffError::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            AutodiffError::TapeConsumed => {
                write!(f, "tape already consumed by a previous backward call")
            }
            AutodiffError::MissingGradient => {
                write!(f, "parameter has no gradient; run backward first")
            }
            AutodiffError::InvalidLearningRate { value } => {
                write!(f, "learning rate must be finite and non-negative, got {value}")
            }
        }
    }
}

impl std::error::Error for AutodiffError {}
