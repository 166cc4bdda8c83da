//! Minimal reverse-mode differentiation for the convolutional network's layer set.

pub mod gradcheck;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, Differentiable, GradCheckConfig, GradCheckReport, TapeOp};
pub use ops::{ConvSpec, PoolSpec};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
