//! Differentiable building blocks: tensors, parameter sets, primitive
//! forward/backward pairs, Adam, and a finite-difference gradient checker.

mod adam;
mod gradcheck;
pub mod ops;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_filtered, relative_error, GradCheckReport};
pub use ops::Mode;
pub use tensor::{ParamId, ParameterSet, Tensor};
