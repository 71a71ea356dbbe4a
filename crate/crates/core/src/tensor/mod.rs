//! Minimal reverse-mode automatic differentiation over dense tensors.

mod error;
mod gradcheck;
mod kernels;
mod params;
mod real;
mod tape;
#[allow(clippy::module_inception)]
mod tensor;

pub use error::TensorError;
pub use gradcheck::{gradcheck, GradcheckEntry, GradcheckOptions, GradcheckReport};
pub use params::ParamStore;
pub use real::Real;
pub use tape::{CustomOp, Gradients, Tape, Var};
pub use tensor::Tensor;
