//! Reverse-mode automatic differentiation over dense NHWC arrays.

mod gradcheck;
mod kernels;
mod scalar;
mod tape;
mod tensor;

pub use gradcheck::gradient_check;
pub(crate) use gradcheck::{compare as compare_gradients, project as project_output};
pub use kernels::{window_extent, ConvSpec};
pub use scalar::Scalar;
pub use tape::{NormMode, Tape, Var};
pub use tensor::Tensor;

