//! Dense tensors, define-by-run reverse-mode differentiation and seeded
//! random number generation.

mod gemm;
mod rng;
mod tape;
mod tensor;

pub use rng::{Rng, Stream};
pub use tape::{check_gradient, Gradients, Tape, Var};
pub use tensor::Tensor;
