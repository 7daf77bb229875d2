//! Dense tensors with define-by-run reverse-mode differentiation, 3D
//! convolution kernels and the neural-network building blocks used by the
//! volumetric autoencoder and classifier models.

pub mod element;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod nn;
pub mod parallel;
pub mod tape;
pub mod tensor;

pub use element::Element;
pub use error::{Result, TensorError};
pub use kernels::ConvGeometry;
pub use parallel::{parallel_enabled, set_parallel};
pub use tape::{softmax_along, BackwardStats, BatchStats, Tape, Var};
pub use tensor::Tensor;
