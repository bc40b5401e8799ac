//! Minimal NCHW tensor kernel with reverse-mode autodiff: exactly the layers
//! the edge networks need, plus SGD with gradient accumulation.

pub mod conv;
pub mod layers;
mod params;
mod scalar;
mod sgd;
mod tape;
mod tensor;
pub mod upsample;

pub use conv::ConvSpec;
pub use layers::{Conv2d, ResidualBlock, WeightInit};
pub use params::{ParamId, ParamStore, Parameter};
pub use scalar::Scalar;
pub use sgd::Sgd;
pub use tape::{sigmoid_scalar, Gradients, Tape, Var};
pub use tensor::{Shape, Tensor};
