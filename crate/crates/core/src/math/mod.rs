//! Dense tensors, a reverse-mode tape, and the Adam optimizer.

mod adam;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{ParamId, ParamSet};
pub use tape::{sigmoid, Activation, Elementwise, Gradients, Graph, Var, BCE_EPSILON};
pub use tensor::Tensor;
