//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records ops as they are evaluated; [`Graph::backward`] walks the
//! tape in reverse from a scalar loss. Parameters live in a [`ParamSet`] that
//! the graph borrows, so one parameter set can drive many tapes at once.

pub mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use graph::{horizon_weights, Gradients, Graph, Var};
pub use optim::Sgd;
pub use params::{glorot_bound, ParamId, ParamSet, CHECKPOINT_MAGIC};
pub use tensor::Tensor;
