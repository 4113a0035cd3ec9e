//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Every op's derivative rule is written with other tensor ops, so gradients
//! computed with `create_graph = true` can be differentiated again. The
//! critic's gradient penalty depends on this.

mod conv;
mod graph;
mod ops;
mod resample;
mod scalar;

pub use graph::{grad, is_grad_enabled, no_grad, Tensor};
pub use scalar::Scalar;

#[cfg(test)]
mod tests;
