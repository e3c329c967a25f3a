//! Minimal network engine: forward evaluation, exact input derivatives,
//! reverse-mode gradients over composite losses, and Adam.

mod adam;
mod bind;
mod graph;
mod mlp;
mod params;

pub use adam::AdamState;
pub use bind::{FixedRate, FrozenMlp, GraphMlp, GraphScalar, RateNode, TimeNet};
pub use graph::{loss_gradient, sigmoid, Graph, NodeId};
pub use mlp::{normalize_time, Mlp, TrainableScalar};
pub use params::ParamVector;

/// Network output at time `t`.
pub fn mlp_forward(net: &Mlp, t: f64) -> f64 {
    net.forward(t)
}

/// Exact d(output)/dt, by forward-mode differentiation (not a finite difference).
pub fn mlp_input_derivative(net: &Mlp, t: f64) -> f64 {
    net.input_derivative(t)
}
