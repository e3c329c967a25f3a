//! Bridges between concrete networks and the expression graph. A trainable
//! binding exposes parameter nodes so gradients flow; a frozen binding emits
//! plain constants, making the zero-gradient contract structural.

use crate::neural::graph::{Graph, NodeId};
use crate::neural::mlp::{Mlp, TrainableScalar};

/// A scalar-in scalar-out network viewed from the graph. `t` is the
/// normalized time, always a constant at graph-build time.
pub trait TimeNet {
    fn value(&self, g: &mut Graph, t: f64) -> NodeId;
    /// (value, d value / d normalized-t)
    fn value_and_tangent(&self, g: &mut Graph, t: f64) -> (NodeId, NodeId);
}

/// A rate parameter viewed from the graph.
pub trait RateNode {
    fn node(&self, g: &mut Graph) -> NodeId;
}

/// Trainable MLP: one Param node per weight, created once and shared across
/// every time point the loss touches.
pub struct GraphMlp {
    dims: Vec<usize>,
    param_nodes: Vec<NodeId>,
}

impl GraphMlp {
    /// `offset` is the network's position inside the flat parameter vector.
    pub fn bind(g: &mut Graph, dims: &[usize], offset: usize) -> Self {
        let count: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let param_nodes = (0..count).map(|i| g.param(offset + i)).collect();
        Self {
            dims: dims.to_vec(),
            param_nodes,
        }
    }
}

impl TimeNet for GraphMlp {
    fn value(&self, g: &mut Graph, t: f64) -> NodeId {
        let mut acts = vec![g.constant(t)];
        let mut offset = 0;
        let n_layers = self.dims.len() - 1;
        for (layer, w) in self.dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.param_nodes[offset..offset + n_in * n_out];
            let biases = &self.param_nodes[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let mut next = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let dot = g.dot(&weights[j * n_in..(j + 1) * n_in], &acts);
                let z = g.add(dot, biases[j]);
                next.push(if layer + 1 < n_layers { g.sigmoid(z) } else { z });
            }
            acts = next;
        }
        acts[0]
    }

    fn value_and_tangent(&self, g: &mut Graph, t: f64) -> (NodeId, NodeId) {
        let mut vals = vec![g.constant(t)];
        let mut tans = vec![g.constant(1.0)];
        let mut offset = 0;
        let n_layers = self.dims.len() - 1;
        for (layer, w) in self.dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.param_nodes[offset..offset + n_in * n_out];
            let biases = &self.param_nodes[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let mut next_vals = Vec::with_capacity(n_out);
            let mut next_tans = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let row = &weights[j * n_in..(j + 1) * n_in];
                let dot = g.dot(row, &vals);
                let z = g.add(dot, biases[j]);
                let dz = g.dot(row, &tans);
                if layer + 1 < n_layers {
                    let s = g.sigmoid(z);
                    let s2 = g.sqr(s);
                    let ds = g.sub(s, s2); // σ'(z) = σ(z)(1 − σ(z))
                    next_vals.push(s);
                    next_tans.push(g.mul(ds, dz));
                } else {
                    next_vals.push(z);
                    next_tans.push(dz);
                }
            }
            vals = next_vals;
            tans = next_tans;
        }
        (vals[0], tans[0])
    }
}

/// Frozen network: values and tangents enter the graph as constants, so no
/// gradient can reach its parameters.
pub struct FrozenMlp<'a>(pub &'a Mlp);

impl TimeNet for FrozenMlp<'_> {
    fn value(&self, g: &mut Graph, t: f64) -> NodeId {
        g.constant(self.0.forward(t))
    }

    fn value_and_tangent(&self, g: &mut Graph, t: f64) -> (NodeId, NodeId) {
        (
            g.constant(self.0.forward(t)),
            g.constant(self.0.input_derivative(t)),
        )
    }
}

/// Trainable rate: sigmoid of a single raw parameter.
pub struct GraphScalar {
    param: NodeId,
}

impl GraphScalar {
    pub fn bind(g: &mut Graph, offset: usize) -> Self {
        Self {
            param: g.param(offset),
        }
    }
}

impl RateNode for GraphScalar {
    fn node(&self, g: &mut Graph) -> NodeId {
        g.sigmoid(self.param)
    }
}

/// Fixed rate, e.g. a known γ or a frozen estimate.
pub struct FixedRate(pub f64);

impl RateNode for FixedRate {
    fn node(&self, g: &mut Graph) -> NodeId {
        g.constant(self.0)
    }
}

impl RateNode for TrainableScalar {
    fn node(&self, g: &mut Graph) -> NodeId {
        g.constant(self.value())
    }
}
