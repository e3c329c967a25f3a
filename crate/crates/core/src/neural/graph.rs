//! Static scalar expression graph with reverse-mode differentiation.
//!
//! A graph is built once per training phase (the data and collocation points
//! are fixed), then re-evaluated every epoch against the current parameter
//! vector. Time derivatives of networks are expressed as ordinary graph nodes
//! (forward-mode tangents built from the same parameter nodes), so gradients
//! of losses containing dŷ/dt fall out of the single reverse sweep.

use crate::error::{Error, Result};

pub type NodeId = u32;

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param(u32),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Sigmoid(NodeId),
    Ln(NodeId),
    Sqr(NodeId),
    AddConst(NodeId, f64),
    MulConst(NodeId, f64),
    /// max(x, c); subgradient 0 at the boundary.
    MaxConst(NodeId, f64),
    /// Σ ws[i]·xs[i]
    Dot(Box<[NodeId]>, Box<[NodeId]>),
    Sum(Box<[NodeId]>),
}

pub struct Graph {
    ops: Vec<Op>,
    values: Vec<f64>,
    adjoints: Vec<f64>,
    n_params: usize,
}

impl Graph {
    pub fn new(n_params: usize) -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
            adjoints: Vec::new(),
            n_params,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    fn push(&mut self, op: Op, value: f64) -> NodeId {
        let id = self.ops.len() as NodeId;
        self.ops.push(op);
        self.values.push(value);
        self.adjoints.push(0.0);
        id
    }

    pub fn constant(&mut self, v: f64) -> NodeId {
        self.push(Op::Const, v)
    }

    pub fn param(&mut self, index: usize) -> NodeId {
        assert!(index < self.n_params, "param index out of range");
        self.push(Op::Param(index as u32), 0.0)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b), 0.0)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b), 0.0)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b), 0.0)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Div(a, b), 0.0)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Neg(a), 0.0)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sigmoid(a), 0.0)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Ln(a), 0.0)
    }

    pub fn sqr(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sqr(a), 0.0)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::AddConst(a, c), 0.0)
    }

    pub fn mul_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::MulConst(a, c), 0.0)
    }

    pub fn max_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::MaxConst(a, c), 0.0)
    }

    pub fn dot(&mut self, ws: &[NodeId], xs: &[NodeId]) -> NodeId {
        assert_eq!(ws.len(), xs.len());
        self.push(Op::Dot(ws.into(), xs.into()), 0.0)
    }

    pub fn sum(&mut self, xs: &[NodeId]) -> NodeId {
        self.push(Op::Sum(xs.into()), 0.0)
    }

    /// Mean of a list of nodes.
    pub fn mean(&mut self, xs: &[NodeId]) -> NodeId {
        let s = self.sum(xs);
        self.mul_const(s, 1.0 / xs.len() as f64)
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.values[id as usize]
    }

    /// Evaluate every node against `params`, in topological (insertion) order.
    pub fn forward(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params);
        let values = &mut self.values;
        for (idx, op) in self.ops.iter().enumerate() {
            let v = match op {
                Op::Const => values[idx],
                Op::Param(p) => params[*p as usize],
                Op::Add(a, b) => values[*a as usize] + values[*b as usize],
                Op::Sub(a, b) => values[*a as usize] - values[*b as usize],
                Op::Mul(a, b) => values[*a as usize] * values[*b as usize],
                Op::Div(a, b) => values[*a as usize] / values[*b as usize],
                Op::Neg(a) => -values[*a as usize],
                Op::Sigmoid(a) => sigmoid(values[*a as usize]),
                Op::Ln(a) => values[*a as usize].ln(),
                Op::Sqr(a) => {
                    let x = values[*a as usize];
                    x * x
                }
                Op::AddConst(a, c) => values[*a as usize] + c,
                Op::MulConst(a, c) => values[*a as usize] * c,
                Op::MaxConst(a, c) => values[*a as usize].max(*c),
                Op::Dot(ws, xs) => ws
                    .iter()
                    .zip(xs.iter())
                    .map(|(w, x)| values[*w as usize] * values[*x as usize])
                    .sum(),
                Op::Sum(xs) => xs.iter().map(|x| values[*x as usize]).sum(),
            };
            values[idx] = v;
        }
    }

    /// Reverse sweep from `root`, accumulating ∂root/∂param into `grad`.
    /// Call after `forward`.
    pub fn backward(&mut self, root: NodeId, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.n_params);
        grad.fill(0.0);
        self.adjoints.fill(0.0);
        self.adjoints[root as usize] = 1.0;
        for idx in (0..=root as usize).rev() {
            let adj = self.adjoints[idx];
            if adj == 0.0 {
                continue;
            }
            match &self.ops[idx] {
                Op::Const => {}
                Op::Param(p) => grad[*p as usize] += adj,
                Op::Add(a, b) => {
                    self.adjoints[*a as usize] += adj;
                    self.adjoints[*b as usize] += adj;
                }
                Op::Sub(a, b) => {
                    self.adjoints[*a as usize] += adj;
                    self.adjoints[*b as usize] -= adj;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.values[*a as usize], self.values[*b as usize]);
                    self.adjoints[*a as usize] += adj * vb;
                    self.adjoints[*b as usize] += adj * va;
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.values[*a as usize], self.values[*b as usize]);
                    self.adjoints[*a as usize] += adj / vb;
                    self.adjoints[*b as usize] -= adj * va / (vb * vb);
                }
                Op::Neg(a) => self.adjoints[*a as usize] -= adj,
                Op::Sigmoid(a) => {
                    let s = self.values[idx];
                    self.adjoints[*a as usize] += adj * s * (1.0 - s);
                }
                Op::Ln(a) => {
                    self.adjoints[*a as usize] += adj / self.values[*a as usize];
                }
                Op::Sqr(a) => {
                    self.adjoints[*a as usize] += adj * 2.0 * self.values[*a as usize];
                }
                Op::AddConst(a, _) => self.adjoints[*a as usize] += adj,
                Op::MulConst(a, c) => self.adjoints[*a as usize] += adj * c,
                Op::MaxConst(a, c) => {
                    if self.values[*a as usize] > *c {
                        self.adjoints[*a as usize] += adj;
                    }
                }
                Op::Dot(ws, xs) => {
                    for (w, x) in ws.iter().zip(xs.iter()) {
                        let (vw, vx) = (self.values[*w as usize], self.values[*x as usize]);
                        self.adjoints[*w as usize] += adj * vx;
                        self.adjoints[*x as usize] += adj * vw;
                    }
                }
                Op::Sum(xs) => {
                    for x in xs.iter() {
                        self.adjoints[*x as usize] += adj;
                    }
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Evaluate `root` and its full parameter gradient in one pass pair.
/// Reports the first non-finite gradient component by parameter index.
pub fn loss_gradient(
    graph: &mut Graph,
    root: NodeId,
    params: &[f64],
    grad: &mut [f64],
) -> Result<f64> {
    graph.forward(params);
    let loss = graph.value(root);
    graph.backward(root, grad);
    for (i, g) in grad.iter().enumerate() {
        if !g.is_finite() {
            return Err(Error::NonFinite {
                context: "loss gradient".into(),
                index: i,
            });
        }
    }
    Ok(loss)
}
