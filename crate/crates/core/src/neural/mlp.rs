//! Small feedforward networks with a scalar time input and scalar output:
//! sigmoid hidden layers, affine head. Parameters are stored flat per layer
//! as the weight matrix (row-major) followed by the bias vector.

use crate::error::{Error, Result};
use crate::neural::graph::sigmoid;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer dimensions including input and output, e.g. [1, 50, 50, 50, 50, 1].
    dims: Vec<usize>,
    params: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights. First-hidden-layer biases are set so the unit
    /// centers spread evenly over the normalized input range [0, 1] (with a
    /// scalar input, all-zero biases leave every unit centered at 0 and the
    /// net stuck near-linear for hundreds of epochs); deeper biases are zero.
    pub fn glorot<R: Rng>(hidden: &[usize], rng: &mut R) -> Self {
        assert!(!hidden.is_empty(), "need at least one hidden layer");
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(1);
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut params = Vec::new();
        for (layer, w) in dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let weight_base = params.len();
            for _ in 0..n_in * n_out {
                params.push(rng.gen_range(-limit..limit));
            }
            for j in 0..n_out {
                if layer == 0 && n_out > 1 {
                    // Center unit j at c_j: sigmoid(w·t + b) inflects where
                    // t = −b/w, so pick b = −w·c_j.
                    let c = j as f64 / (n_out - 1) as f64;
                    params.push(-params[weight_base + j] * c);
                } else {
                    params.push(0.0);
                }
            }
        }
        Self { dims, params }
    }

    pub fn from_params(dims: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        let expect: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if dims.len() < 3 || dims[0] != 1 || *dims.last().unwrap() != 1 {
            return Err(Error::Shape(format!("bad mlp dims {dims:?}")));
        }
        if params.len() != expect {
            return Err(Error::Shape(format!(
                "mlp wants {expect} params, got {}",
                params.len()
            )));
        }
        Ok(Self { dims, params })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.params.len());
        self.params.copy_from_slice(params);
    }

    /// Network output at (normalized) time `t`.
    pub fn forward(&self, t: f64) -> f64 {
        let mut acts = vec![t];
        let mut offset = 0;
        let n_layers = self.dims.len() - 1;
        for (layer, w) in self.dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let mut next = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let mut z = biases[j];
                for (k, a) in acts.iter().enumerate() {
                    z += weights[j * n_in + k] * a;
                }
                next.push(if layer + 1 < n_layers { sigmoid(z) } else { z });
            }
            acts = next;
        }
        acts[0]
    }

    /// Exact d(forward)/dt via forward-mode dual numbers.
    pub fn input_derivative(&self, t: f64) -> f64 {
        let mut vals = vec![t];
        let mut tans = vec![1.0];
        let mut offset = 0;
        let n_layers = self.dims.len() - 1;
        for (layer, w) in self.dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let mut next_vals = Vec::with_capacity(n_out);
            let mut next_tans = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let mut z = biases[j];
                let mut dz = 0.0;
                for k in 0..n_in {
                    z += weights[j * n_in + k] * vals[k];
                    dz += weights[j * n_in + k] * tans[k];
                }
                if layer + 1 < n_layers {
                    let s = sigmoid(z);
                    next_vals.push(s);
                    next_tans.push(s * (1.0 - s) * dz);
                } else {
                    next_vals.push(z);
                    next_tans.push(dz);
                }
            }
            vals = next_vals;
            tans = next_tans;
        }
        tans[0]
    }
}

/// A scalar trainable parameter squashed to (0,1) through a sigmoid,
/// used for the rate estimates β̂ and γ̂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainableScalar {
    pub raw: f64,
}

impl TrainableScalar {
    pub fn new(raw: f64) -> Self {
        Self { raw }
    }

    /// Initialize so that `value()` equals `target` ∈ (0,1).
    pub fn from_value(target: f64) -> Self {
        assert!(target > 0.0 && target < 1.0);
        Self {
            raw: (target / (1.0 - target)).ln(),
        }
    }

    pub fn value(&self) -> f64 {
        sigmoid(self.raw)
    }
}

/// t / window_end ∈ [0, 1].
pub fn normalize_time(t: f64, window_end: f64) -> Result<f64> {
    if window_end <= 0.0 {
        return Err(Error::domain(format!(
            "window_end must be positive, got {window_end}"
        )));
    }
    if !(0.0..=window_end).contains(&t) {
        return Err(Error::domain(format!("t={t} outside [0, {window_end}]")));
    }
    Ok(t / window_end)
}
