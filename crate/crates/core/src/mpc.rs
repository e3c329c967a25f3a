//! Finite-horizon optimal control: minimize q₁‖S−S*‖² + q₂‖u‖² over the
//! Euler rollout, box-constrained controls, infection cap. Solved by direct
//! single shooting — the controls are the decision variables, rollout
//! gradients come from the expression graph, and projected Adam runs from
//! three deterministic starts.

use crate::error::{Error, Result};
use crate::neural::{loss_gradient, AdamState, Graph, NodeId};
use crate::sir::{euler_step, SirParams, SirState};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Weight of the quadratic infection-cap penalty. The cap is hard-first in
/// spirit: when the penalized optimum satisfies it, the solution is reported
/// optimal; otherwise it is the relaxed solution.
const CAP_PENALTY: f64 = 1e6;

const MULTI_STARTS: usize = 3;
const ITERATIONS: usize = 2000;
const INITIAL_LR: f64 = 0.02;
const LR_DECAY_EVERY: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Prediction horizon N_p in sampling periods.
    pub horizon: usize,
    /// Weight on the susceptible-target tracking term.
    pub q1: f64,
    /// Weight on control effort.
    pub q2: f64,
    pub u_max: f64,
    /// Infection cap I*_max on predicted states.
    pub i_max_star: f64,
    /// Herd-immunity susceptible target S*.
    pub s_star: f64,
    /// Move blocking: each decision variable spans this many consecutive
    /// steps, so the planned control is piecewise-constant over blocks.
    /// Matches a closed loop that holds the applied control for a multi-day
    /// control period; 1 recovers fully free per-step controls.
    #[serde(default = "default_hold_steps")]
    pub hold_steps: usize,
}

fn default_hold_steps() -> usize {
    1
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::config("mpc horizon must be >= 1"));
        }
        if !(self.u_max > 0.0 && self.u_max <= 1.0) {
            return Err(Error::config(format!("u_max={} outside (0,1]", self.u_max)));
        }
        if !(self.i_max_star > 0.0 && self.i_max_star <= 1.0) {
            return Err(Error::config(format!(
                "i_max_star={} outside (0,1]",
                self.i_max_star
            )));
        }
        if !(self.s_star > 0.0 && self.s_star < 1.0) {
            return Err(Error::config(format!("s_star={} outside (0,1)", self.s_star)));
        }
        if !(self.q1 >= 0.0 && self.q2 >= 0.0) {
            return Err(Error::config("q1 and q2 must be nonnegative"));
        }
        if self.hold_steps < 1 {
            return Err(Error::config("hold_steps must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverStatus {
    /// All predicted infected states satisfy the cap.
    Optimal,
    /// Cap infeasible at the penalized optimum; best relaxed solution returned.
    Relaxed,
    /// No usable solution; apply no control.
    Failed,
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::Relaxed => "relaxed",
            SolverStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub controls: Vec<f64>,
    /// Euler rollout of `controls` from the given initial state, including it;
    /// equals `predict(x0, params, &controls)` bit for bit.
    pub predicted: Vec<SirState>,
    /// Tracking-plus-effort objective of the returned controls (no penalty).
    pub objective: f64,
    pub status: SolverStatus,
}

/// Pure Euler rollout; returns states x_k..x_{k+n}.
pub fn predict(x0: SirState, params: SirParams, controls: &[f64]) -> Result<Vec<SirState>> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0);
    let mut current = x0;
    for (j, &u) in controls.iter().enumerate() {
        current = euler_step(current, params, u).map_err(|e| Error::Unstable {
            step: j,
            detail: e.to_string(),
        })?;
        states.push(current);
    }
    Ok(states)
}

/// Renormalize a near-simplex state estimate; reject anything further than
/// 1e-6 from the simplex.
fn normalize_state(x0: SirState) -> Result<SirState> {
    let sum = x0.s + x0.i + x0.r;
    if !sum.is_finite() || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::config(format!(
            "initial state sums to {sum}, not renormalizable"
        )));
    }
    SirState::new(x0.s / sum, x0.i / sum, x0.r / sum)
}

fn n_blocks(cfg: &MpcConfig) -> usize {
    cfg.horizon.div_ceil(cfg.hold_steps)
}

/// Penalized rollout objective as an expression graph over the control
/// decision variables (one per hold block).
fn build_objective(g: &mut Graph, x0: SirState, params: SirParams, cfg: &MpcConfig) -> NodeId {
    let np = cfg.horizon;
    let blocks: Vec<NodeId> = (0..n_blocks(cfg)).map(|j| g.param(j)).collect();
    let u: Vec<NodeId> = (0..np).map(|j| blocks[j / cfg.hold_steps]).collect();
    let mut s = g.constant(x0.s);
    let mut i = g.constant(x0.i);
    let mut terms = Vec::with_capacity(3 * np);
    for &uj in &u {
        let is = g.mul(i, s);
        let bis = g.mul_const(is, params.beta);
        let s_next = g.sub(s, bis);
        // I' = I + βSI − γI − uI
        let gi = g.mul_const(i, params.gamma);
        let ui = g.mul(uj, i);
        let t = g.add(i, bis);
        let t = g.sub(t, gi);
        let i_next = g.sub(t, ui);

        let ds = g.add_const(s_next, -cfg.s_star);
        let ds2 = g.sqr(ds);
        terms.push(g.mul_const(ds2, cfg.q1));
        let u2 = g.sqr(uj);
        terms.push(g.mul_const(u2, cfg.q2));
        let over = g.add_const(i_next, -cfg.i_max_star);
        let pos = g.max_const(over, 0.0);
        let pen = g.sqr(pos);
        terms.push(g.mul_const(pen, CAP_PENALTY));

        s = s_next;
        i = i_next;
    }
    g.sum(&terms)
}

/// Plain objective and cap feasibility of a control sequence, from the exact
/// Euler rollout.
fn evaluate(
    x0: SirState,
    params: SirParams,
    cfg: &MpcConfig,
    controls: &[f64],
) -> Result<(Vec<SirState>, f64, bool)> {
    let predicted = predict(x0, params, controls)?;
    let mut obj = 0.0;
    let mut feasible = true;
    for (j, &u) in controls.iter().enumerate() {
        let ds = predicted[j + 1].s - cfg.s_star;
        obj += cfg.q1 * ds * ds + cfg.q2 * u * u;
        if predicted[j + 1].i > cfg.i_max_star {
            feasible = false;
        }
    }
    Ok((predicted, obj, feasible))
}

/// Projected-Adam descent on the penalized objective from one start value.
/// Returns the best (lowest penalized objective) iterate seen.
fn descend(
    g: &mut Graph,
    root: NodeId,
    np: usize,
    start: f64,
    u_max: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut u = vec![start; np];
    let mut grad = vec![0.0; np];
    let mut adam = AdamState::new(np, INITIAL_LR);
    g.forward(&u);
    let mut best = u.clone();
    let mut best_val = g.value(root);
    for iter in 0..ITERATIONS {
        if iter > 0 && iter % LR_DECAY_EVERY == 0 {
            adam.lr *= 0.5;
        }
        loss_gradient(g, root, &u, &mut grad)?;
        adam.step(&mut u, &grad, None)?;
        for v in u.iter_mut() {
            *v = v.clamp(0.0, u_max);
        }
        g.forward(&u);
        let val = g.value(root);
        if val < best_val {
            best_val = val;
            best.copy_from_slice(&u);
        }
    }
    Ok((best, best_val))
}

pub fn solve_mpc(x0: SirState, params: SirParams, cfg: &MpcConfig) -> Result<MpcSolution> {
    cfg.validate()?;
    SirParams::new(params.beta, params.gamma)?;
    let x0 = normalize_state(x0)?;

    let mut g = Graph::new(n_blocks(cfg));
    let root = build_objective(&mut g, x0, params, cfg);

    let starts = [0.0, cfg.u_max / 2.0, cfg.u_max];
    debug_assert_eq!(starts.len(), MULTI_STARTS);
    let mut winner: Option<(Vec<f64>, f64)> = None;
    for &start in &starts {
        match descend(&mut g, root, n_blocks(cfg), start, cfg.u_max) {
            Ok((u, val)) => {
                // Strict improvement keeps the earliest start on ties.
                if winner.as_ref().map_or(true, |(_, w)| val < *w) {
                    winner = Some((u, val));
                }
            }
            Err(_) => continue,
        }
    }

    let Some((blocks, _)) = winner else {
        return Ok(MpcSolution {
            controls: vec![0.0; cfg.horizon],
            predicted: Vec::new(),
            objective: f64::INFINITY,
            status: SolverStatus::Failed,
        });
    };

    let controls: Vec<f64> = (0..cfg.horizon).map(|j| blocks[j / cfg.hold_steps]).collect();
    match evaluate(x0, params, cfg, &controls) {
        Ok((predicted, objective, feasible)) => Ok(MpcSolution {
            controls,
            predicted,
            objective,
            status: if feasible {
                SolverStatus::Optimal
            } else {
                SolverStatus::Relaxed
            },
        }),
        Err(_) => Ok(MpcSolution {
            controls: vec![0.0; cfg.horizon],
            predicted: Vec::new(),
            objective: f64::INFINITY,
            status: SolverStatus::Failed,
        }),
    }
}
