//! Controlled SIR dynamics: the continuous model, its one-day Euler
//! discretization, trajectory simulation, and Poisson observation of the
//! infected proportion.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Tolerance below which a negative Euler component is treated as round-off
/// and clamped to zero. Anything more negative is genuine instability.
const UNDERFLOW_TOL: f64 = 1e-9;

/// Transmission rate β and recovery rate γ, per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirParams {
    pub beta: f64,
    pub gamma: f64,
}

impl SirParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::domain(format!("beta must be in (0,1), got {beta}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::domain(format!("gamma must be in (0,1), got {gamma}")));
        }
        Ok(Self { beta, gamma })
    }

    /// Basic reproduction number β/γ.
    pub fn r0(&self) -> f64 {
        self.beta / self.gamma
    }

    /// Herd-immunity susceptible threshold γ/β.
    pub fn herd_immunity_threshold(&self) -> f64 {
        self.gamma / self.beta
    }
}

/// Population proportions (S, I, R) on the unit simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

impl SirState {
    pub fn new(s: f64, i: f64, r: f64) -> Result<Self> {
        let state = Self { s, i, r };
        state.validate()?;
        Ok(state)
    }

    /// Early-epidemic initial condition: S(0) = 1 − I(0), R(0) = 0.
    pub fn early_epidemic(i0: f64) -> Result<Self> {
        Self::new(1.0 - i0, i0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("S", self.s), ("I", self.i), ("R", self.r)] {
            if !(-UNDERFLOW_TOL..=1.0 + UNDERFLOW_TOL).contains(&v) {
                return Err(Error::domain(format!("{name}={v} outside [0,1]")));
            }
        }
        let sum = self.s + self.i + self.r;
        if (sum - 1.0).abs() > UNDERFLOW_TOL {
            return Err(Error::domain(format!("S+I+R = {sum}, expected 1")));
        }
        Ok(())
    }
}

/// One day of Eq-4 Euler dynamics with control u ∈ [0,1].
pub fn euler_step(state: SirState, params: SirParams, u: f64) -> Result<SirState> {
    state.validate()?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(format!("control u={u} outside [0,1]")));
    }
    SirParams::new(params.beta, params.gamma)?;

    let SirState { s, i, r } = state;
    let next = SirState {
        s: (1.0 - params.beta * i) * s,
        i: (params.beta * s - (params.gamma + u) + 1.0) * i,
        r: (params.gamma + u) * i + r,
    };
    clamp_underflow(next)
}

fn clamp_underflow(mut st: SirState) -> Result<SirState> {
    for v in [&mut st.s, &mut st.i, &mut st.r] {
        if *v < 0.0 {
            if *v > -UNDERFLOW_TOL {
                *v = 0.0;
            } else {
                return Err(Error::domain(format!("component underflow: {v}")));
            }
        }
    }
    Ok(st)
}

/// A simulated state sequence with the controls that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Start day.
    pub t0: f64,
    /// Sampling period in days (fixed at 1).
    pub ts: f64,
    /// States indexed by day; `states.len() == controls.len() + 1`.
    pub states: Vec<SirState>,
    pub controls: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// Infected proportion at each day.
    pub fn infected(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.i).collect()
    }

    /// CSV rows `day,S,I,R,u,I_obs` at full double precision. The control
    /// column is empty on the last day; `obs`, when given, fills `I_obs`.
    pub fn to_csv(&self, obs: Option<&[f64]>) -> String {
        let mut out = String::from("day,S,I,R,u,I_obs\n");
        for (k, st) in self.states.iter().enumerate() {
            let u = self
                .controls
                .get(k)
                .map(|u| fmt_f64(*u))
                .unwrap_or_default();
            let o = obs
                .and_then(|o| o.get(k))
                .map(|v| fmt_f64(*v))
                .unwrap_or_default();
            out.push_str(&format!(
                "{k},{},{},{},{u},{o}\n",
                fmt_f64(st.s),
                fmt_f64(st.i),
                fmt_f64(st.r)
            ));
        }
        out
    }
}

/// Format with 17 significant digits, enough to round-trip an f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Roll Eq-4 forward `horizon` days. Reports the first step at which any
/// component leaves [0,1] beyond round-off.
pub fn simulate(
    initial: SirState,
    params: SirParams,
    controls: &[f64],
    horizon: usize,
) -> Result<Trajectory> {
    if controls.len() < horizon {
        return Err(Error::domain(format!(
            "need {horizon} controls, got {}",
            controls.len()
        )));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(initial);
    let mut current = initial;
    for (k, &u) in controls.iter().take(horizon).enumerate() {
        current = euler_step(current, params, u).map_err(|e| Error::Unstable {
            step: k,
            detail: e.to_string(),
        })?;
        states.push(current);
    }
    Ok(Trajectory {
        t0: 0.0,
        ts: 1.0,
        states,
        controls: controls[..horizon].to_vec(),
    })
}

/// Noisy infected proportions Ĩ with the noise configuration that generated
/// them. Values are raw Poisson ratios, never clipped to [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub values: Vec<f64>,
    pub kappa: f64,
    pub n_pop: f64,
}

impl ObservationSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Draw Pois(i_true·κ·N)/(κ·N). Deterministic for a fixed rng state.
pub fn observe_infected<R: Rng>(i_true: f64, kappa: f64, n_pop: f64, rng: &mut R) -> Result<f64> {
    if !(0.0..=1.0).contains(&i_true) {
        return Err(Error::domain(format!("i_true={i_true} outside [0,1]")));
    }
    if kappa <= 0.0 {
        return Err(Error::domain(format!("kappa={kappa} must be positive")));
    }
    if n_pop < 1.0 {
        return Err(Error::domain(format!("n_pop={n_pop} must be >= 1")));
    }
    let scale = kappa * n_pop;
    let mean = i_true * scale;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let pois = Poisson::new(mean).map_err(|e| Error::domain(format!("poisson: {e}")))?;
    let count: f64 = pois.sample(rng);
    Ok(count / scale)
}
