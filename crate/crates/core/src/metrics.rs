//! Evaluation metrics: relative squared error, stacked-state L2 relative
//! error, relative absolute error of scalar estimates, epidemic-control
//! indices (peak infected, cumulative control, effective end time), and
//! multi-seed aggregation with min/max trimming.

use crate::error::{Error, Result};
use crate::sir::{fmt_f64, Trajectory};
use std::collections::BTreeMap;

/// Σ(est − truth)² / Σ truth².
pub fn rmse(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(Error::Shape(format!(
            "rmse needs equal nonempty series, got {} and {}",
            est.len(),
            truth.len()
        )));
    }
    let denom: f64 = truth.iter().map(|t| t * t).sum();
    if denom == 0.0 {
        return Err(Error::domain("rmse undefined for an all-zero truth series"));
    }
    let num: f64 = est
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| (e - t) * (e - t))
        .sum();
    Ok(num / denom)
}

/// (1/k)·Σ_{i=0..k} ‖ŷ(i) − y(i)‖₂ / ‖y(i)‖₂ over stacked per-day vectors.
/// The sum runs over all k+1 days while the normalization is 1/k.
pub fn l2_relative_error(est: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if est.len() != truth.len() || est.len() < 2 {
        return Err(Error::Shape(format!(
            "l2 relative error needs >= 2 matching days, got {} and {}",
            est.len(),
            truth.len()
        )));
    }
    let k = (est.len() - 1) as f64;
    let mut sum = 0.0;
    for (day, (e, t)) in est.iter().zip(truth.iter()).enumerate() {
        if e.len() != t.len() || e.is_empty() {
            return Err(Error::Shape(format!("vector shape mismatch at day {day}")));
        }
        let num: f64 = e
            .iter()
            .zip(t.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = t.iter().map(|b| b * b).sum::<f64>().sqrt();
        if den == 0.0 {
            return Err(Error::domain(format!(
                "l2 relative error undefined: zero reference vector at day {day}"
            )));
        }
        sum += num / den;
    }
    Ok(sum / k)
}

/// |v̂ − v| / |v|.
pub fn rae(est: f64, truth: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::domain("rae undefined for zero truth"));
    }
    Ok((est - truth).abs() / truth.abs())
}

/// Epidemic-control summary of a closed-loop trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlIndices {
    /// Peak infected proportion over the whole run.
    pub i_max: f64,
    /// Cumulative control effort Σ uₖ·T_s (unit sampling period: a plain sum).
    pub cct: f64,
    /// First day with I < 0.005 and S within `tol·S*` above S*, if reached.
    pub eet: Option<usize>,
    /// Susceptible proportion on the effective end day.
    pub s_final: Option<f64>,
}

/// Infected proportion below which the epidemic counts as extinguished
/// for the effective-end-time rule.
pub const EET_INFECTED_THRESHOLD: f64 = 0.005;

pub fn control_indices(traj: &Trajectory, s_star: f64, eet_tol: f64) -> ControlIndices {
    let i_max = traj.states.iter().map(|s| s.i).fold(f64::NEG_INFINITY, f64::max);
    let cct = traj.controls.iter().sum::<f64>() * traj.ts;
    let eet = traj.states.iter().position(|st| {
        st.i < EET_INFECTED_THRESHOLD && st.s - s_star < eet_tol * s_star
    });
    let s_final = eet.map(|day| traj.states[day].s);
    ControlIndices {
        i_max,
        cct,
        eet,
        s_final,
    }
}

/// Peak-infected compliance with a 3% overshoot allowance on the cap.
pub fn i_max_compliant(i_max: f64, cap: f64) -> bool {
    i_max <= 1.03 * cap
}

/// Mean and sample standard deviation over seeds, optionally discarding one
/// minimum and one maximum as outliers (only applied for five or more values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub n_used: usize,
    pub trimmed: bool,
}

pub fn aggregate(values: &[f64], trim: bool) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::domain("cannot aggregate zero values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("cannot aggregate non-finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let trimmed = trim && sorted.len() >= 5;
    let used: &[f64] = if trimmed {
        &sorted[1..sorted.len() - 1]
    } else {
        &sorted
    };
    let n = used.len() as f64;
    let mean = used.iter().sum::<f64>() / n;
    let std = if used.len() > 1 {
        (used.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(Aggregate {
        mean,
        std,
        n_used: used.len(),
        trimmed,
    })
}

/// Flat, ordered key/value metrics container serialized as `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    entries: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.get(key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(&fmt_f64(*v));
            out.push('\n');
        }
        out
    }

    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("bad metrics line: {line}")))?;
            let value: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad metrics value: {line}")))?;
            entries.insert(k.trim().to_string(), value);
        }
        Ok(Self { entries })
    }
}
