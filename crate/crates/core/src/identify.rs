//! Rate identification from noiseless infected trajectories: the γ-given-β
//! map behind the solution family, and the damped fixed-point recovery of β
//! when the reproduction number is known. This module is an oracle and
//! diagnostic for the estimators — it never sees noisy data.

use crate::error::{Error, Result};
use crate::sir::{SirParams, SirState};

/// Infected proportion below which the identification formulas are treated as
/// singular (they divide by I, I², I³).
const I_SINGULAR: f64 = 1e-12;

const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITERS: usize = 500;
const FIXED_POINT_DAMPING: f64 = 0.5;

/// An infected series on integer days with first and second time-derivative
/// estimates on interior days (central, O(h²); endpoints excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothSeries {
    values: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl SmoothSeries {
    /// Build from integer-day values alone, with unit-spacing stencils.
    pub fn from_day_values(values: &[f64]) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::Shape(format!(
                "need at least 3 day values for derivative stencils, got {}",
                values.len()
            )));
        }
        let k = values.len() - 1;
        let mut d1 = vec![f64::NAN; k + 1];
        let mut d2 = vec![f64::NAN; k + 1];
        for t in 1..k {
            d1[t] = (values[t + 1] - values[t - 1]) / 2.0;
            d2[t] = values[t + 1] - 2.0 * values[t] + values[t - 1];
        }
        Ok(Self {
            values: values.to_vec(),
            d1,
            d2,
        })
    }

    /// Build by re-integrating the continuous dynamics at a fine substep
    /// (RK4; piecewise-constant per-day controls), then taking central
    /// differences at substep resolution on each interior integer day.
    /// The fine integrator keeps derivative bias well below the fixed-point
    /// reproducibility tolerance.
    pub fn from_fine_resimulation(
        initial: SirState,
        params: SirParams,
        controls: &[f64],
        days: usize,
        substep: f64,
    ) -> Result<Self> {
        initial.validate()?;
        if days < 2 {
            return Err(Error::domain("need at least a 2-day horizon"));
        }
        if controls.len() < days {
            return Err(Error::domain(format!(
                "need {days} controls, got {}",
                controls.len()
            )));
        }
        let per = per_day_steps(substep)?;
        let fine = integrate_fine(
            params.beta,
            params.gamma,
            initial.s,
            initial.i,
            controls,
            days,
            substep,
        );
        let h = substep;
        let mut values = Vec::with_capacity(days + 1);
        let mut d1 = vec![f64::NAN; days + 1];
        let mut d2 = vec![f64::NAN; days + 1];
        for t in 0..=days {
            let j = t * per;
            values.push(fine[j]);
            if t > 0 && t < days {
                d1[t] = (fine[j + 1] - fine[j - 1]) / (2.0 * h);
                d2[t] = (fine[j + 1] - 2.0 * fine[j] + fine[j - 1]) / (h * h);
            }
        }
        Ok(Self { values, d1, d2 })
    }

    /// Last day index.
    pub fn k(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, day: usize) -> Result<f64> {
        self.values
            .get(day)
            .copied()
            .ok_or_else(|| Error::domain(format!("day {day} beyond series end {}", self.k())))
    }

    fn interior(&self, day: usize) -> Result<()> {
        if day == 0 || day >= self.k() {
            return Err(Error::domain(format!(
                "day {day} is not interior to 0..{}",
                self.k()
            )));
        }
        Ok(())
    }

    /// dI/dt at an interior day.
    pub fn d1(&self, day: usize) -> Result<f64> {
        self.interior(day)?;
        Ok(self.d1[day])
    }

    /// d²I/dt² at an interior day.
    pub fn d2(&self, day: usize) -> Result<f64> {
        self.interior(day)?;
        Ok(self.d2[day])
    }

    pub fn interior_days(&self) -> std::ops::Range<usize> {
        1..self.k()
    }
}

fn per_day_steps(substep: f64) -> Result<usize> {
    if !(substep > 0.0 && substep <= 1.0) {
        return Err(Error::domain(format!("bad substep {substep}")));
    }
    let per = (1.0 / substep).round() as usize;
    if per == 0 || (per as f64 * substep - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "substep {substep} must divide one day evenly"
        )));
    }
    Ok(per)
}

/// RK4 integration of the continuous dynamics; returns I at every substep.
/// No simplex validation: callers may explore parameter/state combinations
/// outside the physical simplex (the solution-family diagnostic does).
fn integrate_fine(
    beta: f64,
    gamma: f64,
    s0: f64,
    i0: f64,
    controls: &[f64],
    days: usize,
    substep: f64,
) -> Vec<f64> {
    let per = (1.0 / substep).round() as usize;
    let f = |s: f64, i: f64, u: f64| -> (f64, f64) {
        (-beta * i * s, beta * i * s - (gamma + u) * i)
    };
    let (mut s, mut i) = (s0, i0);
    let mut out = Vec::with_capacity(days * per + 1);
    out.push(i);
    for day in 0..days {
        let u = controls[day];
        for _ in 0..per {
            let h = substep;
            let k1 = f(s, i, u);
            let k2 = f(s + 0.5 * h * k1.0, i + 0.5 * h * k1.1, u);
            let k3 = f(s + 0.5 * h * k2.0, i + 0.5 * h * k2.1, u);
            let k4 = f(s + h * k3.0, i + h * k3.1, u);
            s += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            i += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            out.push(i);
        }
    }
    out
}

/// Diagnostic re-integration of the continuous dynamics from an arbitrary
/// (possibly unphysical) starting point; returns I at integer days 0..=days.
pub fn resimulate_infected(
    beta: f64,
    gamma: f64,
    s0: f64,
    i0: f64,
    controls: &[f64],
    days: usize,
    substep: f64,
) -> Result<Vec<f64>> {
    if controls.len() < days {
        return Err(Error::domain(format!(
            "need {days} controls, got {}",
            controls.len()
        )));
    }
    let per = per_day_steps(substep)?;
    let fine = integrate_fine(beta, gamma, s0, i0, controls, days, substep);
    Ok((0..=days).map(|t| fine[t * per]).collect())
}

fn control_at(u: &[f64], day: usize) -> Result<f64> {
    u.get(day)
        .copied()
        .ok_or_else(|| Error::domain(format!("no control for day {day}")))
}

/// The unique γ† consistent with a chosen β† at one interior day:
/// γ† = −(1/(β†·I²))·[I¨ + β†·I·İ − İ²/I] − u(t).
pub fn gamma_given_beta(
    series: &SmoothSeries,
    u: &[f64],
    beta_dagger: f64,
    t: usize,
) -> Result<f64> {
    if beta_dagger <= 0.0 {
        return Err(Error::domain(format!("beta_dagger={beta_dagger} must be positive")));
    }
    let i = series.value(t)?;
    if i <= I_SINGULAR {
        return Err(Error::domain(format!(
            "I({t}) = {i} too small for identification"
        )));
    }
    let (d1, d2) = (series.d1(t)?, series.d2(t)?);
    let ut = control_at(u, t)?;
    Ok(-(d2 + beta_dagger * i * d1 - d1 * d1 / i) / (beta_dagger * i * i) - ut)
}

/// The susceptible proportion implied by an infected series under (β, γ):
/// S(t) = (İ + (γ + u)·I) / (β·I).
pub fn implied_susceptible(
    series: &SmoothSeries,
    u: &[f64],
    beta: f64,
    gamma: f64,
    t: usize,
) -> Result<f64> {
    let i = series.value(t)?;
    if i <= I_SINGULAR || beta <= 0.0 {
        return Err(Error::domain("implied susceptible undefined"));
    }
    let d1 = series.d1(t)?;
    let ut = control_at(u, t)?;
    Ok((d1 + (gamma + ut) * i) / (beta * i))
}

/// One day's converged fixed point with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerTimeRecovery {
    pub day: usize,
    pub beta: f64,
    pub iterations: usize,
    /// |β − G(β)| at the returned point.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub beta: f64,
    pub gamma: f64,
    pub per_t: Vec<PerTimeRecovery>,
}

/// Coefficients of the fixed-point map
/// G(β) = A/β + B at one day, from
/// β = −(R₀/(β·I²))·[I¨ + β·I·İ − İ²/I] − R₀·u(t).
fn fixed_point_coefficients(
    series: &SmoothSeries,
    u: &[f64],
    r0: f64,
    t: usize,
) -> Result<(f64, f64)> {
    let i = series.value(t)?;
    if i <= I_SINGULAR {
        return Err(Error::domain(format!(
            "I({t}) = {i} too small for identification"
        )));
    }
    let (d1, d2) = (series.d1(t)?, series.d2(t)?);
    let ut = control_at(u, t)?;
    let a = -r0 * (d2 - d1 * d1 / i) / (i * i);
    let b = -r0 * d1 / i - r0 * ut;
    Ok((a, b))
}

fn solve_one_day(series: &SmoothSeries, u: &[f64], r0: f64, t: usize) -> Result<PerTimeRecovery> {
    let (a, b) = fixed_point_coefficients(series, u, r0, t)?;
    // β = A/β + B ⟺ β² − Bβ − A = 0; a positive root must exist.
    let disc = b * b + 4.0 * a;
    if disc < 0.0 || (b + disc.sqrt()) / 2.0 <= 0.0 {
        return Err(Error::domain(format!(
            "day {t}: fixed point has no positive root (A={a}, B={b})"
        )));
    }

    let g = |beta: f64| a / beta + b;
    let mut beta = 0.5;
    let mut prev_delta = f64::INFINITY;
    for iter in 1..=FIXED_POINT_MAX_ITERS {
        if beta <= I_SINGULAR {
            return Err(Error::domain(format!(
                "day {t}: fixed-point iterate collapsed to {beta}"
            )));
        }
        let next = (1.0 - FIXED_POINT_DAMPING) * beta + FIXED_POINT_DAMPING * g(beta);
        let delta = (next - beta).abs();
        // The damped map must contract on this problem; report divergence
        // rather than silently returning a stale iterate.
        if iter > 5 && delta > prev_delta {
            return Err(Error::NoConvergence { iters: iter, delta });
        }
        beta = next;
        if delta < FIXED_POINT_TOL {
            return Ok(PerTimeRecovery {
                day: t,
                beta,
                iterations: iter,
                residual: (beta - g(beta)).abs(),
            });
        }
        prev_delta = delta;
    }
    Err(Error::NoConvergence {
        iters: FIXED_POINT_MAX_ITERS,
        delta: prev_delta,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Recover β from a noiseless infected series and known R₀, solving the
/// per-day fixed point and taking the median over `t_set`.
pub fn recover_beta_report(
    series: &SmoothSeries,
    u: &[f64],
    r0: f64,
    t_set: &[usize],
) -> Result<FixedPointReport> {
    if r0 <= 1.0 {
        return Err(Error::domain(format!("r0={r0} must exceed 1")));
    }
    if t_set.is_empty() {
        return Err(Error::domain("empty t_set"));
    }
    let per_t: Vec<PerTimeRecovery> = t_set
        .iter()
        .map(|&t| solve_one_day(series, u, r0, t))
        .collect::<Result<_>>()?;
    let mut betas: Vec<f64> = per_t.iter().map(|p| p.beta).collect();
    let beta = median(&mut betas);
    Ok(FixedPointReport {
        beta,
        gamma: beta / r0,
        per_t,
    })
}

pub fn recover_beta_fixed_point(
    series: &SmoothSeries,
    u: &[f64],
    r0: f64,
    t_set: &[usize],
) -> Result<f64> {
    Ok(recover_beta_report(series, u, r0, t_set)?.beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUBSTEP: f64 = 0.01;

    fn growth_series() -> (SmoothSeries, Vec<f64>) {
        // Slow-epidemic setup: β=0.24, γ=0.12, uncontrolled, 85 days.
        let initial = SirState::early_epidemic(0.001).unwrap();
        let params = SirParams::new(0.24, 0.12).unwrap();
        let u = vec![0.0; 85];
        let s = SmoothSeries::from_fine_resimulation(initial, params, &u, 85, SUBSTEP).unwrap();
        (s, u)
    }

    fn fast_series() -> (SmoothSeries, Vec<f64>) {
        // Fast-epidemic setup: β=0.6, γ=0.2, uncontrolled, 50 days.
        let initial = SirState::early_epidemic(0.001).unwrap();
        let params = SirParams::new(0.6, 0.2).unwrap();
        let u = vec![0.0; 50];
        let s = SmoothSeries::from_fine_resimulation(initial, params, &u, 50, SUBSTEP).unwrap();
        (s, u)
    }

    #[test]
    fn gamma_given_true_beta_recovers_gamma() {
        let (series, u) = fast_series();
        for t in [3, 8, 15, 25] {
            let g = gamma_given_beta(&series, &u, 0.6, t).unwrap();
            assert!((g - 0.2).abs() < 2e-2, "t={t} gamma={g}");
        }
    }

    #[test]
    fn constant_infected_gives_zero_gamma() {
        let series = SmoothSeries::from_day_values(&[0.3; 11]).unwrap();
        let u = vec![0.0; 10];
        for beta in [0.3, 0.7, 1.2] {
            assert_eq!(gamma_given_beta(&series, &u, beta, 5).unwrap(), 0.0);
        }
    }

    #[test]
    fn identification_guards() {
        let series = SmoothSeries::from_day_values(&[1e-13; 5]).unwrap();
        let u = vec![0.0; 4];
        assert!(gamma_given_beta(&series, &u, 0.5, 2).is_err()); // I too small
        let (series, u) = fast_series();
        assert!(gamma_given_beta(&series, &u, 0.0, 3).is_err()); // bad beta
        assert!(gamma_given_beta(&series, &u, 0.5, 0).is_err()); // endpoint
        assert!(gamma_given_beta(&series, &u, 0.5, series.k()).is_err());
        assert!(SmoothSeries::from_day_values(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn solution_family_resimulates_infected_locally() {
        // Any β† admits a consistent (γ†, S†) that reproduces I over a short
        // window; 2e-2 relative covers the day-scale discretization drift.
        let (series, u) = fast_series();
        let t0 = 3;
        let window = 10;
        for beta_dagger in [0.3, 0.6, 0.9] {
            let gamma_dagger = gamma_given_beta(&series, &u, beta_dagger, t0).unwrap();
            let s_dagger = implied_susceptible(&series, &u, beta_dagger, gamma_dagger, t0).unwrap();
            let resim = resimulate_infected(
                beta_dagger,
                gamma_dagger,
                s_dagger,
                series.value(t0).unwrap(),
                &u[t0..],
                window,
                SUBSTEP,
            )
            .unwrap();
            for (j, i_hat) in resim.iter().enumerate() {
                let truth = series.value(t0 + j).unwrap();
                let rel = (i_hat - truth).abs() / truth;
                assert!(rel <= 2e-2, "beta†={beta_dagger} day {} rel={rel}", t0 + j);
            }
        }
        // The true β's companion γ† is the true γ.
        let g = gamma_given_beta(&series, &u, 0.6, t0).unwrap();
        assert!((g - 0.2).abs() < 1e-3);
    }

    #[test]
    fn recovers_rates_from_growth_phase() {
        let (series, u) = growth_series();
        let t_set = [20, 25, 30, 35, 40];
        let report = recover_beta_report(&series, &u, 2.0, &t_set).unwrap();
        assert!((report.beta - 0.24).abs() < 5e-3, "beta = {}", report.beta);
        assert!((report.gamma - 0.12).abs() < 2.5e-3, "gamma = {}", report.gamma);
        for p in &report.per_t {
            assert!(p.residual < 1e-9);
            assert!(p.iterations <= 500);
        }
    }

    #[test]
    fn fixed_point_matches_closed_form_root() {
        let (series, u) = growth_series();
        for t in [20, 30, 40] {
            let (a, b) = fixed_point_coefficients(&series, &u, 2.0, t).unwrap();
            let closed = (b + (b * b + 4.0 * a).sqrt()) / 2.0;
            let iterated = solve_one_day(&series, &u, 2.0, t).unwrap().beta;
            assert!((closed - iterated).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn mismatched_r0_is_detectable() {
        let (series, u) = growth_series();
        let t_set = [20, 25, 30, 35, 40];
        let matched = recover_beta_fixed_point(&series, &u, 2.0, &t_set).unwrap();
        let mismatched = recover_beta_fixed_point(&series, &u, 4.0, &t_set).unwrap();
        let matched_err = (matched - 0.24f64).abs();
        assert!((mismatched - 0.24).abs() > 10.0 * matched_err.max(1e-8));
    }

    #[test]
    fn disjoint_t_sets_agree() {
        let (series, u) = growth_series();
        let a = recover_beta_fixed_point(&series, &u, 2.0, &[20, 26, 32]).unwrap();
        let b = recover_beta_fixed_point(&series, &u, 2.0, &[23, 29, 35]).unwrap();
        assert!((a - b).abs() <= 1e-6, "a={a} b={b}");
    }

    #[test]
    fn rejects_bad_recovery_inputs() {
        let (series, u) = growth_series();
        assert!(recover_beta_fixed_point(&series, &u, 0.9, &[20]).is_err());
        assert!(recover_beta_fixed_point(&series, &u, 2.0, &[]).is_err());
        assert!(recover_beta_fixed_point(&series, &u, 2.0, &[0]).is_err());
    }

    #[test]
    fn day_grid_stencils_match_hand_values() {
        // Quadratic day values: v(t) = t² has d1 = 2t, d2 = 2 exactly under
        // the central stencils.
        let vals: Vec<f64> = (0..=6).map(|t| (t * t) as f64).collect();
        let s = SmoothSeries::from_day_values(&vals).unwrap();
        for t in 1..6 {
            assert_eq!(s.d1(t).unwrap(), 2.0 * t as f64);
            assert_eq!(s.d2(t).unwrap(), 2.0);
        }
        assert!(s.d1(0).is_err());
        assert!(s.d2(6).is_err());
    }
}
