//! The closed control loop: daily simulation and observation, estimator
//! retraining at scheduled days with warm starts, MPC solves from the
//! estimated state, and piecewise-constant control application. Also writes
//! the per-run artifact files (trajectory, MPC log, training log, metrics,
//! snapshots).

use crate::error::{Error, Result};
use crate::estimators::{
    estimate, Assumption, EstimateResult, EstimatorVariant, TrainingConfig,
};
use crate::metrics::{control_indices, l2_relative_error, rae, rmse, MetricsReport};
use crate::mpc::{solve_mpc, MpcConfig, SolverStatus};
use crate::rng::RunSeed;
use crate::sir::{euler_step, fmt_f64, observe_infected, SirParams, SirState, Trajectory};
use crate::snapshot::EstimatorSnapshot;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// When the controller may act and when the estimator retrains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub control_start: usize,
    pub control_end: usize,
    pub final_time: usize,
    /// Control period T_p: days between training points.
    pub t_p: usize,
    /// Extra training days (typically the final day, for estimation only).
    #[serde(default)]
    pub extra_points: Vec<usize>,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.control_start < 1 {
            return Err(Error::config("control must start at day 1 or later"));
        }
        if self.control_start > self.control_end || self.control_end > self.final_time {
            return Err(Error::config(format!(
                "need control_start <= control_end <= final_time, got {} / {} / {}",
                self.control_start, self.control_end, self.final_time
            )));
        }
        if self.t_p < 1 {
            return Err(Error::config("control period must be at least one day"));
        }
        if self.extra_points.iter().any(|&d| d > self.final_time) {
            return Err(Error::config("extra training point beyond final_time"));
        }
        Ok(())
    }
}

/// Training days: {start, start+T_p, …, end} ∪ extra_points, sorted, deduped.
pub fn build_schedule(cfg: &ScheduleConfig) -> Vec<usize> {
    let mut days: Vec<usize> = (cfg.control_start..=cfg.control_end)
        .step_by(cfg.t_p)
        .collect();
    days.extend_from_slice(&cfg.extra_points);
    days.sort_unstable();
    days.dedup();
    days
}

/// EET susceptible tolerance: 3% at low noise variance, 10% at high.
pub fn eet_tolerance(kappa: f64) -> f64 {
    if kappa >= 1.0 {
        0.03
    } else {
        0.10
    }
}

/// Everything that defines one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// True dynamics (hidden from the estimator).
    pub params: SirParams,
    pub i0: f64,
    pub kappa: f64,
    pub n_pop: f64,
    /// Ĩ = I exactly instead of Poisson sampling.
    pub noiseless: bool,
    /// MPC fed true states/parameters; the estimator trains once offline
    /// on the full run for evaluation.
    pub ideal_mpc: bool,
    pub variant: EstimatorVariant,
    pub assumption: Assumption,
    pub mpc: MpcConfig,
    pub schedule: ScheduleConfig,
    pub training: TrainingConfig,
    pub seed: RunSeed,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.i0 > 0.0 && self.i0 < 1.0) {
            return Err(Error::config(format!("i0 {} outside (0,1)", self.i0)));
        }
        if !(self.kappa > 0.0) || !(self.n_pop > 0.0) {
            return Err(Error::config("kappa and n_pop must be positive"));
        }
        self.assumption.validate_for(self.variant)?;
        // u_max = 0 disables the controller entirely (uncontrolled baseline);
        // the MPC config is only exercised otherwise.
        if self.mpc.u_max != 0.0 {
            self.mpc.validate()?;
        }
        self.schedule.validate()?;
        self.training.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcLogRow {
    pub day: usize,
    pub status: SolverStatus,
    pub objective: f64,
    pub u_applied: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// True states at days 0..=final_time.
    pub states: Vec<SirState>,
    /// Observed infected proportion, one per day.
    pub observations: Vec<f64>,
    /// Applied control per day (length final_time).
    pub controls: Vec<f64>,
    /// One result per training point, chronological.
    pub estimates: Vec<EstimateResult>,
    pub snapshots: Vec<EstimatorSnapshot>,
    pub mpc_log: Vec<MpcLogRow>,
    /// Days whose MPC solve failed and fell back to u = 0.
    pub fallback_days: Vec<usize>,
    /// Per-day estimates stitched from the training points (each training
    /// point's networks fill the days since the previous one).
    pub s_hat: Vec<f64>,
    pub i_hat: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub beta_hat: Vec<f64>,
    pub gamma_hat: Option<Vec<f64>>,
    pub metrics: MetricsReport,
}

pub fn run_closed_loop(scn: &Scenario) -> Result<RunRecord> {
    scn.validate()?;
    let schedule = build_schedule(&scn.schedule);
    let final_t = scn.schedule.final_time;
    let (start, end) = (scn.schedule.control_start, scn.schedule.control_end);

    let mut obs_rng = scn.seed.stream("obs");
    let mut observe = |i: f64| -> Result<f64> {
        if scn.noiseless {
            Ok(i)
        } else {
            observe_infected(i, scn.kappa, scn.n_pop, &mut obs_rng)
        }
    };

    let initial = SirState::early_epidemic(scn.i0)?;
    let mut states = vec![initial];
    let mut observations = vec![observe(initial.i)?];
    let mut controls: Vec<f64> = Vec::with_capacity(final_t);
    let mut estimates: Vec<EstimateResult> = Vec::new();
    let mut snapshots: Vec<EstimatorSnapshot> = Vec::new();
    let mut mpc_log: Vec<MpcLogRow> = Vec::new();
    let mut fallback_days: Vec<usize> = Vec::new();
    let mut warm: Option<EstimatorSnapshot> = None;
    let mut current_u = 0.0;

    for day in 0..=final_t {
        if schedule.contains(&day) {
            // Retrain on everything seen so far (not in ideal mode, where the
            // estimator is evaluated offline on the full run instead).
            if !scn.ideal_mpc && day >= 1 {
                let (est, snap) = estimate(
                    scn.variant,
                    scn.assumption,
                    &observations[..=day],
                    &controls[..day],
                    warm.as_ref(),
                    &scn.training,
                    scn.seed,
                )
                .map_err(|e| e.at_day(day))?;
                estimates.push(est);
                snapshots.push(snap.clone());
                warm = Some(snap);
            }

            // Solve within the control window; u_max = 0 means no controller.
            if day >= start && day <= end && scn.mpc.u_max > 0.0 {
                let (x0, params_hat) = if scn.ideal_mpc {
                    (*states.last().unwrap(), scn.params)
                } else {
                    let est = estimates.last().ok_or_else(|| {
                        Error::config("no estimate before first solve").at_day(day)
                    })?;
                    // Network outputs are unconstrained, so the estimated
                    // state can have small negative components or a sum that
                    // drifts from one. Project onto the simplex before the
                    // solve; a degenerate estimate (all mass clipped away)
                    // falls through to the solver's own input check.
                    let (s, i, r) = (
                        est.s_hat[est.day].max(0.0),
                        est.i_hat[est.day].max(0.0),
                        est.r_hat[est.day].max(0.0),
                    );
                    let sum = s + i + r;
                    let x0 = if sum > 0.0 {
                        SirState {
                            s: s / sum,
                            i: i / sum,
                            r: r / sum,
                        }
                    } else {
                        SirState {
                            s: est.s_hat[est.day],
                            i: est.i_hat[est.day],
                            r: est.r_hat[est.day],
                        }
                    };
                    let gamma = match scn.assumption {
                        Assumption::RecoveryKnown(g) => g,
                        Assumption::R0Known(_) => est.gamma_hat.unwrap(),
                    };
                    (x0, discretize_rates(est.beta_hat, gamma, x0.s))
                };
                let solved = solve_mpc(x0, params_hat, &scn.mpc);
                // A solve that errors or reports failure applies no control
                // for this period; the run itself continues.
                let (status, objective, u) = match solved {
                    Ok(sol) if sol.status != SolverStatus::Failed => {
                        (sol.status, sol.objective, sol.controls[0])
                    }
                    Ok(sol) => {
                        fallback_days.push(day);
                        (sol.status, sol.objective, 0.0)
                    }
                    Err(_) => {
                        fallback_days.push(day);
                        (SolverStatus::Failed, f64::INFINITY, 0.0)
                    }
                };
                current_u = u;
                let u_applied = if day < end { current_u } else { 0.0 };
                mpc_log.push(MpcLogRow {
                    day,
                    status,
                    objective,
                    u_applied,
                });
            }
        }

        if day == final_t {
            break;
        }
        let u = if day >= start && day < end {
            current_u
        } else {
            0.0
        };
        let next = euler_step(*states.last().unwrap(), scn.params, u)
            .map_err(|e| e.at_day(day))?;
        controls.push(u);
        states.push(next);
        observations.push(observe(next.i)?);
    }

    // Ideal mode: one offline training pass over the whole run.
    if scn.ideal_mpc {
        let (est, snap) = estimate(
            scn.variant,
            scn.assumption,
            &observations,
            &controls,
            None,
            &scn.training,
            scn.seed,
        )
        .map_err(|e| e.at_day(final_t))?;
        estimates.push(est);
        snapshots.push(snap);
    }

    let (s_hat, i_hat, r_hat, beta_hat, gamma_hat) =
        stitch_estimates(&estimates, final_t, scn.variant.is_generalized());
    let metrics = compute_metrics(
        scn, &states, &controls, &s_hat, &i_hat, &r_hat, &beta_hat, &gamma_hat,
        fallback_days.len(),
    )?;

    Ok(RunRecord {
        states,
        observations,
        controls,
        estimates,
        snapshots,
        mpc_log,
        fallback_days,
        s_hat,
        i_hat,
        r_hat,
        beta_hat,
        gamma_hat,
        metrics,
    })
}

/// Convert the estimator's continuous-time rates to their one-step-equivalent
/// discrete rates before feeding the Euler predictor.
///
/// The networks enforce continuous-time dynamics, so with daily samples of a
/// fast wave the fitted transmission rate reproduces the logarithmic growth
/// rate ln(r) of the data, while the one-step Euler model grows by 1 + g per
/// day. Matching the one-day multiplier at the current state (e^g vs 1 + g_d,
/// g = β̂S − γ̂) keeps the predictor faithful to the estimator's own forecast;
/// the map is a near-identity once growth is slow.
pub fn discretize_rates(beta_hat: f64, gamma_hat: f64, s: f64) -> SirParams {
    let mut beta = beta_hat;
    if s > 1e-6 {
        let g = beta_hat * s - gamma_hat;
        beta = ((g.exp() - 1.0 + gamma_hat) / s).clamp(f64::MIN_POSITIVE, 1.0 - 1e-12);
    }
    SirParams {
        beta,
        gamma: gamma_hat,
    }
}

type Stitched = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Option<Vec<f64>>);

/// Fill each day from the first training point whose window reaches it; days
/// past the last training point carry that estimate's final values forward.
fn stitch_estimates(estimates: &[EstimateResult], final_t: usize, gen: bool) -> Stitched {
    let n = final_t + 1;
    let mut s = vec![f64::NAN; n];
    let mut i = vec![f64::NAN; n];
    let mut r = vec![f64::NAN; n];
    let mut beta = vec![f64::NAN; n];
    let mut gamma = gen.then(|| vec![f64::NAN; n]);
    let mut filled = 0usize;
    for est in estimates {
        let upto = est.day.min(final_t);
        for d in filled..=upto {
            s[d] = est.s_hat[d];
            i[d] = est.i_hat[d];
            r[d] = est.r_hat[d];
            beta[d] = est.beta_hat;
            if let (Some(g), Some(gh)) = (gamma.as_mut(), est.gamma_hat) {
                g[d] = gh;
            }
        }
        filled = filled.max(upto + 1);
    }
    if let Some(est) = estimates.last() {
        for d in filled..n {
            s[d] = est.s_hat[est.day];
            i[d] = est.i_hat[est.day];
            r[d] = est.r_hat[est.day];
            beta[d] = est.beta_hat;
            if let (Some(g), Some(gh)) = (gamma.as_mut(), est.gamma_hat) {
                g[d] = gh;
            }
        }
    }
    (s, i, r, beta, gamma)
}

#[allow(clippy::too_many_arguments)]
fn compute_metrics(
    scn: &Scenario,
    states: &[SirState],
    controls: &[f64],
    s_hat: &[f64],
    i_hat: &[f64],
    r_hat: &[f64],
    beta_hat: &[f64],
    gamma_hat: &Option<Vec<f64>>,
    fallbacks: usize,
) -> Result<MetricsReport> {
    let mut report = MetricsReport::new();
    let truth_s: Vec<f64> = states.iter().map(|x| x.s).collect();
    let truth_i: Vec<f64> = states.iter().map(|x| x.i).collect();
    let truth_r: Vec<f64> = states.iter().map(|x| x.r).collect();
    let truth_beta = vec![scn.params.beta; states.len()];
    report.set("rmse_s", rmse(s_hat, &truth_s)?);
    report.set("rmse_i", rmse(i_hat, &truth_i)?);
    report.set("rmse_r", rmse(r_hat, &truth_r)?);
    report.set("rmse_beta", rmse(beta_hat, &truth_beta)?);
    report.set("rae_beta", rae(*beta_hat.last().unwrap(), scn.params.beta)?);

    let mut est_vecs = Vec::with_capacity(states.len());
    let mut truth_vecs = Vec::with_capacity(states.len());
    for d in 0..states.len() {
        let mut e = vec![s_hat[d], i_hat[d], r_hat[d], beta_hat[d]];
        let mut t = vec![truth_s[d], truth_i[d], truth_r[d], scn.params.beta];
        if let Some(g) = gamma_hat {
            e.push(g[d]);
            t.push(scn.params.gamma);
        }
        est_vecs.push(e);
        truth_vecs.push(t);
    }
    report.set("l2_rel", l2_relative_error(&est_vecs, &truth_vecs)?);
    if let Some(g) = gamma_hat {
        let truth_gamma = vec![scn.params.gamma; states.len()];
        report.set("rmse_gamma", rmse(g, &truth_gamma)?);
        report.set("rae_gamma", rae(*g.last().unwrap(), scn.params.gamma)?);
    }

    let traj = Trajectory {
        t0: 0.0,
        ts: 1.0,
        states: states.to_vec(),
        controls: controls.to_vec(),
    };
    let tol = eet_tolerance(scn.kappa);
    let ci = control_indices(&traj, scn.mpc.s_star, tol);
    report.set("i_max", ci.i_max);
    report.set("cct", ci.cct);
    if let Some(eet) = ci.eet {
        report.set("eet", eet as f64);
    }
    if let Some(sf) = ci.s_final {
        report.set("s_final", sf);
    }
    report.set("mpc_fallbacks", fallbacks as f64);
    Ok(report)
}

impl RunRecord {
    /// `day,S,I,R,u,I_obs,S_hat,I_hat,R_hat,beta_hat[,gamma_hat]`; the final
    /// day has no applied control and reports u = 0.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("day,S,I,R,u,I_obs,S_hat,I_hat,R_hat,beta_hat");
        if self.gamma_hat.is_some() {
            out.push_str(",gamma_hat");
        }
        out.push('\n');
        for (d, st) in self.states.iter().enumerate() {
            let u = self.controls.get(d).copied().unwrap_or(0.0);
            out.push_str(&format!(
                "{d},{},{},{},{},{},{},{},{},{}",
                fmt_f64(st.s),
                fmt_f64(st.i),
                fmt_f64(st.r),
                fmt_f64(u),
                fmt_f64(self.observations[d]),
                fmt_f64(self.s_hat[d]),
                fmt_f64(self.i_hat[d]),
                fmt_f64(self.r_hat[d]),
                fmt_f64(self.beta_hat[d]),
            ));
            if let Some(g) = &self.gamma_hat {
                out.push(',');
                out.push_str(&fmt_f64(g[d]));
            }
            out.push('\n');
        }
        out
    }

    pub fn mpc_log_csv(&self) -> String {
        let mut out = String::from("day,status,objective,u_applied\n");
        for row in &self.mpc_log {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.day,
                row.status,
                fmt_f64(row.objective),
                fmt_f64(row.u_applied)
            ));
        }
        out
    }

    pub fn training_log_csv(&self) -> String {
        let mut out = String::from("epoch,variant,term,value\n");
        for est in &self.estimates {
            for row in &est.training_log {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    row.epoch,
                    row.variant.name(),
                    row.term,
                    fmt_f64(row.value)
                ));
            }
        }
        out
    }

    /// Write trajectory.csv, mpc_log.csv, training_log.csv, metrics.txt and
    /// the snapshot files into `dir` (created if needed).
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trajectory.csv"), self.trajectory_csv())?;
        fs::write(dir.join("mpc_log.csv"), self.mpc_log_csv())?;
        fs::write(dir.join("training_log.csv"), self.training_log_csv())?;
        fs::write(dir.join("metrics.txt"), self.metrics.to_kv())?;
        for snap in &self.snapshots {
            snap.save(dir)?;
        }
        Ok(())
    }
}
