//! The six trainable estimator variants: joint physics-informed training
//! (plain and log-relative data loss), the two-stage split-integral scheme,
//! and their generalized counterparts for unknown recovery rate with known
//! reproduction number. Handles warm starts, the reduced-epoch schedule, and
//! per-epoch loss logging.

use crate::error::{Error, Result};
use crate::losses::{
    data_loss, ic_loss, integral_operation, lre_data_loss, residual_loss, residual_loss_r0,
    si_data_loss_stage1, si_loss_stage2, split_data_loss, split_physics_loss, CollocationGrid,
    LossWeights,
};
use crate::neural::{
    loss_gradient, AdamState, FrozenMlp, Graph, GraphMlp, GraphScalar, Mlp, NodeId,
    TrainableScalar,
};
use crate::rng::RunSeed;
use crate::snapshot::EstimatorSnapshot;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorVariant {
    Pinns,
    LsPinns,
    SiPinns,
    GenPinns,
    GenLsPinns,
    GenSPinns,
}

impl EstimatorVariant {
    pub const ALL: [EstimatorVariant; 6] = [
        EstimatorVariant::Pinns,
        EstimatorVariant::LsPinns,
        EstimatorVariant::SiPinns,
        EstimatorVariant::GenPinns,
        EstimatorVariant::GenLsPinns,
        EstimatorVariant::GenSPinns,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorVariant::Pinns => "pinns",
            EstimatorVariant::LsPinns => "ls-pinns",
            EstimatorVariant::SiPinns => "si-pinns",
            EstimatorVariant::GenPinns => "gen-pinns",
            EstimatorVariant::GenLsPinns => "gen-ls-pinns",
            EstimatorVariant::GenSPinns => "gen-s-pinns",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown estimator variant `{s}`")))
    }

    /// Variants estimating both rates from a known reproduction number.
    pub fn is_generalized(self) -> bool {
        matches!(
            self,
            EstimatorVariant::GenPinns | EstimatorVariant::GenLsPinns | EstimatorVariant::GenSPinns
        )
    }

    /// Variants with a separate data-regression stage before physics training.
    pub fn is_two_stage(self) -> bool {
        matches!(self, EstimatorVariant::SiPinns | EstimatorVariant::GenSPinns)
    }
}

/// What the estimator is allowed to assume known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Assumption {
    /// Recovery rate γ is known; β is estimated.
    RecoveryKnown(f64),
    /// Reproduction number R₀ = β/γ is known; γ is estimated, β = R₀·γ̂.
    R0Known(f64),
}

impl Assumption {
    pub fn validate_for(self, variant: EstimatorVariant) -> Result<()> {
        match (self, variant.is_generalized()) {
            (Assumption::RecoveryKnown(g), false) => {
                if !(g > 0.0 && g < 1.0) {
                    return Err(Error::config(format!("known gamma {g} outside (0,1)")));
                }
                Ok(())
            }
            (Assumption::R0Known(r0), true) => {
                if !(r0 > 1.0) {
                    return Err(Error::config(format!("known r0 {r0} must exceed 1")));
                }
                Ok(())
            }
            (Assumption::RecoveryKnown(_), true) => Err(Error::config(format!(
                "{} requires a known reproduction number",
                variant.name()
            ))),
            (Assumption::R0Known(_), false) => Err(Error::config(format!(
                "{} requires a known recovery rate",
                variant.name()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingPhase {
    Joint,
    Stage1,
    Stage2,
}

/// The four trainable parameter blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamBlock {
    SNet,
    INet,
    UNet,
    Rate,
}

/// Which blocks receive gradients in a given phase.
pub fn freeze_mask(variant: EstimatorVariant, phase: TrainingPhase) -> Result<Vec<ParamBlock>> {
    use TrainingPhase::*;
    match (variant.is_two_stage(), phase) {
        (false, Joint) => Ok(vec![
            ParamBlock::SNet,
            ParamBlock::INet,
            ParamBlock::UNet,
            ParamBlock::Rate,
        ]),
        (true, Stage1) => Ok(vec![ParamBlock::INet, ParamBlock::UNet]),
        (true, Stage2) => Ok(vec![ParamBlock::SNet, ParamBlock::Rate]),
        _ => Err(Error::config(format!(
            "phase {phase:?} is not valid for {}",
            variant.name()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Epochs of joint / stage-2 physics training.
    pub physics_epochs: usize,
    /// Epochs of stage-1 data regression (two-stage variants).
    pub data_epochs: usize,
    pub learning_rate: f64,
    /// Learning rate for the squashed rate scalar. The networks need fast
    /// steps to fit within an epoch budget, while the rate rides the residual
    /// landscape and overshoots when moved at the same pace.
    pub rate_learning_rate: f64,
    pub collocation_points: usize,
    /// Hidden widths of the infected and control networks.
    pub hidden: Vec<usize>,
    /// Hidden widths of the susceptible network (wider for Gen variants).
    pub s_hidden: Vec<usize>,
    /// Warm-started phases run at ceil(epochs / warm_epoch_divisor).
    pub warm_epoch_divisor: usize,
    pub weights: LossWeights,
    pub lre_epsilon: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            physics_epochs: 5000,
            data_epochs: 4500,
            learning_rate: 1e-3,
            rate_learning_rate: 1e-3,
            collocation_points: 5000,
            hidden: vec![50; 4],
            s_hidden: vec![50; 4],
            warm_epoch_divisor: 5,
            weights: LossWeights::default(),
            lre_epsilon: 1e-9,
        }
    }
}

impl TrainingConfig {
    /// Defaults for the generalized (unknown-γ) experiment setup.
    pub fn generalized() -> Self {
        Self {
            physics_epochs: 6000,
            data_epochs: 2500,
            collocation_points: 6000,
            s_hidden: vec![100; 4],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.physics_epochs == 0 || self.data_epochs == 0 {
            return Err(Error::config("epoch counts must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(self.rate_learning_rate > 0.0 && self.rate_learning_rate.is_finite()) {
            return Err(Error::config("rate learning rate must be positive"));
        }
        if self.hidden.is_empty() || self.s_hidden.is_empty() {
            return Err(Error::config("networks need at least one hidden layer"));
        }
        if self.warm_epoch_divisor == 0 {
            return Err(Error::config("warm epoch divisor must be positive"));
        }
        if !(self.lre_epsilon > 0.0) {
            return Err(Error::config("lre epsilon must be positive"));
        }
        self.weights.validate()
    }

    fn s_dims(&self) -> Vec<usize> {
        dims_of(&self.s_hidden)
    }

    fn iu_dims(&self) -> Vec<usize> {
        dims_of(&self.hidden)
    }
}

fn dims_of(hidden: &[usize]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(1);
    dims.extend_from_slice(hidden);
    dims.push(1);
    dims
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingLogRow {
    /// Epoch within its phase; the row at `epochs` is the post-training value.
    pub epoch: usize,
    pub variant: EstimatorVariant,
    pub term: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    /// The day k the estimate was produced at.
    pub day: usize,
    /// Estimated proportions at integer days 0..=k; r̂ = 1 − ŝ − î exactly.
    pub s_hat: Vec<f64>,
    pub i_hat: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub beta_hat: f64,
    /// Present for generalized variants (then beta_hat = R₀·γ̂ exactly).
    pub gamma_hat: Option<f64>,
    /// Final value of each loss term, labeled as in the training log.
    pub final_losses: Vec<(&'static str, f64)>,
    pub training_log: Vec<TrainingLogRow>,
}

/// One training phase: full-batch Adam on a prebuilt graph, keeping the
/// best-loss iterate so the returned parameters never lose to epoch 0.
/// When `rate_lr` is given, the last parameter is the rate scalar and gets
/// its own Adam state at that learning rate.
#[allow(clippy::too_many_arguments)]
fn train(
    g: &mut Graph,
    root: NodeId,
    terms: &[(&'static str, NodeId)],
    params: &mut [f64],
    epochs: usize,
    lr: f64,
    rate_lr: Option<f64>,
    variant: EstimatorVariant,
    log: &mut Vec<TrainingLogRow>,
) -> Result<(Vec<AdamState>, f64)> {
    let n = params.len();
    let split = rate_lr.is_some() as usize;
    let mut adams = vec![AdamState::new(n - split, lr)];
    if let Some(rl) = rate_lr {
        adams.push(AdamState::new(1, rl));
    }
    let mut grad = vec![0.0; n];
    let mut best = params.to_vec();
    let mut best_loss = f64::INFINITY;
    for epoch in 0..epochs {
        let loss = loss_gradient(g, root, params, &mut grad)
            .map_err(|_| diverged(g, terms, epoch))?;
        if !loss.is_finite() {
            return Err(diverged(g, terms, epoch));
        }
        for &(name, node) in terms {
            log.push(TrainingLogRow {
                epoch,
                variant,
                term: name,
                value: g.value(node),
            });
        }
        if loss < best_loss {
            best_loss = loss;
            best.copy_from_slice(params);
        }
        if split == 1 {
            let (pm, pr) = params.split_at_mut(n - 1);
            adams[0].step(pm, &grad[..n - 1], None)?;
            adams[1].step(pr, &grad[n - 1..], None)?;
        } else {
            adams[0].step(params, &grad, None)?;
        }
    }
    g.forward(params);
    let end = g.value(root);
    let final_loss = if end.is_finite() && end <= best_loss {
        end
    } else {
        params.copy_from_slice(&best);
        g.forward(params);
        best_loss
    };
    for &(name, node) in terms {
        log.push(TrainingLogRow {
            epoch: epochs,
            variant,
            term: name,
            value: g.value(node),
        });
    }
    Ok((adams, final_loss))
}

fn diverged(g: &Graph, terms: &[(&'static str, NodeId)], epoch: usize) -> Error {
    let term = terms
        .iter()
        .find(|(_, n)| !g.value(*n).is_finite())
        .map(|(s, _)| *s)
        .unwrap_or("total");
    Error::TrainingDiverged {
        epoch,
        term: term.into(),
    }
}

/// Train the estimator on observations 0..k and controls 0..k−1, optionally
/// warm-starting from a previous step's snapshot (all phases then run at
/// ceil(epochs / warm_epoch_divisor)).
pub fn estimate(
    variant: EstimatorVariant,
    assumption: Assumption,
    obs: &[f64],
    controls: &[f64],
    warm: Option<&EstimatorSnapshot>,
    cfg: &TrainingConfig,
    seed: RunSeed,
) -> Result<(EstimateResult, EstimatorSnapshot)> {
    let k = controls.len();
    if k < 1 {
        return Err(Error::config("estimation needs at least one day of data"));
    }
    if obs.len() != k + 1 {
        return Err(Error::Shape(format!(
            "need {} observations for {k} controls, got {}",
            k + 1,
            obs.len()
        )));
    }
    if obs.iter().chain(controls.iter()).any(|v| !v.is_finite()) {
        return Err(Error::config("observations and controls must be finite"));
    }
    assumption.validate_for(variant)?;
    cfg.validate()?;
    let window = k as f64;
    let grid = CollocationGrid::uniform(window, cfg.collocation_points)?;
    let w = &cfg.weights;
    let i0 = obs[0];

    // Initialize or load the parameter blocks.
    let (mut s_net, mut i_net, mut u_net, mut rate) = match warm {
        Some(snap) => {
            if snap.variant != variant {
                return Err(Error::config(format!(
                    "warm snapshot is for {}, not {}",
                    snap.variant.name(),
                    variant.name()
                )));
            }
            if snap.s_net.dims() != cfg.s_dims().as_slice()
                || snap.i_net.dims() != cfg.iu_dims().as_slice()
                || snap.u_net.dims() != cfg.iu_dims().as_slice()
            {
                return Err(Error::config("warm snapshot architecture mismatch"));
            }
            (
                snap.s_net.clone(),
                snap.i_net.clone(),
                snap.u_net.clone(),
                TrainableScalar::new(snap.rate_raw),
            )
        }
        None => {
            let mut rng = seed.stream_at(&format!("init-{}", variant.name()), k as u64);
            (
                Mlp::glorot(&cfg.s_hidden, &mut rng),
                Mlp::glorot(&cfg.hidden, &mut rng),
                Mlp::glorot(&cfg.hidden, &mut rng),
                TrainableScalar::new(0.0),
            )
        }
    };
    let scale = |epochs: usize| {
        if warm.is_some() {
            epochs.div_ceil(cfg.warm_epoch_divisor)
        } else {
            epochs
        }
    };

    let mut log = Vec::new();
    let mut final_losses = Vec::new();
    let mut adams = Vec::new();
    let mut epochs_run = Vec::new();

    if !variant.is_two_stage() {
        // One joint phase over all four blocks.
        let (n_s, n_i, n_u) = (s_net.param_count(), i_net.param_count(), u_net.param_count());
        let n = n_s + n_i + n_u + 1;
        let mut g = Graph::new(n);
        let sb = GraphMlp::bind(&mut g, s_net.dims(), 0);
        let ib = GraphMlp::bind(&mut g, i_net.dims(), n_s);
        let ub = GraphMlp::bind(&mut g, u_net.dims(), n_s + n_i);
        let rb = GraphScalar::bind(&mut g, n - 1);
        let data = match variant {
            EstimatorVariant::LsPinns | EstimatorVariant::GenLsPinns => {
                lre_data_loss(&mut g, &ib, &ub, obs, controls, w, cfg.lre_epsilon)?
            }
            _ => data_loss(&mut g, &ib, &ub, obs, controls, w)?,
        };
        let res = match assumption {
            Assumption::RecoveryKnown(gamma) => {
                residual_loss(&mut g, &sb, &ib, &ub, &rb, gamma, &grid, w, window)
            }
            Assumption::R0Known(r0) => {
                residual_loss_r0(&mut g, &sb, &ib, &ub, &rb, r0, &grid, w, window)
            }
        };
        let ic = ic_loss(&mut g, &sb, &ib, i0, w);
        let dr = g.add(data, res);
        let root = g.add(dr, ic);
        let terms = [
            ("joint.data", data),
            ("joint.residual", res),
            ("joint.ic", ic),
            ("joint.total", root),
        ];

        let mut params = Vec::with_capacity(n);
        params.extend_from_slice(s_net.params());
        params.extend_from_slice(i_net.params());
        params.extend_from_slice(u_net.params());
        params.push(rate.raw);
        let epochs = scale(cfg.physics_epochs);
        let (phase_adams, total) = train(
            &mut g,
            root,
            &terms,
            &mut params,
            epochs,
            cfg.learning_rate,
            Some(cfg.rate_learning_rate),
            variant,
            &mut log,
        )?;
        s_net.set_params(&params[..n_s]);
        i_net.set_params(&params[n_s..n_s + n_i]);
        u_net.set_params(&params[n_s + n_i..n_s + n_i + n_u]);
        rate = TrainableScalar::new(params[n - 1]);
        final_losses.push(("joint.total", total));
        for (i, a) in phase_adams.into_iter().enumerate() {
            let label = if i == 0 { "joint" } else { "joint.rate" };
            adams.push((label.to_string(), a));
        }
        epochs_run.push(("joint".to_string(), epochs));
    } else {
        // Stage 1: data regression of the infected and control networks.
        let (n_i, n_u) = (i_net.param_count(), u_net.param_count());
        {
            let mut g = Graph::new(n_i + n_u);
            let ib = GraphMlp::bind(&mut g, i_net.dims(), 0);
            let ub = GraphMlp::bind(&mut g, u_net.dims(), n_i);
            let root = match variant {
                EstimatorVariant::SiPinns => {
                    si_data_loss_stage1(&mut g, &ib, &ub, obs, controls, w)?
                }
                _ => split_data_loss(&mut g, &ib, &ub, obs, controls, w)?,
            };
            let terms = [("stage1.total", root)];
            let mut params = Vec::with_capacity(n_i + n_u);
            params.extend_from_slice(i_net.params());
            params.extend_from_slice(u_net.params());
            let epochs = scale(cfg.data_epochs);
            let (phase_adams, total) = train(
                &mut g,
                root,
                &terms,
                &mut params,
                epochs,
                cfg.learning_rate,
                None,
                variant,
                &mut log,
            )?;
            i_net.set_params(&params[..n_i]);
            u_net.set_params(&params[n_i..]);
            final_losses.push(("stage1.total", total));
            adams.push(("stage1".to_string(), phase_adams.into_iter().next().unwrap()));
            epochs_run.push(("stage1".to_string(), epochs));
        }

        // Stage 2: physics training of the susceptible network and the rate,
        // with the fitted infected/control networks frozen.
        {
            let n_s = s_net.param_count();
            let n = n_s + 1;
            let mut g = Graph::new(n);
            let sb = GraphMlp::bind(&mut g, s_net.dims(), 0);
            let rb = GraphScalar::bind(&mut g, n_s);
            let root = match assumption {
                Assumption::RecoveryKnown(gamma) => {
                    // Derived S/R series via the discrete recovery integral.
                    let i_vals: Vec<f64> =
                        (0..=k).map(|j| i_net.forward(j as f64 / window)).collect();
                    let derived = integral_operation(&i_vals, controls, gamma, 0.0)?;
                    si_loss_stage2(
                        &mut g,
                        &sb,
                        &rb,
                        &FrozenMlp(&i_net),
                        &FrozenMlp(&u_net),
                        gamma,
                        &derived,
                        &grid,
                        w,
                        window,
                    )
                }
                Assumption::R0Known(r0) => split_physics_loss(
                    &mut g,
                    &sb,
                    &rb,
                    &FrozenMlp(&i_net),
                    &FrozenMlp(&u_net),
                    r0,
                    &grid,
                    i0,
                    w,
                    window,
                ),
            };
            let terms = [("stage2.total", root)];
            let mut params = Vec::with_capacity(n);
            params.extend_from_slice(s_net.params());
            params.push(rate.raw);
            let epochs = scale(cfg.physics_epochs);
            let (phase_adams, total) = train(
                &mut g,
                root,
                &terms,
                &mut params,
                epochs,
                cfg.learning_rate,
                Some(cfg.rate_learning_rate),
                variant,
                &mut log,
            )?;
            s_net.set_params(&params[..n_s]);
            rate = TrainableScalar::new(params[n_s]);
            final_losses.push(("stage2.total", total));
            for (i, a) in phase_adams.into_iter().enumerate() {
                let label = if i == 0 { "stage2" } else { "stage2.rate" };
                adams.push((label.to_string(), a));
            }
            epochs_run.push(("stage2".to_string(), epochs));
        }
    }

    // Evaluate the trained networks at integer days.
    let mut s_hat = Vec::with_capacity(k + 1);
    let mut i_hat = Vec::with_capacity(k + 1);
    let mut r_hat = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let t = j as f64 / window;
        let s = s_net.forward(t);
        let i = i_net.forward(t);
        s_hat.push(s);
        i_hat.push(i);
        r_hat.push(1.0 - s - i);
    }
    let (beta_hat, gamma_hat) = match assumption {
        Assumption::RecoveryKnown(_) => (rate.value(), None),
        Assumption::R0Known(r0) => {
            let gamma = rate.value();
            (r0 * gamma, Some(gamma))
        }
    };

    let result = EstimateResult {
        day: k,
        s_hat,
        i_hat,
        r_hat,
        beta_hat,
        gamma_hat,
        final_losses,
        training_log: log,
    };
    let snapshot = EstimatorSnapshot {
        variant,
        step: k,
        epochs_run,
        s_net,
        i_net,
        u_net,
        rate_raw: rate.raw,
        adams,
    };
    Ok((result, snapshot))
}
