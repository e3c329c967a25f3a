//! TOML run configuration. Every field has a default, and the defaults
//! describe the standard known-γ benchmark scenario (β = 0.6, γ = 0.2,
//! control on days 10–40); `generalized_defaults()` switches to the
//! unknown-γ scenario (β = 0.24, γ = 0.12, control on days 45–80).

use crate::closed_loop::{Scenario, ScheduleConfig};
use crate::error::{Error, Result};
use crate::estimators::{Assumption, EstimatorVariant, TrainingConfig};
use crate::mpc::MpcConfig;
use crate::rng::RunSeed;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSection {
    pub beta: f64,
    pub gamma: f64,
    pub i0: f64,
    pub variant: EstimatorVariant,
    /// Known recovery rate handed to non-generalized variants;
    /// defaults to the true γ.
    pub known_gamma: Option<f64>,
    /// Known reproduction number handed to generalized variants;
    /// defaults to the true β/γ.
    pub known_r0: Option<f64>,
    pub seed: u64,
    pub noiseless: bool,
    pub ideal_mpc: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            beta: 0.6,
            gamma: 0.2,
            i0: 0.001,
            variant: EstimatorVariant::SiPinns,
            known_gamma: None,
            known_r0: None,
            seed: 0,
            noiseless: false,
            ideal_mpc: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSection {
    pub kappa: f64,
    pub n_pop: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            n_pop: 1e6,
        }
    }
}

/// Parameter grids for `sweep`; empty axes make the sweep a no-op.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub gammas: Vec<f64>,
    pub r0s: Vec<f64>,
    pub kappas: Vec<f64>,
    pub variants: Vec<EstimatorVariant>,
    /// Refuse sweeps whose cell count exceeds this.
    pub max_runs: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            gammas: vec![0.2, 0.25, 0.3],
            r0s: vec![2.0, 2.5, 3.0],
            kappas: vec![1.0],
            variants: vec![EstimatorVariant::SiPinns],
            max_runs: 200,
        }
    }
}

fn default_mpc() -> MpcConfig {
    MpcConfig {
        horizon: 14,
        q1: 1e3,
        q2: 1.0,
        u_max: 0.4,
        i_max_star: 0.1,
        s_star: 1.0 / 3.0,
        hold_steps: 1,
    }
}

fn default_schedule() -> ScheduleConfig {
    ScheduleConfig {
        control_start: 10,
        control_end: 40,
        final_time: 50,
        t_p: 5,
        extra_points: vec![50],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    pub noise: NoiseSection,
    pub mpc: MpcConfig,
    pub schedule: ScheduleConfig,
    pub training: TrainingConfig,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSection::default(),
            noise: NoiseSection::default(),
            mpc: default_mpc(),
            schedule: default_schedule(),
            training: TrainingConfig::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl RunConfig {
    /// The unknown-γ benchmark: β = 0.24, γ = 0.12, R₀ = 2 assumed known,
    /// control on days 45–80, wider susceptible network.
    pub fn generalized_defaults() -> Self {
        Self {
            scenario: ScenarioSection {
                beta: 0.24,
                gamma: 0.12,
                variant: EstimatorVariant::GenSPinns,
                ..ScenarioSection::default()
            },
            mpc: MpcConfig {
                u_max: 0.3,
                i_max_star: 0.13,
                s_star: 1.0 / 2.5,
                ..default_mpc()
            },
            schedule: ScheduleConfig {
                control_start: 45,
                control_end: 80,
                final_time: 85,
                extra_points: vec![85],
                ..default_schedule()
            },
            training: TrainingConfig::generalized(),
            noise: NoiseSection::default(),
            sweep: SweepSection {
                variants: vec![EstimatorVariant::GenSPinns],
                ..SweepSection::default()
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("bad config: {e}")))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(format!("serialize: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// The assumption handed to the estimator: known γ for the plain
    /// variants, known R₀ for the generalized ones (both default to truth).
    pub fn assumption(&self) -> Assumption {
        if self.scenario.variant.is_generalized() {
            Assumption::R0Known(
                self.scenario
                    .known_r0
                    .unwrap_or(self.scenario.beta / self.scenario.gamma),
            )
        } else {
            Assumption::RecoveryKnown(self.scenario.known_gamma.unwrap_or(self.scenario.gamma))
        }
    }

    /// Assemble and validate a runnable scenario with the given seed.
    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        let scn = Scenario {
            params: crate::sir::SirParams::new(self.scenario.beta, self.scenario.gamma)?,
            i0: self.scenario.i0,
            kappa: self.noise.kappa,
            n_pop: self.noise.n_pop,
            noiseless: self.scenario.noiseless,
            ideal_mpc: self.scenario.ideal_mpc,
            variant: self.scenario.variant,
            assumption: self.assumption(),
            mpc: self.mpc,
            schedule: self.schedule.clone(),
            training: self.training.clone(),
            seed: RunSeed(seed),
        };
        scn.validate()?;
        Ok(scn)
    }
}
