//! Closed-loop epidemic control toolkit: SIR dynamics with Poisson-noised
//! observations, joint state/parameter estimation via physics-informed
//! neural networks, and a receding-horizon MPC solver.

pub mod closed_loop;
pub mod config;
pub mod error;
pub mod estimators;
pub mod identify;
pub mod losses;
pub mod metrics;
pub mod mpc;
pub mod neural;
pub mod rng;
pub mod sir;
pub mod snapshot;

pub use error::{Error, Result};
pub use sir::{ObservationSeries, SirParams, SirState, Trajectory};
