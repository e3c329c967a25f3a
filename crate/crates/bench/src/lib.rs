//! Shared fixtures for the criterion benchmarks.

use sirmpc_core::rng::RunSeed;
use sirmpc_core::sir::{SirParams, SirState};

pub fn epidemic_setup() -> (SirState, SirParams) {
    (
        SirState::early_epidemic(0.001).unwrap(),
        SirParams::new(0.6, 0.2).unwrap(),
    )
}

pub fn bench_seed() -> RunSeed {
    RunSeed(1234)
}
