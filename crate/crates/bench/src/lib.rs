//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urllc_core::channel::{ChannelParams, Correlation};
use urllc_core::latency::AuxSubproblem;
use urllc_core::power::PowerProblem;

pub fn power_problem(m: usize, seed: u64) -> PowerProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PowerProblem {
        priorities: (0..m).map(|_| rng.random_range(0.1..10.0)).collect(),
        gains: (0..m).map(|_| rng.random_range(0.2..1.0)).collect(),
        budget_weights: (0..m).map(|_| rng.random_range(0.01..1.0)).collect(),
        budget: 10.0,
    }
}

pub fn aux_subproblem(seed: u64) -> AuxSubproblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = rng.random_range(0.5..2.0) * 1e5;
    AuxSubproblem::new(
        rng.random_range(0.0..30.0) * 1e5,
        floor,
        floor + 1e5,
        rng.random_range(1.0..50.0),
        1.0 / 1.6e5,
        1.0,
    )
}

pub fn scalar_channel(n: usize, m: usize, seed: u64) -> ChannelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ChannelParams {
        n_antennas: n,
        regularization: 0.01,
        correlation: Correlation::Scalar((0..m).map(|_| rng.random_range(0.5..50.0)).collect()),
        csi_accuracy: vec![0.1; m],
        power_budget: 1.0,
    }
}
