//! Self-checks of the solvers against brute-force or closed-form references.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::{
    deterministic_rate, ergodic_rate_mc, solve_omega, ChannelParams, Correlation,
};
use crate::error::{Error, Result};
use crate::latency::{solve_aux_ccp, AuxSubproblem, CcpOptions};
use crate::power::{waterfill, PowerProblem};
use crate::traffic::{update_queue, update_virtual_queue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Omega,
    Waterfill,
    Ccp,
    Mc,
    Queue,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::Omega,
        Check::Waterfill,
        Check::Ccp,
        Check::Mc,
        Check::Queue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Omega => "omega",
            Check::Waterfill => "waterfill",
            Check::Ccp => "ccp",
            Check::Mc => "mc",
            Check::Queue => "queue",
        }
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            Check::Omega => 1e-8,
            Check::Waterfill => 1e-3,
            Check::Ccp => 1e-3,
            Check::Mc => 0.05,
            Check::Queue => 1e-6,
        }
    }

    /// Measured gap of the check; smaller is better.
    pub fn measure(self) -> Result<f64> {
        match self {
            Check::Omega => omega_gap(),
            Check::Waterfill => waterfill_gap(),
            Check::Ccp => ccp_gap(),
            Check::Mc => mc_gap(),
            Check::Queue => Ok(queue_gap()),
        }
    }

    pub fn run(self, tolerance: Option<f64>) -> Result<CheckReport> {
        let tolerance = tolerance.unwrap_or(self.default_tolerance());
        let gap = self.measure()?;
        Ok(CheckReport {
            check: self,
            gap,
            tolerance,
            passed: gap < tolerance,
        })
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown check `{s}` (omega, waterfill, ccp, mc, queue)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: Check,
    pub gap: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn identity_params(n: usize, m: usize, alpha: f64, tau: f64) -> ChannelParams {
    ChannelParams {
        n_antennas: n,
        regularization: alpha,
        correlation: Correlation::Scalar(vec![1.0; m]),
        csi_accuracy: vec![tau; m],
        power_budget: 1.0,
    }
}

/// Worst relative error against the identity-correlation root, and worst
/// residual of random correlated instances.
fn omega_gap() -> Result<f64> {
    let mut gap: f64 = 0.0;
    for (n, m, a) in [(8, 4, 0.01), (8, 8, 0.1), (32, 4, 0.1), (32, 16, 0.01)] {
        let (nf, mf) = (n as f64, m as f64);
        let b = nf * a + mf - nf;
        let root = (-b + (b * b + 4.0 * nf * nf * a).sqrt()) / (2.0 * nf);
        let sol = solve_omega(&identity_params(n, m, a, 0.0), 1e-13, 100_000)?;
        for o in sol.omegas {
            gap = gap.max((o - root).abs() / root);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 8;
    for _ in 0..5 {
        let thetas: Vec<DMatrix<f64>> = (0..4)
            .map(|_| {
                let x = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                &x * x.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1
            })
            .collect();
        let params = ChannelParams {
            n_antennas: n,
            regularization: 0.05,
            correlation: Correlation::Matrix(thetas.clone()),
            csi_accuracy: vec![0.0; 4],
            power_budget: 1.0,
        };
        let sol = solve_omega(&params, 1e-12, 100_000)?;
        let mut kernel = DMatrix::<f64>::identity(n, n);
        for (t, o) in thetas.iter().zip(&sol.omegas) {
            kernel += t / (n as f64 * (0.05 + o));
        }
        let inv = kernel
            .try_inverse()
            .ok_or_else(|| Error::LinearAlgebra("singular kernel".into()))?;
        for (t, o) in thetas.iter().zip(&sol.omegas) {
            gap = gap.max(((t * &inv).trace() / n as f64 - o).abs());
        }
    }
    Ok(gap)
}

/// Relative shortfall of water-filling against a budget grid on two-UE instances.
fn waterfill_gap() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut gap: f64 = 0.0;
    for _ in 0..20 {
        let prob = PowerProblem {
            priorities: vec![rng.random_range(0.1..5.0), rng.random_range(0.1..5.0)],
            gains: vec![rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)],
            budget_weights: vec![rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)],
            budget: rng.random_range(0.5..20.0),
        };
        let sol = waterfill(&prob, 1e-12)?;
        let grid = 20_000;
        let best = (0..=grid)
            .map(|i| {
                let share = prob.budget * i as f64 / grid as f64;
                let p = [
                    share / prob.budget_weights[0],
                    (prob.budget - share) / prob.budget_weights[1],
                ];
                prob.objective(&p)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        gap = gap.max((best - prob.objective(&sol.powers)) / best.abs().max(1e-12));
    }
    Ok(gap.max(0.0))
}

/// Shortfall of CCP against a dense `nu` grid with the inner minimiser in closed form.
fn ccp_gap() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut gap: f64 = 0.0;
    for _ in 0..20 {
        let floor = rng.random_range(0.1..2.0);
        let sub = AuxSubproblem::new(
            rng.random_range(0.0..20.0),
            floor,
            floor + rng.random_range(0.1..5.0),
            rng.random_range(1.0..30.0),
            rng.random_range(0.2..3.0),
            rng.random_range(0.1..3.0),
        );
        let res = solve_aux_ccp(&sub, &CcpOptions::default())?;
        let (lo, hi) = (sub.control_lower(), sub.control_ceiling);
        let grid = 20_000;
        let opt = (0..=grid)
            .map(|i| {
                let nu = lo + (hi - lo) * i as f64 / grid as f64;
                let phi_grid = (0..=200)
                    .map(|j| sub.aux_floor + (sub.aux_ceiling - sub.aux_floor) * j as f64 / 200.0)
                    .map(|phi| sub.objective(phi, nu))
                    .fold(f64::INFINITY, f64::min);
                phi_grid.min(sub.objective(sub.best_aux(nu), nu))
            })
            .fold(f64::INFINITY, f64::min);
        gap = gap.max((res.objective() - opt) / (1.0 + opt.abs()));
    }
    Ok(gap.max(0.0))
}

/// Single-user Monte Carlo gap at the largest array, or infinity if the gap
/// does not shrink with the array size.
fn mc_gap() -> Result<f64> {
    let p = 1.0;
    let det = deterministic_rate(p, 0.0);
    let mut gaps = Vec::new();
    for n in [16, 32, 64] {
        let rates = ergodic_rate_mc(&identity_params(n, 1, 0.01, 0.0), &[p], 2000, 17)?;
        gaps.push((rates[0] - det).abs() / det);
    }
    if gaps.windows(2).all(|w| w[1] < w[0]) {
        Ok(gaps[2])
    } else {
        Ok(f64::INFINITY)
    }
}

/// Worst relative conservation error over randomized queue updates.
fn queue_gap() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut gap: f64 = 0.0;
    for _ in 0..100 {
        let (mut q, mut y) = (0.0, 0.0);
        let (mut arrived, mut served) = (0.0, 0.0);
        for _ in 0..1000 {
            let a = rng.random_range(0.0..10.0);
            let r = rng.random_range(0.0..12.0);
            let phi = rng.random_range(0.0..12.0);
            served += f64::min(q, r);
            arrived += a;
            q = update_queue(q, r, a);
            let y_next = update_virtual_queue(y, phi, r);
            if y_next < 0.0 || y_next < y + phi - r {
                return f64::INFINITY;
            }
            y = y_next;
        }
        gap = gap.max(((arrived - served) - q).abs() / arrived.max(1.0));
    }
    gap
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_by_default() {
        for c in Check::ALL {
            let r = c.run(None).unwrap();
            assert!(r.passed, "{c}: gap {} tol {}", r.gap, r.tolerance);
        }
    }

    #[test]
    fn zero_tolerance_fails() {
        assert!(!Check::Omega.run(Some(0.0)).unwrap().passed);
        assert!(!Check::Queue.run(Some(0.0)).unwrap().passed);
    }

    #[test]
    fn names_round_trip() {
        for c in Check::ALL {
            assert_eq!(c.name().parse::<Check>().unwrap(), c);
        }
        assert!("nope".parse::<Check>().is_err());
    }
}
