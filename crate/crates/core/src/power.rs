//! Weighted water-filling for the per-slot power subproblem.
//!
//! Maximises `sum_m Y_m log2(1 + c_m p_m)` subject to `sum_m w_m p_m <= P`,
//! `p >= 0`, with `c_m = 1 - tau_m^2` and `w_m = 1 / (N Omega_m)`. Stationarity gives
//! `p_m(mu) = max(0, Y_m / (mu w_m ln 2) - 1 / c_m)`; the multiplier `mu` is found by
//! bisection on the (monotone) budget usage.

use serde::{Deserialize, Serialize};

use crate::channel::deterministic_rate;
use crate::error::{Error, Result};

/// Gains below this are treated as unusable links.
const MIN_GAIN: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProblem {
    /// `Y_m` (or utility weights for sum-rate maximisation).
    pub priorities: Vec<f64>,
    /// `c_m = 1 - tau_m^2`.
    pub gains: Vec<f64>,
    /// `w_m = 1 / (N Omega_m)`.
    pub budget_weights: Vec<f64>,
    pub budget: f64,
}

impl PowerProblem {
    pub fn validate(&self) -> Result<()> {
        let m = self.priorities.len();
        if self.gains.len() != m || self.budget_weights.len() != m {
            return Err(Error::invalid("power problem vectors differ in length"));
        }
        if !(self.budget > 0.0) {
            return Err(Error::invalid("power budget must be positive"));
        }
        if self
            .priorities
            .iter()
            .any(|y| !(*y >= 0.0) || !y.is_finite())
        {
            return Err(Error::invalid("priorities must be finite and non-negative"));
        }
        if self.gains.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("gains must lie in [0, 1]"));
        }
        if self
            .budget_weights
            .iter()
            .any(|w| !(*w > 0.0) || !w.is_finite())
        {
            return Err(Error::invalid("budget weights must be positive"));
        }
        Ok(())
    }

    /// `sum_m Y_m log2(1 + c_m p_m)`.
    pub fn objective(&self, powers: &[f64]) -> f64 {
        self.priorities
            .iter()
            .zip(&self.gains)
            .zip(powers)
            .map(|((y, c), p)| y * (c * p).ln_1p() / std::f64::consts::LN_2)
            .sum()
    }

    pub fn budget_used(&self, powers: &[f64]) -> f64 {
        self.budget_weights
            .iter()
            .zip(powers)
            .map(|(w, p)| w * p)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfillSolution {
    pub powers: Vec<f64>,
    /// Budget multiplier `mu` in the scale of the original priorities; zero when nothing is active.
    pub multiplier: f64,
    pub budget_used: f64,
}

/// Solves the power subproblem. All-zero priorities (or no usable link) yield zero power.
pub fn waterfill(prob: &PowerProblem, tol: f64) -> Result<WaterfillSolution> {
    prob.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("water-filling tolerance must be positive"));
    }
    let m = prob.priorities.len();
    let active: Vec<usize> = (0..m)
        .filter(|&i| prob.priorities[i] > 0.0 && prob.gains[i] >= MIN_GAIN)
        .collect();
    if active.is_empty() {
        return Ok(WaterfillSolution {
            powers: vec![0.0; m],
            multiplier: 0.0,
            budget_used: 0.0,
        });
    }

    // The argmax is invariant to scaling the priorities, so work with max Y = 1.
    let scale = active
        .iter()
        .map(|&i| prob.priorities[i])
        .fold(0.0, f64::max);
    let ln2 = std::f64::consts::LN_2;
    let powers_at = |mu: f64| -> Vec<f64> {
        let mut p = vec![0.0; m];
        for &i in &active {
            let y = prob.priorities[i] / scale;
            p[i] = (y / (mu * prob.budget_weights[i] * ln2) - 1.0 / prob.gains[i]).max(0.0);
        }
        p
    };
    let used_at = |mu: f64| prob.budget_used(&powers_at(mu));

    let mut hi = active
        .iter()
        .map(|&i| prob.priorities[i] / scale * prob.gains[i] / (ln2 * prob.budget_weights[i]))
        .fold(0.0, f64::max)
        + 1.0;
    let mut lo = 1e-12;
    while used_at(lo) < prob.budget {
        lo *= 1e-6;
        if lo < 1e-300 {
            return Err(Error::Numerical(
                "water-filling bracket could not be established".into(),
            ));
        }
    }

    // Invariant: used(lo) >= P >= used(hi).
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if used_at(mid) >= prob.budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if (prob.budget - used_at(hi)) <= tol * prob.budget {
            break;
        }
    }
    let powers = powers_at(hi);
    let budget_used = prob.budget_used(&powers);
    Ok(WaterfillSolution {
        powers,
        multiplier: hi * scale,
        budget_used,
    })
}

/// Spectral efficiency of every UE from its power and CSI error.
pub fn rates_from_powers(powers: &[f64], taus: &[f64]) -> Vec<f64> {
    powers
        .iter()
        .zip(taus)
        .map(|(p, t)| deterministic_rate(*p, *t))
        .collect()
}
