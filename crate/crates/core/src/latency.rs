//! Latency/reliability floors and the auxiliary-rate / control-parameter subproblem.
//!
//! Per UE and slot the scheduler minimises
//!
//! ```text
//!   Y * phi - nu * ln(phi)    s.t.  pi * nu >= nu0,  phi0 <= phi <= r_max
//! ```
//!
//! which is a DC program: `-nu ln(phi) = nu ln(nu / phi) - nu ln(nu)`, a relative
//! entropy minus a negative entropy. The convex-concave procedure linearises the
//! concave part at the current `nu` and solves the remaining convex problem
//! exactly: for fixed `nu` the optimal `phi` is `clamp(nu / Y, phi0, r_max)`, and the
//! partial minimum is convex in `nu`, so a golden-section search finishes the step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traffic::UeProfile;

/// A rate floor after clamping to the UE's rate ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFloor {
    pub value: f64,
    /// The unclamped floor exceeded `r_max`: the latency target cannot be met this slot.
    pub infeasible: bool,
}

fn floor_from_history(t: usize, profile: &UeProfile, history: f64) -> RateFloor {
    if profile.is_idle() {
        return RateFloor {
            value: 0.0,
            infeasible: false,
        };
    }
    let lambda = profile.mean_arrival;
    let catch_up =
        t as f64 * lambda - lambda * profile.delay_bound * profile.reliability_eps - history;
    let raw = profile.rate_min.max(catch_up);
    if raw > profile.rate_max {
        RateFloor {
            value: profile.rate_max,
            infeasible: true,
        }
    } else {
        RateFloor {
            value: raw,
            infeasible: false,
        }
    }
}

/// Per-slot minimum rate `r0(t) = max{r_min, t lambda - lambda d_th eps - sum_{tau<t} r(tau)}`.
pub fn min_rate_floor(t: usize, profile: &UeProfile, served_cum: f64) -> RateFloor {
    floor_from_history(t, profile, served_cum)
}

/// Auxiliary-rate floor `phi0(t)`, the same expression over the auxiliary history.
pub fn aux_floor(t: usize, profile: &UeProfile, aux_cum: f64) -> RateFloor {
    floor_from_history(t, profile, aux_cum)
}

/// Control-parameter floor `nu0(t) = max{Y(t) - a_max, 1}`.
pub fn control_floor(virtual_queue: f64, arrival_cap: f64) -> f64 {
    (virtual_queue - arrival_cap).max(1.0)
}

/// Largest derivative of `ln x` over the feasible auxiliary range, `1 / r_min`.
pub fn utility_slope_bound(profile: &UeProfile) -> f64 {
    1.0 / profile.rate_min
}

/// One UE's instance of the auxiliary/control subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxSubproblem {
    pub virtual_queue: f64,
    pub aux_floor: f64,
    pub aux_ceiling: f64,
    pub control_floor: f64,
    pub pi: f64,
    pub weight: f64,
    /// Upper end of the `nu` search interval. The subproblem itself leaves `nu` unbounded.
    pub control_ceiling: f64,
}

/// Factor applied in [`AuxSubproblem::new`] to the default `nu` search ceiling.
pub const DEFAULT_CONTROL_CEILING_FACTOR: f64 = 2.0;

impl AuxSubproblem {
    /// Builds a subproblem with the default search ceiling
    /// `2 * max(nu0 / pi, Y * r_max, 1)`.
    pub fn new(
        virtual_queue: f64,
        aux_floor: f64,
        aux_ceiling: f64,
        control_floor: f64,
        pi: f64,
        weight: f64,
    ) -> Self {
        let mut sub = Self {
            virtual_queue,
            aux_floor,
            aux_ceiling,
            control_floor,
            pi,
            weight,
            control_ceiling: 0.0,
        };
        sub.control_ceiling = sub.default_control_ceiling(DEFAULT_CONTROL_CEILING_FACTOR);
        sub
    }

    pub fn default_control_ceiling(&self, factor: f64) -> f64 {
        factor
            * (self.control_floor / self.pi)
                .max(self.virtual_queue * self.aux_ceiling)
                .max(1.0)
    }

    /// Smallest feasible `nu`, from `pi * nu >= nu0`.
    pub fn control_lower(&self) -> f64 {
        self.control_floor / self.pi
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.virtual_queue >= 0.0) || !self.virtual_queue.is_finite() {
            return Err(Error::invalid(
                "virtual queue must be finite and non-negative",
            ));
        }
        if !(self.aux_floor > 0.0 && self.aux_floor <= self.aux_ceiling) {
            return Err(Error::invalid(format!(
                "auxiliary bounds [{}, {}] are empty or non-positive",
                self.aux_floor, self.aux_ceiling
            )));
        }
        if !(self.control_floor >= 1.0) {
            return Err(Error::invalid("control floor must be at least 1"));
        }
        if !(self.pi > 0.0) {
            return Err(Error::invalid("pi must be positive"));
        }
        if !(self.weight >= 0.0) {
            return Err(Error::invalid("weight must be non-negative"));
        }
        if !(self.control_ceiling >= self.control_lower()) || !self.control_ceiling.is_finite() {
            return Err(Error::invalid("control search interval is empty"));
        }
        Ok(())
    }

    /// `Y phi - w nu ln(phi)`.
    pub fn objective(&self, aux: f64, control: f64) -> f64 {
        self.virtual_queue * aux - self.weight * control * aux.ln()
    }

    /// Minimiser over `phi` of the objective for a fixed `nu`.
    pub fn best_aux(&self, control: f64) -> f64 {
        if self.virtual_queue > 0.0 {
            (self.weight * control / self.virtual_queue).clamp(self.aux_floor, self.aux_ceiling)
        } else {
            self.aux_ceiling
        }
    }

    /// Convexified objective around `anchor`, already minimised over `phi`.
    fn surrogate(&self, control: f64, anchor: f64) -> f64 {
        let aux = self.best_aux(control);
        let h0 = control * (control / aux).ln();
        let g0_hat = anchor * anchor.ln() + (1.0 + anchor.ln()) * (control - anchor);
        self.weight * (h0 - g0_hat) + self.virtual_queue * aux
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CcpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcpResult {
    pub aux: f64,
    pub control: f64,
    /// True objective at the starting point and after every iteration.
    pub objective_trace: Vec<f64>,
    /// `(phi, nu)` at the starting point and after every iteration.
    pub iterates: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    /// The returned `nu` sits on the search ceiling.
    pub at_control_ceiling: bool,
}

impl CcpResult {
    pub fn objective(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("trace holds the starting point")
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_section<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    max_iter: usize,
) -> f64 {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iter {
        if hi - lo <= 1e-14 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

fn run_ccp(sub: &AuxSubproblem, start: f64, opts: &CcpOptions) -> CcpResult {
    let lo = sub.control_lower();
    let hi = sub.control_ceiling;
    let mut control = start.clamp(lo, hi);
    let mut aux = sub.best_aux(control);
    let mut objective = sub.objective(aux, control);
    let mut objective_trace = vec![objective];
    let mut iterates = vec![(aux, control)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let anchor = control;
        let surrogate = |v: f64| sub.surrogate(v, anchor);
        let interior = golden_section(surrogate, lo, hi, 200);
        // The surrogate is tight at the anchor, so keeping the anchor on ties
        // preserves descent of the true objective.
        let mut next = anchor;
        let mut best = surrogate(anchor);
        for cand in [interior, lo, hi] {
            let val = surrogate(cand);
            if val < best {
                best = val;
                next = cand;
            }
        }
        iterations += 1;
        control = next;
        aux = sub.best_aux(control);
        let prev = objective;
        objective = sub.objective(aux, control);
        objective_trace.push(objective);
        iterates.push((aux, control));
        if next == anchor || (objective - prev).abs() <= opts.tol * prev.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    CcpResult {
        aux,
        control,
        objective_trace,
        iterates,
        iterations,
        converged,
        at_control_ceiling: control >= hi,
    }
}

/// Solves the auxiliary/control subproblem with the convex-concave procedure.
///
/// The procedure is started from `max(nu0 / pi, 1)` and from both ends of the
/// `nu` search interval; the run with the lowest final objective is returned.
/// The true objective is linear in `nu` for fixed `phi`, so its local minima sit
/// at the interval ends and a single start can stall on the wrong one.
pub fn solve_aux_ccp(sub: &AuxSubproblem, opts: &CcpOptions) -> Result<CcpResult> {
    sub.validate()?;
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::invalid(
            "CCP needs a positive tolerance and iteration budget",
        ));
    }
    let lo = sub.control_lower();
    let hi = sub.control_ceiling;
    let mut starts = vec![lo.max(1.0).min(hi), lo, hi];
    starts.dedup();

    let mut best: Option<CcpResult> = None;
    for start in starts {
        let run = run_ccp(sub, start, opts);
        if best
            .as_ref()
            .is_none_or(|b| run.objective() < b.objective())
        {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Closed-form auxiliary rate for a fixed control parameter `v`:
/// `clamp(w v / Y, floor, ceiling)`, or the ceiling when `Y = 0`.
pub fn fixed_control_aux(
    virtual_queue: f64,
    control: f64,
    weight: f64,
    floor: f64,
    ceiling: f64,
) -> f64 {
    if virtual_queue > 0.0 {
        (weight * control / virtual_queue).clamp(floor, ceiling)
    } else {
        ceiling
    }
}
