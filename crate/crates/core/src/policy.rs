//! Per-slot scheduling policies.
//!
//! Every policy returns a [`SlotDecision`] for the whole cell. Within a slot the
//! order is fixed: rate floors, auxiliary/control selection, water-filling, rates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::{
    aux_floor, control_floor, fixed_control_aux, min_rate_floor, solve_aux_ccp,
    utility_slope_bound, AuxSubproblem, CcpOptions,
};
use crate::power::{rates_from_powers, waterfill, PowerProblem};
use crate::traffic::{UeDynamicState, UeProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Dynamic per-UE control parameter chosen by the CCP subproblem.
    Proposed,
    /// Static control parameter, latency-derived auxiliary floor.
    Baseline1,
    /// Static control parameter, auxiliary floor `r_min` only.
    Baseline2,
    /// Queue-oblivious weighted sum-rate maximisation.
    Wsrm,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Proposed,
        PolicyKind::Baseline1,
        PolicyKind::Baseline2,
        PolicyKind::Wsrm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Proposed => "proposed",
            PolicyKind::Baseline1 => "baseline1",
            PolicyKind::Baseline2 => "baseline2",
            PolicyKind::Wsrm => "wsrm",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown policy '{s}' (expected proposed, baseline1, baseline2 or wsrm)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Static control parameter `V` of the baselines.
    pub static_v: f64,
    pub ccp: CcpOptions,
    pub waterfill_tol: f64,
    /// Multiplier of the default `nu` search ceiling.
    pub control_ceiling_factor: f64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            static_v: 100.0,
            ccp: CcpOptions::default(),
            waterfill_tol: 1e-9,
            control_ceiling_factor: crate::latency::DEFAULT_CONTROL_CEILING_FACTOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.kind, PolicyKind::Baseline1 | PolicyKind::Baseline2)
            && !(self.static_v > 0.0)
        {
            return Err(Error::invalid("baselines need a positive static V"));
        }
        if !(self.waterfill_tol > 0.0) || !(self.ccp.tol > 0.0) || self.ccp.max_iter == 0 {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        if !(self.control_ceiling_factor >= 1.0) {
            return Err(Error::invalid("control ceiling factor must be at least 1"));
        }
        Ok(())
    }
}

/// What the scheduler needs to know about the physical layer in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n_antennas: usize,
    /// Total power budget `P` (W).
    pub power_budget: f64,
    pub omegas: Vec<f64>,
    pub taus: Vec<f64>,
    /// Bits carried per slot by one bit/s/Hz (`bandwidth * slot duration`).
    pub bits_per_se: f64,
}

impl Cell {
    pub fn n_ues(&self) -> usize {
        self.omegas.len()
    }

    /// `w_m = 1 / (N Omega_m)`.
    pub fn budget_weights(&self) -> Vec<f64> {
        let n = self.n_antennas as f64;
        self.omegas.iter().map(|o| 1.0 / (n * o)).collect()
    }

    /// `c_m = 1 - tau_m^2`.
    pub fn gains(&self) -> Vec<f64> {
        self.taus.iter().map(|t| 1.0 - t * t).collect()
    }

    pub fn power_problem(&self, priorities: Vec<f64>) -> PowerProblem {
        PowerProblem {
            priorities,
            gains: self.gains(),
            budget_weights: self.budget_weights(),
            budget: self.power_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision {
    /// `nu_m(t)`; zero for policies without a control parameter.
    pub control: Vec<f64>,
    /// `phi_m(t)` (bits/slot); zero for WSRM.
    pub aux: Vec<f64>,
    pub power: Vec<f64>,
    /// bits/s/Hz
    pub rate_se: Vec<f64>,
    /// bits/slot
    pub rate_bits: Vec<f64>,
    /// `rate_bits` clipped to `r_max`.
    pub rate_bits_clipped: Vec<f64>,
    /// Left-hand side of the power constraint.
    pub budget_used: f64,
    /// The latency floor exceeded `r_max` this slot.
    pub infeasible: Vec<bool>,
    /// The CCP landed on the `nu` search ceiling.
    pub control_at_ceiling: Vec<bool>,
}

fn check_shapes(states: &[UeDynamicState], profiles: &[UeProfile], cell: &Cell) -> Result<usize> {
    if states.len() != profiles.len()
        || profiles.len() != cell.n_ues()
        || cell.taus.len() != cell.n_ues()
    {
        return Err(Error::invalid(format!(
            "state/profile/cell UE counts differ: {} / {} / {}",
            states.len(),
            profiles.len(),
            cell.n_ues()
        )));
    }
    let slot = states.first().map_or(1, |s| s.slot);
    if states.iter().any(|s| s.slot != slot) {
        return Err(Error::invalid("UE states are at different slots"));
    }
    if slot == 0 {
        return Err(Error::invalid("slots are numbered from 1"));
    }
    Ok(slot)
}

/// Per-UE outcome of the first (auxiliary/control) stage.
struct AuxStage {
    control: Vec<f64>,
    aux: Vec<f64>,
    infeasible: Vec<bool>,
    at_ceiling: Vec<bool>,
}

impl AuxStage {
    fn new(m: usize) -> Self {
        Self {
            control: vec![0.0; m],
            aux: vec![0.0; m],
            infeasible: vec![false; m],
            at_ceiling: vec![false; m],
        }
    }
}

fn finish(
    cell: &Cell,
    profiles: &[UeProfile],
    priorities: Vec<f64>,
    stage: AuxStage,
    waterfill_tol: f64,
) -> Result<SlotDecision> {
    let sol = waterfill(&cell.power_problem(priorities), waterfill_tol)?;
    let rate_se = rates_from_powers(&sol.powers, &cell.taus);
    let rate_bits: Vec<f64> = rate_se.iter().map(|r| r * cell.bits_per_se).collect();
    let rate_bits_clipped = rate_bits
        .iter()
        .zip(profiles)
        .map(|(r, p)| r.min(p.rate_max))
        .collect();
    Ok(SlotDecision {
        control: stage.control,
        aux: stage.aux,
        power: sol.powers,
        rate_se,
        rate_bits,
        rate_bits_clipped,
        budget_used: sol.budget_used,
        infeasible: stage.infeasible,
        control_at_ceiling: stage.at_ceiling,
    })
}

fn floors_infeasible(slot: usize, profile: &UeProfile, state: &UeDynamicState) -> (f64, bool) {
    let phi0 = aux_floor(slot, profile, state.aux_cum);
    let r0 = min_rate_floor(slot, profile, state.served_cum);
    (phi0.value, phi0.infeasible || r0.infeasible)
}

/// Dynamic control: per-UE CCP for `(phi, nu)`, then water-filling on the virtual queues.
pub fn decide_proposed(
    states: &[UeDynamicState],
    profiles: &[UeProfile],
    cell: &Cell,
    cfg: &PolicyConfig,
) -> Result<SlotDecision> {
    let slot = check_shapes(states, profiles, cell)?;
    let m = states.len();
    let mut stage = AuxStage::new(m);
    for (ue, (state, profile)) in states.iter().zip(profiles).enumerate() {
        let nu0 = control_floor(state.virtual_queue, profile.arrival_cap);
        if profile.is_idle() {
            stage.control[ue] = nu0;
            continue;
        }
        let (phi0, flag) = floors_infeasible(slot, profile, state);
        let mut sub = AuxSubproblem::new(
            state.virtual_queue,
            phi0,
            profile.rate_max,
            nu0,
            utility_slope_bound(profile),
            profile.weight,
        );
        sub.control_ceiling = sub.default_control_ceiling(cfg.control_ceiling_factor);
        let res = solve_aux_ccp(&sub, &cfg.ccp).map_err(|e| e.at_slot(slot, ue))?;
        stage.control[ue] = res.control;
        stage.aux[ue] = res.aux;
        stage.infeasible[ue] = flag;
        stage.at_ceiling[ue] = res.at_control_ceiling;
    }
    let priorities = states.iter().map(|s| s.virtual_queue).collect();
    finish(cell, profiles, priorities, stage, cfg.waterfill_tol).map_err(|e| e.at_slot(slot, m))
}

/// Static control `nu = V`: the auxiliary rate has the closed form `clamp(V / Y, floor, r_max)`.
/// Baseline 1 keeps the latency-derived floor, Baseline 2 uses `r_min`.
pub fn decide_baseline(
    states: &[UeDynamicState],
    profiles: &[UeProfile],
    cell: &Cell,
    cfg: &PolicyConfig,
) -> Result<SlotDecision> {
    let slot = check_shapes(states, profiles, cell)?;
    let latency_floor = match cfg.kind {
        PolicyKind::Baseline1 => true,
        PolicyKind::Baseline2 => false,
        other => return Err(Error::invalid(format!("{other} is not a baseline policy"))),
    };
    let m = states.len();
    let mut stage = AuxStage::new(m);
    stage.control = vec![cfg.static_v; m];
    for (ue, (state, profile)) in states.iter().zip(profiles).enumerate() {
        if profile.is_idle() {
            continue;
        }
        let floor = if latency_floor {
            let (phi0, flag) = floors_infeasible(slot, profile, state);
            stage.infeasible[ue] = flag;
            phi0
        } else {
            profile.rate_min
        };
        stage.aux[ue] = fixed_control_aux(
            state.virtual_queue,
            cfg.static_v,
            profile.weight,
            floor,
            profile.rate_max,
        );
    }
    let priorities = states.iter().map(|s| s.virtual_queue).collect();
    finish(cell, profiles, priorities, stage, cfg.waterfill_tol).map_err(|e| e.at_slot(slot, m))
}

/// Weighted sum-rate maximisation with the utility weights; ignores all queues.
pub fn decide_wsrm(
    profiles: &[UeProfile],
    cell: &Cell,
    cfg: &PolicyConfig,
) -> Result<SlotDecision> {
    if profiles.len() != cell.n_ues() {
        return Err(Error::invalid("profile and cell UE counts differ"));
    }
    let priorities = profiles.iter().map(|p| p.weight).collect();
    finish(
        cell,
        profiles,
        priorities,
        AuxStage::new(profiles.len()),
        cfg.waterfill_tol,
    )
}

/// Dispatches on [`PolicyConfig::kind`].
pub fn decide(
    states: &[UeDynamicState],
    profiles: &[UeProfile],
    cell: &Cell,
    cfg: &PolicyConfig,
) -> Result<SlotDecision> {
    match cfg.kind {
        PolicyKind::Proposed => decide_proposed(states, profiles, cell, cfg),
        PolicyKind::Baseline1 | PolicyKind::Baseline2 => {
            decide_baseline(states, profiles, cell, cfg)
        }
        PolicyKind::Wsrm => decide_wsrm(profiles, cell, cfg),
    }
}
