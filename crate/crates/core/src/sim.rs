//! The per-slot simulation loop and its trace.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::utility_slope_bound;
use crate::policy::{decide, PolicyConfig, PolicyKind};
use crate::scenario::Scenario;
use crate::traffic::{generate_arrival, update_queue, update_virtual_queue, UeDynamicState};

/// One UE in one slot. Queues are the values at the start of the slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub ue: usize,
    pub arrival_bits: f64,
    /// Rate that drove the queue updates (raw, or clipped when configured).
    pub rate_bits: f64,
    /// Water-filling rate clipped to `r_max`.
    pub rate_clipped_bits: f64,
    /// `min(Q, r)`, the bits actually removed from the queue.
    pub served_bits: f64,
    pub queue_bits: f64,
    pub vqueue: f64,
    pub aux: f64,
    pub nu: f64,
    pub power: f64,
    pub delay_slots: f64,
    pub infeasible: bool,
    /// `Y > nu pi + a_max + r_max`.
    pub vqueue_bound_exceeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub policy: PolicyKind,
    pub n_ues: usize,
    /// Slot-major: record `t * n_ues + ue` is slot `t + 1`.
    pub records: Vec<SlotRecord>,
    /// Per-slot power-constraint usage.
    pub budget_used: Vec<f64>,
    pub mean_arrival: Vec<f64>,
    pub delay_bound: Vec<f64>,
    pub initial_queue: Vec<f64>,
    /// Queues after the last slot's update.
    pub final_queue: Vec<f64>,
}

impl Trace {
    pub fn slots(&self) -> usize {
        self.records.len().checked_div(self.n_ues).unwrap_or(0)
    }

    pub fn record(&self, slot_index: usize, ue: usize) -> &SlotRecord {
        &self.records[slot_index * self.n_ues + ue]
    }

    /// Replays the real-queue recursion from the stored arrivals and rates.
    /// Returns the queue sequence `Q(1..=T+1)` per UE.
    pub fn replay_queues(&self) -> Vec<Vec<f64>> {
        (0..self.n_ues)
            .map(|ue| {
                let mut q = self.initial_queue[ue];
                let mut out = vec![q];
                for t in 0..self.slots() {
                    let r = self.record(t, ue);
                    q = update_queue(q, r.rate_bits, r.arrival_bits);
                    out.push(q);
                }
                out
            })
            .collect()
    }

    /// Checks that the stored queues follow the recursion bit-for-bit and that
    /// arrivals minus served bits equal the queue growth.
    pub fn verify(&self, rel_tol: f64) -> Result<()> {
        for (ue, seq) in self.replay_queues().iter().enumerate() {
            for (t, q) in seq.iter().take(self.slots()).enumerate() {
                if *q != self.record(t, ue).queue_bits {
                    return Err(Error::Numerical(format!(
                        "queue replay diverged at slot {}, ue {ue}",
                        t + 1
                    )));
                }
            }
            if seq[self.slots()] != self.final_queue[ue] {
                return Err(Error::Numerical(format!(
                    "final queue replay diverged for ue {ue}"
                )));
            }
            let (arrived, served) = (0..self.slots()).fold((0.0, 0.0), |(a, s), t| {
                let r = self.record(t, ue);
                (a + r.arrival_bits, s + r.served_bits)
            });
            let growth = self.final_queue[ue] - self.initial_queue[ue];
            let scale = arrived.max(served).max(1.0);
            if ((arrived - served) - growth).abs() > rel_tol * scale {
                return Err(Error::Numerical(format!(
                    "conservation violated for ue {ue}: arrived {arrived} served {served} growth {growth}"
                )));
            }
        }
        Ok(())
    }

    pub const CSV_HEADER: [&'static str; 11] = [
        "slot",
        "ue",
        "arrival_bits",
        "rate_bits",
        "queue_bits",
        "vqueue",
        "aux",
        "nu",
        "power",
        "delay_slots",
        "infeasible",
    ];

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.slot.to_string(),
                r.ue.to_string(),
                r.arrival_bits.to_string(),
                r.rate_bits.to_string(),
                r.queue_bits.to_string(),
                r.vqueue.to_string(),
                r.aux.to_string(),
                r.nu.to_string(),
                r.power.to_string(),
                r.delay_slots.to_string(),
                u8::from(r.infeasible).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimOptions {
    /// Drive the queues with `min(r, r_max)` instead of the raw rate.
    pub clip_rates: bool,
}

/// Runs `slots` slots of one policy on one scenario. Arrivals are drawn from
/// `rng` in slot-major, UE-minor order, so identically seeded runs of different
/// policies see the same traffic.
pub fn run_realization<R: Rng + ?Sized>(
    scenario: &Scenario,
    policy: &PolicyConfig,
    slots: usize,
    rng: &mut R,
    opts: SimOptions,
) -> Result<Trace> {
    policy.validate()?;
    let m = scenario.n_ues();
    for p in &scenario.profiles {
        p.validate()?;
    }
    let mut states = vec![UeDynamicState::initial(); m];
    let mut trace = Trace {
        policy: policy.kind,
        n_ues: m,
        records: Vec::with_capacity(slots * m),
        budget_used: Vec::with_capacity(slots),
        mean_arrival: scenario.profiles.iter().map(|p| p.mean_arrival).collect(),
        delay_bound: scenario.profiles.iter().map(|p| p.delay_bound).collect(),
        initial_queue: vec![0.0; m],
        final_queue: vec![0.0; m],
    };
    let mut arrivals = vec![0.0; m];

    for t in 1..=slots {
        for (a, p) in arrivals.iter_mut().zip(&scenario.profiles) {
            *a = generate_arrival(p, scenario.packet_bits, rng);
        }
        let d = decide(&states, &scenario.profiles, &scenario.cell, policy)?;
        trace.budget_used.push(d.budget_used);
        for (ue, (state, profile)) in states.iter_mut().zip(&scenario.profiles).enumerate() {
            let rate = if opts.clip_rates {
                d.rate_bits_clipped[ue]
            } else {
                d.rate_bits[ue]
            };
            let q = state.queue;
            let y = state.virtual_queue;
            let bound_exceeded = policy.kind == PolicyKind::Proposed
                && !profile.is_idle()
                && y > d.control[ue] * utility_slope_bound(profile)
                    + profile.arrival_cap
                    + profile.rate_max;
            trace.records.push(SlotRecord {
                slot: t,
                ue,
                arrival_bits: arrivals[ue],
                rate_bits: rate,
                rate_clipped_bits: d.rate_bits_clipped[ue],
                served_bits: q.min(rate),
                queue_bits: q,
                vqueue: y,
                aux: d.aux[ue],
                nu: d.control[ue],
                power: d.power[ue],
                delay_slots: if profile.is_idle() {
                    0.0
                } else {
                    q / profile.mean_arrival
                },
                infeasible: d.infeasible[ue],
                vqueue_bound_exceeded: bound_exceeded,
            });
            state.queue = update_queue(q, rate, arrivals[ue]);
            state.virtual_queue = update_virtual_queue(y, d.aux[ue], rate);
            state.served_cum += rate;
            state.aux_cum += d.aux[ue];
            state.slot += 1;
        }
    }
    trace.final_queue = states.iter().map(|s| s.queue).collect();
    Ok(trace)
}
