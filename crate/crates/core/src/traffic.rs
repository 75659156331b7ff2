//! Arrivals, real and virtual queue recursions, and the Little's-law delay measure.
//!
//! All quantities are per slot: arrivals and rates in bits/slot, queues in bits,
//! delays in slots.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static per-UE traffic and QoS parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeProfile {
    /// Mean arrival rate `lambda` (bits/slot).
    pub mean_arrival: f64,
    /// Per-slot arrival bound `a_max` (bits/slot).
    pub arrival_cap: f64,
    /// Delay bound `d_th` (slots).
    pub delay_bound: f64,
    /// Tolerated violation probability `eps`.
    pub reliability_eps: f64,
    pub rate_min: f64,
    pub rate_max: f64,
    /// Utility weight `omega`.
    pub weight: f64,
    pub csi_accuracy: f64,
    /// Distance to the base station (m).
    pub distance: f64,
}

impl UeProfile {
    /// A UE with no traffic. All rate bounds collapse to zero.
    pub fn is_idle(&self) -> bool {
        self.mean_arrival == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("ue profile: {msg}")));
        if !(self.reliability_eps > 0.0 && self.reliability_eps < 1.0) {
            return bad("reliability eps must lie in (0, 1)");
        }
        if !(self.delay_bound >= 1.0) {
            return bad("delay bound must be at least one slot");
        }
        if !(self.weight >= 0.0) {
            return bad("weight must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.csi_accuracy) {
            return bad("csi accuracy must lie in [0, 1]");
        }
        if !(self.distance > 0.0) {
            return bad("distance must be positive");
        }
        if self.is_idle() {
            return Ok(());
        }
        if !(self.mean_arrival > 0.0) {
            return bad("mean arrival must be non-negative");
        }
        if !(self.rate_min > 0.0 && self.rate_min <= self.rate_max) {
            return bad("need 0 < rate_min <= rate_max");
        }
        if !(self.mean_arrival <= self.arrival_cap) {
            return bad("mean arrival exceeds the arrival cap");
        }
        Ok(())
    }
}

/// Per-UE state evolving over slots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UeDynamicState {
    /// Real queue `Q(t)` (bits).
    pub queue: f64,
    /// Virtual queue `Y(t)`.
    pub virtual_queue: f64,
    /// Sum of scheduled rates over slots `1..t-1`.
    pub served_cum: f64,
    /// Sum of auxiliary rates over slots `1..t-1`.
    pub aux_cum: f64,
    /// Current slot index `t`, starting at 1.
    pub slot: usize,
}

impl UeDynamicState {
    pub fn initial() -> Self {
        Self {
            slot: 1,
            ..Self::default()
        }
    }
}

/// Draws one slot's arrival: a Poisson number of `packet_bits` packets, capped at `a_max`.
pub fn generate_arrival<R: Rng + ?Sized>(
    profile: &UeProfile,
    packet_bits: f64,
    rng: &mut R,
) -> f64 {
    let mean_packets = profile.mean_arrival / packet_bits;
    if !(mean_packets > 0.0) {
        return 0.0;
    }
    let packets: f64 = Poisson::new(mean_packets)
        .expect("positive finite Poisson mean")
        .sample(rng);
    (packets * packet_bits).min(profile.arrival_cap)
}

/// `Q(t+1) = [Q(t) - r(t)]^+ + a(t)`.
pub fn update_queue(queue: f64, served: f64, arrival: f64) -> f64 {
    (queue - served).max(0.0) + arrival
}

/// `Y(t+1) = [Y(t) + phi(t) - r(t)]^+`.
pub fn update_virtual_queue(virtual_queue: f64, aux: f64, served: f64) -> f64 {
    (virtual_queue + aux - served).max(0.0)
}

/// Little's-law delay `Q / lambda` in slots.
pub fn delay_measure(queue: f64, mean_arrival: f64) -> Result<f64> {
    if !(mean_arrival > 0.0) {
        return Err(Error::invalid(
            "delay measure needs a positive mean arrival rate",
        ));
    }
    Ok(queue / mean_arrival)
}
