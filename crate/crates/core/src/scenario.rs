//! Random single-cell deployments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{pathloss_gain, solve_omega, ChannelParams, Correlation, OmegaSolution};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::policy::Cell;
use crate::traffic::UeProfile;

/// One deployment: UE placement, per-UE profiles and the solved channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// UE coordinates (m) relative to the base station.
    pub positions: Vec<(f64, f64)>,
    pub profiles: Vec<UeProfile>,
    pub channel: ChannelParams,
    pub omega: OmegaSolution,
    pub cell: Cell,
    pub packet_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UePlacement {
    pub x_m: f64,
    pub y_m: f64,
    pub distance_m: f64,
    /// Path-loss gain over noise power, the scale of `Theta_m`.
    pub gain: f64,
    pub omega: f64,
}

impl Scenario {
    pub fn n_ues(&self) -> usize {
        self.profiles.len()
    }

    pub fn placements(&self) -> Vec<UePlacement> {
        let gains = self.channel.gains();
        self.positions
            .iter()
            .zip(&self.profiles)
            .zip(gains.iter().zip(&self.omega.omegas))
            .map(|((&(x, y), p), (&g, &o))| UePlacement {
                x_m: x,
                y_m: y,
                distance_m: p.distance,
                gain: g,
                omega: o,
            })
            .collect()
    }
}

/// Places UEs uniformly in the square around a centred base station, rejecting
/// points closer than the minimum distance, and solves the channel fixed point.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = cfg.cell.area_km * 1000.0 / 2.0;
    let m = cfg.n_ues();
    let mut positions = Vec::with_capacity(m);
    while positions.len() < m {
        let x = rng.random_range(-half..half);
        let y = rng.random_range(-half..half);
        if x.hypot(y) >= cfg.cell.min_distance_m {
            positions.push((x, y));
        }
    }

    let noise = cfg.noise_power_w();
    let profiles: Vec<UeProfile> = positions
        .iter()
        .map(|(x, y)| cfg.ue_template(x.hypot(*y)))
        .collect();
    let gains = profiles
        .iter()
        .map(|p| pathloss_gain(p.distance, &cfg.pathloss).map(|g| g / noise))
        .collect::<Result<Vec<_>>>()?;
    let channel = ChannelParams {
        n_antennas: cfg.cell.n_antennas,
        regularization: cfg.cell.alpha,
        correlation: Correlation::Scalar(gains),
        csi_accuracy: profiles.iter().map(|p| p.csi_accuracy).collect(),
        power_budget: cfg.power_budget_w(),
    };
    let omega = solve_omega(&channel, cfg.cell.omega_tol, cfg.cell.omega_max_iter)?;
    let cell = Cell {
        n_antennas: channel.n_antennas,
        power_budget: channel.power_budget,
        omegas: omega.omegas.clone(),
        taus: channel.csi_accuracy.clone(),
        bits_per_se: cfg.bits_per_se(),
    };
    Ok(Scenario {
        positions,
        profiles,
        channel,
        omega,
        cell,
        packet_bits: cfg.traffic.packet_bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placement_honours_min_distance_and_is_deterministic() {
        let cfg = ScenarioConfig::default();
        for seed in 0..50 {
            let s = generate_scenario(&cfg, seed).unwrap();
            assert_eq!(s.n_ues(), 4);
            assert!(s.profiles.iter().all(|p| p.distance >= 35.0));
            assert!(s
                .positions
                .iter()
                .all(|(x, y)| x.abs() <= 250.0 && y.abs() <= 250.0));
        }
        assert_eq!(
            generate_scenario(&cfg, 3).unwrap(),
            generate_scenario(&cfg, 3).unwrap()
        );
        assert_ne!(
            generate_scenario(&cfg, 3).unwrap().positions,
            generate_scenario(&cfg, 4).unwrap().positions
        );
    }

    #[test]
    fn sixteen_ues_in_quarter_square_km() {
        let mut cfg = ScenarioConfig::default();
        cfg.cell.ue_count = Some(16);
        let s = generate_scenario(&cfg, 1).unwrap();
        assert_eq!(s.n_ues(), 16);
        for p in s.placements() {
            assert!(p.gain.is_finite() && p.gain > 0.0);
            assert!(p.omega.is_finite() && p.omega > 0.0);
        }
        assert!(s.omega.residual <= cfg.cell.omega_tol);
    }
}
