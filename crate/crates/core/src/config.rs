//! Scenario configuration.
//!
//! The file format is TOML with one table per concern. Every key can be
//! overridden with a dotted `section.key=value` pair. Rates are given in Gbps
//! and times in milliseconds here; everything downstream works in bits/slot and
//! slots, and the conversion happens only in this module.

use serde::{Deserialize, Serialize};

use crate::channel::{dbm_to_watts, NoiseConfig, PathLossConfig};
use crate::error::{Error, Result};
use crate::latency::{CcpOptions, DEFAULT_CONTROL_CEILING_FACTOR};
use crate::policy::{PolicyConfig, PolicyKind};
use crate::traffic::UeProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    pub n_antennas: usize,
    pub power_dbm: f64,
    /// Side of the square deployment area (km); the base station sits in the centre.
    pub area_km: f64,
    /// Explicit UE count; takes precedence over `ue_density_per_km2`.
    pub ue_count: Option<usize>,
    pub ue_density_per_km2: f64,
    pub min_distance_m: f64,
    pub bandwidth_hz: f64,
    pub slot_ms: f64,
    /// RZF regularization `alpha`.
    pub alpha: f64,
    pub omega_tol: f64,
    pub omega_max_iter: usize,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            n_antennas: 32,
            power_dbm: 38.0,
            area_km: 0.5,
            ue_count: None,
            ue_density_per_km2: 16.0,
            min_distance_m: 35.0,
            bandwidth_hz: 1e9,
            slot_ms: 0.1,
            alpha: 0.01,
            omega_tol: 1e-12,
            omega_max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub lambda_gbps: f64,
    pub delay_bound_ms: f64,
    pub reliability_eps: f64,
    /// `r_max = rate_max_factor * lambda`.
    pub rate_max_factor: f64,
    /// `r_min = rate_min_factor * lambda`.
    pub rate_min_factor: f64,
    /// `a_max = arrival_cap_factor * lambda`.
    pub arrival_cap_factor: f64,
    pub packet_bits: f64,
    pub csi_accuracy: f64,
    pub weight: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            lambda_gbps: 2.0,
            delay_bound_ms: 10.0,
            reliability_eps: 0.05,
            rate_max_factor: 1.2,
            rate_min_factor: 0.8,
            arrival_cap_factor: 4.0,
            packet_bits: 1e4,
            csi_accuracy: 0.1,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub policies: Vec<PolicyKind>,
    pub static_v: f64,
    pub ccp_tol: f64,
    pub ccp_max_iter: usize,
    pub waterfill_tol: f64,
    pub control_ceiling_factor: f64,
    /// Drive the queues with rates clipped to `r_max` instead of the raw water-filling rates.
    pub clip_rates: bool,
}

impl Default for PolicySection {
    fn default() -> Self {
        let ccp = CcpOptions::default();
        Self {
            policies: PolicyKind::ALL.to_vec(),
            static_v: 100.0,
            ccp_tol: ccp.tol,
            ccp_max_iter: ccp.max_iter,
            waterfill_tol: 1e-9,
            control_ceiling_factor: DEFAULT_CONTROL_CEILING_FACTOR,
            clip_rates: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub slots: usize,
    pub realizations: usize,
    pub seed: u64,
    /// Leading fraction of slots excluded from every average.
    pub warmup_fraction: f64,
    pub ccdf_step_ms: f64,
    pub ccdf_max_ms: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            slots: 1000,
            realizations: 500,
            seed: 1,
            warmup_fraction: 0.1,
            ccdf_step_ms: 0.1,
            ccdf_max_ms: 50.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write one CSV trace per (policy, realization).
    pub traces: bool,
}

/// Fully resolved scenario configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub cell: CellConfig,
    pub traffic: TrafficConfig,
    pub pathloss: PathLossConfig,
    pub noise: NoiseConfig,
    pub policy: PolicySection,
    pub run: RunConfig,
    pub output: OutputConfig,
}

/// Parses a TOML override value; bare words fall back to strings.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => {
            if raw.contains(',') {
                toml::Value::Array(raw.split(',').map(|s| parse_value(s.trim())).collect())
            } else {
                toml::Value::String(raw.to_string())
            }
        }
    }
}

impl ScenarioConfig {
    /// Parses a config document, applies `key=value` overrides, and validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            set_dotted(&mut table, key, parse_value(value))?;
        }
        let cfg: ScenarioConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Applies overrides to an already resolved configuration.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        Self::from_toml_with_overrides(&self.to_toml(), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.cell;
        let t = &self.traffic;
        let r = &self.run;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_ues() == 0 {
            return bad("the scenario needs at least one UE".into());
        }
        if c.n_antennas < self.n_ues() {
            return bad(format!(
                "cell.n_antennas = {} is below the UE count {}",
                c.n_antennas,
                self.n_ues()
            ));
        }
        if !(c.area_km > 0.0)
            || !(c.min_distance_m >= 0.0)
            || c.min_distance_m * 2.0 >= c.area_km * 1000.0 * 2f64.sqrt()
        {
            return bad("cell.area_km / cell.min_distance_m leave no room for UEs".into());
        }
        if !(c.bandwidth_hz > 0.0) || !(c.slot_ms > 0.0) || !(c.alpha > 0.0) {
            return bad("cell.bandwidth_hz, cell.slot_ms and cell.alpha must be positive".into());
        }
        if !(t.lambda_gbps >= 0.0) || !(t.packet_bits > 0.0) {
            return bad(
                "traffic.lambda_gbps must be non-negative and traffic.packet_bits positive".into(),
            );
        }
        if !(t.rate_min_factor > 0.0 && t.rate_min_factor <= t.rate_max_factor) {
            return bad("need 0 < traffic.rate_min_factor <= traffic.rate_max_factor".into());
        }
        if !(t.arrival_cap_factor >= 1.0) {
            return bad("traffic.arrival_cap_factor must be at least 1".into());
        }
        if self.delay_bound_slots() < 1.0 {
            return bad("traffic.delay_bound_ms is shorter than one slot".into());
        }
        if r.slots == 0 || r.realizations == 0 {
            return bad("run.slots and run.realizations must be positive".into());
        }
        if !(0.0..1.0).contains(&r.warmup_fraction) {
            return bad("run.warmup_fraction must lie in [0, 1)".into());
        }
        if !(r.ccdf_step_ms > 0.0) || !(r.ccdf_max_ms > r.ccdf_step_ms) {
            return bad("run.ccdf_step_ms must be positive and below run.ccdf_max_ms".into());
        }
        if self.policy.policies.is_empty() {
            return bad("policy.policies is empty".into());
        }
        for kind in &self.policy.policies {
            self.policy_config(*kind)
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        self.ue_template(100.0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn n_ues(&self) -> usize {
        self.cell.ue_count.unwrap_or_else(|| {
            (self.cell.ue_density_per_km2 * self.cell.area_km * self.cell.area_km).round() as usize
        })
    }

    pub fn slot_seconds(&self) -> f64 {
        self.cell.slot_ms * 1e-3
    }

    /// Bits per slot carried by one bit/s/Hz.
    pub fn bits_per_se(&self) -> f64 {
        self.cell.bandwidth_hz * self.slot_seconds()
    }

    pub fn gbps_to_bits_per_slot(&self, gbps: f64) -> f64 {
        gbps * 1e9 * self.slot_seconds()
    }

    pub fn bits_per_slot_to_gbps(&self, bits: f64) -> f64 {
        bits / self.slot_seconds() / 1e9
    }

    pub fn lambda_bits(&self) -> f64 {
        self.gbps_to_bits_per_slot(self.traffic.lambda_gbps)
    }

    pub fn delay_bound_slots(&self) -> f64 {
        self.traffic.delay_bound_ms / self.cell.slot_ms
    }

    pub fn power_budget_w(&self) -> f64 {
        dbm_to_watts(self.cell.power_dbm)
    }

    pub fn noise_power_w(&self) -> f64 {
        self.noise.power_w(self.cell.bandwidth_hz)
    }

    pub fn warmup_slots(&self) -> usize {
        (self.run.warmup_fraction * self.run.slots as f64).floor() as usize
    }

    /// Per-UE profile for a UE at `distance_m`, in bits/slot and slots.
    pub fn ue_template(&self, distance_m: f64) -> UeProfile {
        let t = &self.traffic;
        let lambda = self.lambda_bits();
        UeProfile {
            mean_arrival: lambda,
            arrival_cap: t.arrival_cap_factor * lambda,
            delay_bound: self.delay_bound_slots(),
            reliability_eps: t.reliability_eps,
            rate_min: t.rate_min_factor * lambda,
            rate_max: t.rate_max_factor * lambda,
            weight: t.weight,
            csi_accuracy: t.csi_accuracy,
            distance: distance_m,
        }
    }

    pub fn policy_config(&self, kind: PolicyKind) -> PolicyConfig {
        let p = &self.policy;
        PolicyConfig {
            kind,
            static_v: p.static_v,
            ccp: CcpOptions {
                tol: p.ccp_tol,
                max_iter: p.ccp_max_iter,
            },
            waterfill_tol: p.waterfill_tol,
            control_ceiling_factor: p.control_ceiling_factor,
        }
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(Error::Config(format!("malformed override key '{key}'")));
        }
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{part}' is not a section")))?;
    }
    Err(Error::Config(format!("malformed override key '{key}'")))
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{s}' is not of the form key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.n_ues(), 4);
        assert_eq!(cfg.delay_bound_slots(), 100.0);
        assert!((cfg.lambda_bits() - 2e5).abs() < 1e-6);
        assert!((cfg.bits_per_se() - 1e5).abs() < 1e-6);
        assert_eq!(cfg.warmup_slots(), 100);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ScenarioConfig::from_toml("[cell]\nantennas = 4\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("antennas"), "{msg}");
        let err =
            ScenarioConfig::from_toml_with_overrides("", &[("traffic.lambda".into(), "1".into())])
                .unwrap_err();
        assert!(err.to_string().contains("lambda"));
    }

    #[test]
    fn overrides_apply() {
        let cfg = ScenarioConfig::from_toml_with_overrides(
            "[traffic]\nlambda_gbps = 1.0\n",
            &[
                ("traffic.lambda_gbps".into(), "2.5".into()),
                ("cell.ue_count".into(), "16".into()),
                ("policy.policies".into(), "proposed,wsrm".into()),
                ("run.seed".into(), "9".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.traffic.lambda_gbps, 2.5);
        assert_eq!(cfg.n_ues(), 16);
        assert_eq!(
            cfg.policy.policies,
            vec![PolicyKind::Proposed, PolicyKind::Wsrm]
        );
        assert_eq!(cfg.run.seed, 9);
        assert_eq!(cfg.with_overrides(&[]).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ScenarioConfig::from_toml("[cell]\nue_count = 40\n").is_err());
        assert!(ScenarioConfig::from_toml("[run]\nslots = 0\n").is_err());
        assert!(ScenarioConfig::from_toml("[policy]\npolicies = []\n").is_err());
        assert!(ScenarioConfig::from_toml("[policy]\npolicies = [\"nope\"]\n").is_err());
        assert!(ScenarioConfig::from_toml("[traffic]\nreliability_eps = 1.5\n").is_err());
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ScenarioConfig::default();
        cfg.cell.ue_count = Some(3);
        cfg.policy.static_v = 42.0;
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
