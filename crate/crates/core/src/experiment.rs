//! Monte Carlo experiments and parameter sweeps.
//!
//! Realization `k` gets its deployment and its arrival stream from
//! `(seed, k)` alone, so every policy sees the same cells and the same traffic,
//! and results do not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::metrics::{aggregate_summaries, MetricsSpec, PolicyMetrics, RealizationSummary};
use crate::policy::PolicyKind;
use crate::scenario::generate_scenario;
use crate::sim::{run_realization, SimOptions};

const SCENARIO_STREAM: u64 = 0;
const ARRIVAL_STREAM: u64 = 1;

/// Generator for one `(realization, stream)` pair of a master seed.
pub fn realization_rng(seed: u64, realization: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization as u64 * 2 + stream);
    rng
}

pub fn scenario_seed(seed: u64, realization: usize) -> u64 {
    realization_rng(seed, realization, SCENARIO_STREAM).random()
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the rayon default.
    pub jobs: Option<usize>,
    /// Write one CSV trace per (policy, realization) here.
    pub trace_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub master: u64,
    /// Deployment seed of each realization.
    pub scenario: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub config: ScenarioConfig,
    pub n_ues: usize,
    pub seeds: SeedInfo,
    pub metrics: BTreeMap<String, PolicyMetrics>,
}

impl ExperimentOutput {
    pub fn get(&self, kind: PolicyKind) -> Option<&PolicyMetrics> {
        self.metrics.get(kind.name())
    }

    /// Per-UE capacity estimate: the rate the queue-blind sum-rate policy schedules.
    pub fn capacity_bps(&self) -> Option<f64> {
        self.get(PolicyKind::Wsrm)
            .map(|m| m.avg_scheduled_rate_bps.mean)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn run_one(
    cfg: &ScenarioConfig,
    k: usize,
    spec: &MetricsSpec,
    trace_dir: Option<&Path>,
) -> Result<(u64, Vec<RealizationSummary>)> {
    let seed = scenario_seed(cfg.run.seed, k);
    let scenario = generate_scenario(cfg, seed)?;
    let opts = SimOptions {
        clip_rates: cfg.policy.clip_rates,
    };
    let mut out = Vec::with_capacity(cfg.policy.policies.len());
    for &kind in &cfg.policy.policies {
        let mut rng = realization_rng(cfg.run.seed, k, ARRIVAL_STREAM);
        let trace = run_realization(
            &scenario,
            &cfg.policy_config(kind),
            cfg.run.slots,
            &mut rng,
            opts,
        )?;
        if let Some(dir) = trace_dir {
            let path = dir.join(format!("trace_{}_{k:05}.csv", kind.name()));
            let mut w = BufWriter::new(File::create(path)?);
            trace.write_csv(&mut w)?;
            w.flush()?;
        }
        out.push(RealizationSummary::from_trace(&trace, spec));
    }
    Ok((seed, out))
}

pub fn run_experiment(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if cfg.run.realizations == 0 {
        return Err(Error::Config("run.realizations must be at least 1".into()));
    }
    if let Some(dir) = &opts.trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    let spec = MetricsSpec::from_config(cfg);
    let work = || {
        (0..cfg.run.realizations)
            .into_par_iter()
            .map(|k| run_one(cfg, k, &spec, opts.trace_dir.as_deref()))
            .collect::<Result<Vec<_>>>()
    };
    let results = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut metrics = BTreeMap::new();
    for (i, kind) in cfg.policy.policies.iter().enumerate() {
        let summaries: Vec<RealizationSummary> =
            results.iter().map(|(_, s)| s[i].clone()).collect();
        metrics.insert(
            kind.name().to_string(),
            aggregate_summaries(&summaries, &spec)?,
        );
    }
    Ok(ExperimentOutput {
        config: cfg.clone(),
        n_ues: cfg.n_ues(),
        seeds: SeedInfo {
            master: cfg.run.seed,
            scenario: results.iter().map(|(s, _)| *s).collect(),
        },
        metrics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    LambdaGbps,
    UeCount,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::LambdaGbps => "lambda_gbps",
            SweepVar::UeCount => "ue_count",
        }
    }

    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut c = cfg.clone();
        match self {
            SweepVar::LambdaGbps => c.traffic.lambda_gbps = value,
            SweepVar::UeCount => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!(
                        "ue_count must be a positive integer, got {value}"
                    )));
                }
                c.cell.ue_count = Some(value as usize);
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda_gbps" | "lambda" => Ok(SweepVar::LambdaGbps),
            "ue_count" | "m" => Ok(SweepVar::UeCount),
            _ => Err(Error::Config(format!(
                "unknown sweep variable `{s}` (lambda_gbps, ue_count)"
            ))),
        }
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub result: Result<ExperimentOutput>,
}

/// Runs one experiment per value. A failing point is recorded and the sweep continues.
pub fn run_sweep(
    cfg: &ScenarioConfig,
    var: SweepVar,
    values: &[f64],
    opts: &RunOptions,
) -> Vec<SweepPoint> {
    values
        .iter()
        .map(|&value| SweepPoint {
            value,
            result: var.apply(cfg, value).and_then(|c| run_experiment(&c, opts)),
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: [&str; 7] = [
    "sweep_value",
    "policy",
    "avg_latency_ms",
    "ci_low",
    "ci_high",
    "avgut_gbps",
    "violation_rate",
];

/// One row per (value, policy); a failed point gets a single `error` row.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_CSV_HEADER)?;
    for p in points {
        match &p.result {
            Ok(out) => {
                for (name, m) in &out.metrics {
                    w.write_record([
                        p.value.to_string(),
                        name.clone(),
                        m.avg_latency_ms.mean.to_string(),
                        m.avg_latency_ms.ci_low.to_string(),
                        m.avg_latency_ms.ci_high.to_string(),
                        (m.avg_user_throughput_bps.mean * 1e-9).to_string(),
                        m.mean_violation_rate.to_string(),
                    ])?;
                }
            }
            Err(_) => {
                let nan = f64::NAN.to_string();
                w.write_record([
                    p.value.to_string(),
                    "error".to_string(),
                    nan.clone(),
                    nan.clone(),
                    nan.clone(),
                    nan.clone(),
                    nan,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
