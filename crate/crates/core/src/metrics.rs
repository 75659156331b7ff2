//! Latency, reliability and throughput metrics over many realizations.
//!
//! Each trace is first reduced to a [`RealizationSummary`]; summaries are then
//! folded in realization order, so the aggregate does not depend on how the
//! realizations were scheduled.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::sim::Trace;

const Z_95: f64 = 1.959_963_984_540_054;

/// How traces are reduced: warm-up, slot length and the CCDF grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSpec {
    pub warmup_slots: usize,
    pub slot_ms: f64,
    /// Ascending CCDF thresholds (ms).
    pub thresholds_ms: Vec<f64>,
}

impl MetricsSpec {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let r = &cfg.run;
        let n = (r.ccdf_max_ms / r.ccdf_step_ms).round() as usize;
        Self {
            warmup_slots: cfg.warmup_slots(),
            slot_ms: cfg.cell.slot_ms,
            thresholds_ms: (0..=n).map(|j| j as f64 * r.ccdf_step_ms).collect(),
        }
    }
}

/// Per-trace reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationSummary {
    pub policy: PolicyKind,
    pub n_ues: usize,
    pub slots: usize,
    pub samples_per_ue: u64,
    pub delay_sum_ms: Vec<f64>,
    /// Slots with `Q / lambda >= d_th`.
    pub violations: Vec<u64>,
    pub served_bits: Vec<f64>,
    /// Scheduled rate, whether or not the queue could use it.
    pub scheduled_bits: Vec<f64>,
    pub queue_first_half: Vec<f64>,
    pub queue_second_half: Vec<f64>,
    /// `hist[k]` counts samples exceeding exactly the first `k` thresholds.
    pub ccdf_hist: Vec<u64>,
    /// Samples with delay strictly above the delay bound.
    pub exceed_delay_bound: u64,
    pub infeasible: u64,
    pub vqueue_bound_exceeded: u64,
}

impl RealizationSummary {
    pub fn from_trace(trace: &Trace, spec: &MetricsSpec) -> Self {
        let m = trace.n_ues;
        let slots = trace.slots();
        let start = spec.warmup_slots.min(slots);
        let counted = slots - start;
        let split = start + counted / 2;
        let mut s = RealizationSummary {
            policy: trace.policy,
            n_ues: m,
            slots,
            samples_per_ue: counted as u64,
            delay_sum_ms: vec![0.0; m],
            violations: vec![0; m],
            served_bits: vec![0.0; m],
            scheduled_bits: vec![0.0; m],
            queue_first_half: vec![0.0; m],
            queue_second_half: vec![0.0; m],
            ccdf_hist: vec![0; spec.thresholds_ms.len() + 1],
            exceed_delay_bound: 0,
            infeasible: 0,
            vqueue_bound_exceeded: 0,
        };
        let first_n = (split - start).max(1) as f64;
        let second_n = (slots - split).max(1) as f64;
        for t in start..slots {
            for ue in 0..m {
                let r = trace.record(t, ue);
                let delay_ms = r.delay_slots * spec.slot_ms;
                s.delay_sum_ms[ue] += delay_ms;
                if r.delay_slots >= trace.delay_bound[ue] {
                    s.violations[ue] += 1;
                }
                if r.delay_slots > trace.delay_bound[ue] {
                    s.exceed_delay_bound += 1;
                }
                s.served_bits[ue] += r.served_bits;
                s.scheduled_bits[ue] += r.rate_bits;
                if t < split {
                    s.queue_first_half[ue] += r.queue_bits / first_n;
                } else {
                    s.queue_second_half[ue] += r.queue_bits / second_n;
                }
                s.ccdf_hist[spec.thresholds_ms.partition_point(|x| *x < delay_ms)] += 1;
                s.infeasible += u64::from(r.infeasible);
                s.vqueue_bound_exceeded += u64::from(r.vqueue_bound_exceeded);
            }
        }
        s
    }

    fn total_samples(&self) -> f64 {
        (self.samples_per_ue * self.n_ues as u64) as f64
    }

    pub fn mean_latency_ms(&self) -> f64 {
        self.delay_sum_ms.iter().sum::<f64>() / self.total_samples().max(1.0)
    }

    /// Per-UE average served rate (bits/s), averaged over UEs.
    pub fn throughput_bps(&self, slot_ms: f64) -> f64 {
        self.served_bits.iter().sum::<f64>() / self.total_samples().max(1.0) / (slot_ms * 1e-3)
    }

    pub fn scheduled_rate_bps(&self, slot_ms: f64) -> f64 {
        self.scheduled_bits.iter().sum::<f64>() / self.total_samples().max(1.0) / (slot_ms * 1e-3)
    }

    pub fn violation_rate(&self) -> f64 {
        self.violations.iter().sum::<u64>() as f64 / self.total_samples().max(1.0)
    }

    pub fn exceed_delay_bound_rate(&self) -> f64 {
        self.exceed_delay_bound as f64 / self.total_samples().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ccdf {
    pub thresholds_ms: Vec<f64>,
    /// `Pr{delay > threshold}`.
    pub exceedance: Vec<f64>,
}

impl Ccdf {
    fn from_hist(thresholds_ms: &[f64], hist: &[u64]) -> Self {
        let total: u64 = hist.iter().sum();
        let mut above = total;
        let exceedance = thresholds_ms
            .iter()
            .enumerate()
            .map(|(j, _)| {
                above -= hist[j];
                if total == 0 {
                    0.0
                } else {
                    above as f64 / total as f64
                }
            })
            .collect();
        Self {
            thresholds_ms: thresholds_ms.to_vec(),
            exceedance,
        }
    }

    /// Exceedance at the largest grid threshold not above `x_ms`.
    pub fn at(&self, x_ms: f64) -> f64 {
        let j = self.thresholds_ms.partition_point(|t| *t <= x_ms);
        if j == 0 {
            1.0
        } else {
            self.exceedance[j - 1]
        }
    }

    pub fn is_monotone(&self) -> bool {
        self.exceedance.windows(2).all(|w| w[1] <= w[0])
            && self.exceedance.iter().all(|p| (0.0..=1.0).contains(p))
    }
}

/// Mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n.max(1.0);
        let half = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Z_95 * (var / n).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationStats {
    pub latency_ms: f64,
    pub throughput_bps: f64,
    pub scheduled_rate_bps: f64,
    pub violation_rate: f64,
    pub exceed_delay_bound: f64,
}

/// Aggregate metrics of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub policy: PolicyKind,
    pub realizations: usize,
    pub avg_latency_ms: Estimate,
    pub avg_user_throughput_bps: Estimate,
    /// Per-UE scheduled rate; for a queue-blind policy this is its saturated throughput.
    pub avg_scheduled_rate_bps: Estimate,
    /// Empirical `Pr{Q/lambda >= d_th}` per UE index.
    pub reliability_violation_rate: Vec<f64>,
    pub mean_violation_rate: f64,
    pub latency_ccdf: Ccdf,
    /// Pooled `Pr{delay > d_th}`.
    pub ccdf_at_delay_bound: f64,
    /// Fraction of UE-slots whose latency floor exceeded `r_max`.
    pub infeasibility_rate: f64,
    pub vqueue_bound_exceedances: u64,
    /// Per-UE mean queue (bits) over the first and second half of the counted slots.
    pub queue_first_half_bits: Vec<f64>,
    pub queue_second_half_bits: Vec<f64>,
    pub per_realization: Vec<RealizationStats>,
}

/// Folds ordered summaries of a single policy.
pub fn aggregate_summaries(
    summaries: &[RealizationSummary],
    spec: &MetricsSpec,
) -> Result<PolicyMetrics> {
    let first = summaries
        .first()
        .ok_or_else(|| Error::ShapeMismatch("no realizations to aggregate".into()))?;
    let (m, slots, policy) = (first.n_ues, first.slots, first.policy);
    if let Some(bad) = summaries
        .iter()
        .find(|s| s.n_ues != m || s.slots != slots || s.policy != policy)
    {
        return Err(Error::ShapeMismatch(format!(
            "expected {policy} with {m} UEs x {slots} slots, found {} with {} x {}",
            bad.policy, bad.n_ues, bad.slots
        )));
    }
    let r = summaries.len() as f64;
    let per_realization: Vec<RealizationStats> = summaries
        .iter()
        .map(|s| RealizationStats {
            latency_ms: s.mean_latency_ms(),
            throughput_bps: s.throughput_bps(spec.slot_ms),
            scheduled_rate_bps: s.scheduled_rate_bps(spec.slot_ms),
            violation_rate: s.violation_rate(),
            exceed_delay_bound: s.exceed_delay_bound_rate(),
        })
        .collect();
    let lat: Vec<f64> = per_realization.iter().map(|s| s.latency_ms).collect();
    let thr: Vec<f64> = per_realization.iter().map(|s| s.throughput_bps).collect();
    let sched: Vec<f64> = per_realization
        .iter()
        .map(|s| s.scheduled_rate_bps)
        .collect();

    let samples = (first.samples_per_ue as f64 * r).max(1.0);
    let reliability_violation_rate: Vec<f64> = (0..m)
        .map(|ue| summaries.iter().map(|s| s.violations[ue]).sum::<u64>() as f64 / samples)
        .collect();
    let mut hist = vec![0u64; spec.thresholds_ms.len() + 1];
    for s in summaries {
        for (h, x) in hist.iter_mut().zip(&s.ccdf_hist) {
            *h += x;
        }
    }
    let pooled = samples * m as f64;
    let per_ue_mean = |f: fn(&RealizationSummary) -> &Vec<f64>| -> Vec<f64> {
        (0..m)
            .map(|ue| summaries.iter().map(|s| f(s)[ue]).sum::<f64>() / r)
            .collect()
    };

    Ok(PolicyMetrics {
        policy,
        realizations: summaries.len(),
        avg_latency_ms: Estimate::from_samples(&lat),
        avg_user_throughput_bps: Estimate::from_samples(&thr),
        avg_scheduled_rate_bps: Estimate::from_samples(&sched),
        mean_violation_rate: reliability_violation_rate.iter().sum::<f64>() / m.max(1) as f64,
        reliability_violation_rate,
        latency_ccdf: Ccdf::from_hist(&spec.thresholds_ms, &hist),
        ccdf_at_delay_bound: summaries.iter().map(|s| s.exceed_delay_bound).sum::<u64>() as f64
            / pooled,
        infeasibility_rate: summaries.iter().map(|s| s.infeasible).sum::<u64>() as f64 / pooled,
        vqueue_bound_exceedances: summaries.iter().map(|s| s.vqueue_bound_exceeded).sum(),
        queue_first_half_bits: per_ue_mean(|s| &s.queue_first_half),
        queue_second_half_bits: per_ue_mean(|s| &s.queue_second_half),
        per_realization,
    })
}

/// Aggregates traces of any mix of policies, keyed by policy name.
/// Traces of one policy are folded in the order given.
pub fn aggregate(
    traces: &[Trace],
    cfg: &ScenarioConfig,
) -> Result<BTreeMap<String, PolicyMetrics>> {
    if traces.is_empty() {
        return Err(Error::ShapeMismatch("no traces to aggregate".into()));
    }
    let (m, slots) = (traces[0].n_ues, traces[0].slots());
    if traces.iter().any(|t| t.n_ues != m || t.slots() != slots) {
        return Err(Error::ShapeMismatch(
            "traces differ in UE count or length".into(),
        ));
    }
    let spec = MetricsSpec::from_config(cfg);
    let mut by_policy: BTreeMap<String, Vec<RealizationSummary>> = BTreeMap::new();
    for t in traces {
        by_policy
            .entry(t.policy.name().to_string())
            .or_default()
            .push(RealizationSummary::from_trace(t, &spec));
    }
    by_policy
        .into_iter()
        .map(|(k, v)| aggregate_summaries(&v, &spec).map(|a| (k, a)))
        .collect()
}
