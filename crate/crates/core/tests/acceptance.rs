//! Acceptance suite: solver oracles (1-5), simulation trends (6-10) and
//! determinism (11). Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use urllc_core::channel::{
    deterministic_rate, ergodic_rate_mc, solve_omega, ChannelParams, Correlation,
};
use urllc_core::latency::{solve_aux_ccp, AuxSubproblem, CcpOptions};
use urllc_core::power::{waterfill, PowerProblem};
use urllc_core::traffic::{update_queue, update_virtual_queue};
use urllc_core::{
    generate_scenario, run_experiment, run_realization, ExperimentOutput, PolicyKind, RunOptions,
    ScenarioConfig, SimOptions,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

// ---------------------------------------------------------------- 1: omega

fn identity_root(n: f64, m: f64, a: f64) -> f64 {
    // N x^2 + (N a + M - N) x - N a = 0
    let b = n * a + m - n;
    (-b + (b * b + 4.0 * n * n * a).sqrt()) / (2.0 * n)
}

fn criterion_1() -> Outcome {
    let mut worst_closed: f64 = 0.0;
    let mut skipped = Vec::new();
    for n in [8usize, 32] {
        for m in [4usize, 16] {
            if m > n {
                skipped.push(format!("N={n},M={m}"));
                continue;
            }
            for a in [0.01, 0.1] {
                let p = ChannelParams {
                    n_antennas: n,
                    regularization: a,
                    correlation: Correlation::Scalar(vec![1.0; m]),
                    csi_accuracy: vec![0.0; m],
                    power_budget: 1.0,
                };
                let sol = solve_omega(&p, 1e-14, 100_000).unwrap();
                let root = identity_root(n as f64, m as f64, a);
                for o in &sol.omegas {
                    worst_closed = worst_closed.max((o - root).abs());
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let n = 8;
    let mut worst_residual: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.random_range(1..=n);
        let alpha = rng.random_range(0.01..0.2);
        let thetas: Vec<DMatrix<f64>> = (0..m)
            .map(|_| {
                let x = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                let scale = rng.random_range(0.1..10.0);
                (&x * x.transpose()) * (scale / n as f64) + DMatrix::identity(n, n) * 1e-3
            })
            .collect();
        let p = ChannelParams {
            n_antennas: n,
            regularization: alpha,
            correlation: Correlation::Matrix(thetas.clone()),
            csi_accuracy: vec![0.0; m],
            power_budget: 1.0,
        };
        let sol = solve_omega(&p, 1e-12, 100_000).unwrap();
        let mut kernel = DMatrix::<f64>::identity(n, n);
        for (t, o) in thetas.iter().zip(&sol.omegas) {
            kernel += t / (n as f64 * (alpha + o));
        }
        let inv = kernel.try_inverse().unwrap();
        for (t, o) in thetas.iter().zip(&sol.omegas) {
            worst_residual = worst_residual.max(((t * &inv).trace() / n as f64 - o).abs());
        }
    }
    let mut detail =
        format!("closed-form max err {worst_closed:.2e}, PSD max residual {worst_residual:.2e}");
    if !skipped.is_empty() {
        detail.push_str(&format!(" (N<M skipped: {})", skipped.join(" ")));
    }
    outcome(worst_closed < 1e-8 && worst_residual < 1e-8, detail)
}

// ---------------------------------------------------------------- 2: water-filling

fn ue_value(prob: &PowerProblem, m: usize, p: f64) -> f64 {
    prob.priorities[m] * (1.0 + prob.gains[m] * p).log2()
}

/// Exact maximum over the budget simplex discretised into `k` shares per UE.
fn simplex_grid_optimum(prob: &PowerProblem, k: usize) -> f64 {
    let share = |m: usize, s: usize| prob.budget * s as f64 / k as f64 / prob.budget_weights[m];
    let mut best: Vec<f64> = (0..=k).map(|s| ue_value(prob, 0, share(0, s))).collect();
    for m in 1..prob.priorities.len() {
        let vals: Vec<f64> = (0..=k).map(|s| ue_value(prob, m, share(m, s))).collect();
        best = (0..=k)
            .map(|j| {
                (0..=j)
                    .map(|s| best[j - s] + vals[s])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    best.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn kkt_residual(prob: &PowerProblem, powers: &[f64], mu: f64) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    let mut worst: f64 = 0.0;
    for (m, &p) in powers.iter().enumerate() {
        let marginal = prob.priorities[m] * prob.gains[m] / ((1.0 + prob.gains[m] * p) * ln2);
        let price = mu * prob.budget_weights[m];
        if p > 0.0 {
            worst = worst.max((marginal - price).abs() / price);
        } else {
            worst = worst.max(((marginal - price) / price).max(0.0));
        }
    }
    let used: f64 = powers
        .iter()
        .zip(&prob.budget_weights)
        .map(|(p, w)| p * w)
        .sum();
    worst.max((used - prob.budget).abs() / prob.budget)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_gap, mut worst_kkt): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let m = rng.random_range(1..=4);
        let prob = PowerProblem {
            priorities: (0..m).map(|_| rng.random_range(0.05..10.0)).collect(),
            gains: (0..m).map(|_| rng.random_range(0.1..1.0)).collect(),
            budget_weights: (0..m).map(|_| rng.random_range(0.01..2.0)).collect(),
            budget: rng.random_range(0.1..50.0),
        };
        let sol = waterfill(&prob, 1e-12).unwrap();
        let grid = simplex_grid_optimum(&prob, 1000);
        let got = prob.objective(&sol.powers);
        worst_gap = worst_gap.max((grid - got) / grid.abs());
        worst_kkt = worst_kkt.max(kkt_residual(&prob, &sol.powers, sol.multiplier));
    }

    let sym = PowerProblem {
        priorities: vec![2.5; 4],
        gains: vec![0.75; 4],
        budget_weights: vec![0.3; 4],
        budget: 7.0,
    };
    let s = waterfill(&sym, 1e-12).unwrap();
    let symmetric = s.powers.iter().all(|p| *p == s.powers[0]);
    let zero = PowerProblem {
        priorities: vec![0.0, 3.0, 0.0],
        gains: vec![0.9, 0.9, 0.9],
        budget_weights: vec![0.5, 0.5, 0.5],
        budget: 2.0,
    };
    let z = waterfill(&zero, 1e-12).unwrap();
    let zero_ok =
        z.powers[0] == 0.0 && z.powers[2] == 0.0 && (z.powers[1] - 4.0).abs() <= 4.0 * 1e-12;

    outcome(
        worst_gap <= 1e-3 && worst_kkt < 1e-6 && symmetric && zero_ok,
        format!(
            "max grid gap {worst_gap:.2e}, max KKT residual {worst_kkt:.2e}, symmetric {symmetric}, zero-priority {zero_ok}"
        ),
    )
}

// ---------------------------------------------------------------- 3: CCP

fn random_subproblem(rng: &mut ChaCha8Rng) -> AuxSubproblem {
    // Half the instances on unit scale, half on the bits-per-slot scale of the simulator.
    let scale = if rng.random_bool(0.5) { 1.0 } else { 1e4 };
    let floor = rng.random_range(0.1..2.0) * scale;
    let ceiling = floor + rng.random_range(0.1..3.0) * scale;
    let y = if rng.random_bool(0.1) {
        0.0
    } else {
        rng.random_range(0.0..30.0) * scale
    };
    AuxSubproblem::new(
        y,
        floor,
        ceiling,
        rng.random_range(1.0..50.0),
        rng.random_range(0.2..3.0) / scale,
        rng.random_range(0.1..5.0),
    )
}

fn grid_optimum(sub: &AuxSubproblem) -> f64 {
    let (lo, hi) = (sub.control_floor / sub.pi, sub.control_ceiling);
    let k = 1500;
    let mut best = f64::INFINITY;
    for i in 0..=k {
        let nu = lo + (hi - lo) * i as f64 / k as f64;
        for j in 0..=k {
            let phi = sub.aux_floor + (sub.aux_ceiling - sub.aux_floor) * j as f64 / k as f64;
            best = best.min(sub.virtual_queue * phi - sub.weight * nu * phi.ln());
        }
    }
    best
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut monotone, mut feasible, mut beats_grid, mut converged) = (0, 0, 0, 0);
    let mut worst_excess = f64::NEG_INFINITY;
    let n = 50;
    for _ in 0..n {
        let sub = random_subproblem(&mut rng);
        let res = solve_aux_ccp(&sub, &CcpOptions::default()).unwrap();
        if res.objective_trace.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
        let lo = sub.control_floor / sub.pi;
        if res.iterates.iter().all(|&(phi, nu)| {
            phi >= sub.aux_floor && phi <= sub.aux_ceiling && nu >= lo && nu <= sub.control_ceiling
        }) {
            feasible += 1;
        }
        let opt = grid_optimum(&sub);
        let excess = (res.objective() - opt) / (1.0 + opt.abs());
        worst_excess = worst_excess.max(excess);
        if res.objective() <= opt + 1e-3 * (1.0 + opt.abs()) {
            beats_grid += 1;
        }
        if res.converged && res.iterations <= 100 {
            converged += 1;
        }
    }
    outcome(
        monotone == n && feasible == n && beats_grid == n && converged * 100 >= 95 * n,
        format!(
            "monotone {monotone}/{n}, feasible {feasible}/{n}, within grid bound {beats_grid}/{n} (worst excess {worst_excess:.2e}), converged {converged}/{n}"
        ),
    )
}

// ---------------------------------------------------------------- 4: deterministic equivalent

fn criterion_4() -> Outcome {
    let p = 1.0;
    let det = deterministic_rate(p, 0.0);
    let gaps: Vec<f64> = [16usize, 32, 64]
        .iter()
        .map(|&n| {
            let m = n / 2;
            let params = ChannelParams {
                n_antennas: n,
                regularization: 0.01,
                correlation: Correlation::Scalar(vec![1.0; m]),
                csi_accuracy: vec![0.0; m],
                power_budget: 1.0,
            };
            let r = ergodic_rate_mc(&params, &vec![p; m], 2000, 404).unwrap();
            (r.iter().sum::<f64>() / m as f64 - det).abs()
        })
        .collect();
    outcome(
        gaps.windows(2).all(|w| w[1] < w[0]),
        format!(
            "|MC - closed form| at N=16,32,64: {:.5} {:.5} {:.5}",
            gaps[0], gaps[1], gaps[2]
        ),
    )
}

// ---------------------------------------------------------------- 5: queues

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut exact = true;
    let mut worst: f64 = 0.0;
    let runs = 1000;
    for _ in 0..runs {
        let scale = 10f64.powi(rng.random_range(0..6));
        let (mut q, mut y) = (0.0f64, 0.0f64);
        let (mut arrived, mut served) = (0.0, 0.0);
        for _ in 0..1000 {
            let a = rng.random_range(0.0..1.0) * scale;
            let r = rng.random_range(0.0..1.2) * scale;
            let phi = rng.random_range(0.0..1.2) * scale;
            let q_next = update_queue(q, r, a);
            let y_next = update_virtual_queue(y, phi, r);
            exact &= q_next == if q > r { q - r + a } else { a };
            exact &= y_next == if y + phi > r { y + phi - r } else { 0.0 };
            served += q.min(r);
            arrived += a;
            q = q_next;
            y = y_next;
        }
        worst = worst.max(((arrived - served) - q).abs() / arrived.max(1.0));
    }

    let cfg = ScenarioConfig::default();
    let mut traces_ok = true;
    for k in 0..4 {
        let s = generate_scenario(&cfg, k).unwrap();
        for kind in PolicyKind::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(k);
            let t = run_realization(
                &s,
                &cfg.policy_config(kind),
                500,
                &mut rng,
                SimOptions::default(),
            )
            .unwrap();
            traces_ok &= t.verify(1e-6).is_ok();
        }
    }
    outcome(
        exact && worst <= 1e-6 && traces_ok,
        format!(
            "{} steps exact {exact}, worst conservation {worst:.2e}, simulator traces {traces_ok}",
            runs * 1000
        ),
    )
}

// ---------------------------------------------------------------- 6-10: trends

struct TrendRuns {
    capacity_gbps: f64,
    low: ExperimentOutput,
    moderate: ExperimentOutput,
    high: ExperimentOutput,
    nominal: ExperimentOutput,
}

fn desk_config() -> ScenarioConfig {
    // R = 500, T = 1000, 16 UEs per km^2 over the default area
    ScenarioConfig::default()
}

fn at_load(base: &ScenarioConfig, lambda_gbps: f64) -> ExperimentOutput {
    let mut cfg = base.clone();
    cfg.traffic.lambda_gbps = lambda_gbps;
    run_experiment(&cfg, &RunOptions::default()).unwrap()
}

fn trend_runs() -> TrendRuns {
    let base = desk_config();
    let mut probe = base.clone();
    probe.policy.policies = vec![PolicyKind::Wsrm];
    let capacity_gbps = run_experiment(&probe, &RunOptions::default())
        .unwrap()
        .capacity_bps()
        .unwrap()
        * 1e-9;
    TrendRuns {
        capacity_gbps,
        low: at_load(&base, 0.25 * capacity_gbps),
        moderate: at_load(&base, 0.6 * capacity_gbps),
        high: at_load(&base, 0.8 * capacity_gbps),
        nominal: at_load(&base, 2.0),
    }
}

fn criterion_6(t: &TrendRuns) -> Outcome {
    let p = t.low.get(PolicyKind::Proposed).unwrap();
    let ratios: Vec<f64> = p
        .queue_first_half_bits
        .iter()
        .zip(&p.queue_second_half_bits)
        .map(|(a, b)| b / a)
        .collect();
    let ok = p
        .queue_first_half_bits
        .iter()
        .zip(&p.queue_second_half_bits)
        .all(|(a, b)| *b <= 1.1 * a);
    outcome(
        ok,
        format!(
            "lambda {:.3} Gbps, second/first-half queue ratio per UE {:?}",
            t.low.config.traffic.lambda_gbps,
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_7(t: &TrendRuns) -> Outcome {
    let p = &t.high.get(PolicyKind::Proposed).unwrap().avg_latency_ms;
    let b1 = &t.high.get(PolicyKind::Baseline1).unwrap().avg_latency_ms;
    let b2 = &t.high.get(PolicyKind::Baseline2).unwrap().avg_latency_ms;
    let reduction = 1.0 - p.mean / b2.mean;
    outcome(
        p.mean <= b1.mean && b1.mean <= b2.mean && p.ci_high < b2.ci_low && reduction >= 0.4,
        format!(
            "lambda {:.3} Gbps: proposed {:.4} [{:.4}, {:.4}] ms, baseline1 {:.4} ms, baseline2 {:.4} [{:.4}, {:.4}] ms, reduction {:.1}%",
            t.high.config.traffic.lambda_gbps,
            p.mean,
            p.ci_low,
            p.ci_high,
            b1.mean,
            b2.mean,
            b2.ci_low,
            b2.ci_high,
            100.0 * reduction
        ),
    )
}

fn criterion_8(t: &TrendRuns) -> Outcome {
    let eps = t.moderate.config.traffic.reliability_eps;
    let p = t.moderate.get(PolicyKind::Proposed).unwrap();
    let b2 = t.moderate.get(PolicyKind::Baseline2).unwrap();
    let worst = p
        .reliability_violation_rate
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    outcome(
        worst <= eps && b2.mean_violation_rate > p.mean_violation_rate,
        format!(
            "lambda {:.3} Gbps: proposed worst-UE violation {worst:.4} (eps {eps}), mean {:.4}; baseline2 mean {:.4}",
            t.moderate.config.traffic.lambda_gbps, p.mean_violation_rate, b2.mean_violation_rate
        ),
    )
}

fn criterion_9(t: &TrendRuns) -> Outcome {
    let p = t
        .nominal
        .get(PolicyKind::Proposed)
        .unwrap()
        .avg_user_throughput_bps
        .mean;
    let w = t
        .nominal
        .get(PolicyKind::Wsrm)
        .unwrap()
        .avg_user_throughput_bps
        .mean;
    outcome(
        p >= 0.75 * w,
        format!(
            "lambda 2 Gbps: proposed {:.4} Gbps, wsrm {:.4} Gbps, ratio {:.3}",
            p * 1e-9,
            w * 1e-9,
            p / w
        ),
    )
}

fn criterion_10(t: &TrendRuns) -> Outcome {
    let all_monotone = [&t.low, &t.moderate, &t.high, &t.nominal]
        .iter()
        .flat_map(|o| o.metrics.values())
        .all(|m| {
            m.latency_ccdf.exceedance.windows(2).all(|w| w[1] <= w[0])
                && m.latency_ccdf
                    .exceedance
                    .iter()
                    .all(|p| (0.0..=1.0).contains(p))
        });
    let p = &t
        .moderate
        .get(PolicyKind::Proposed)
        .unwrap()
        .per_realization;
    let b2 = &t
        .moderate
        .get(PolicyKind::Baseline2)
        .unwrap()
        .per_realization;
    let n = p.len();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let resamples = 2000;
    let mut wins = 0;
    for _ in 0..resamples {
        let (mut sp, mut sb) = (0.0, 0.0);
        for _ in 0..n {
            let i = rng.random_range(0..n);
            sp += p[i].exceed_delay_bound;
            sb += b2[i].exceed_delay_bound;
        }
        if sp <= sb {
            wins += 1;
        }
    }
    let frac = wins as f64 / resamples as f64;
    outcome(
        all_monotone && frac >= 0.95,
        format!(
            "CCDFs monotone {all_monotone}; proposed <= baseline2 at d_th in {:.1}% of {resamples} resamples (lambda {:.3} Gbps)",
            100.0 * frac,
            t.moderate.config.traffic.lambda_gbps
        ),
    )
}

// ---------------------------------------------------------------- 11: determinism

fn criterion_11() -> Outcome {
    let mut cfg = ScenarioConfig::default();
    cfg.run.realizations = 16;
    cfg.run.slots = 300;
    cfg.traffic.lambda_gbps = 3.5;
    let json = |jobs| {
        run_experiment(
            &cfg,
            &RunOptions {
                jobs: Some(jobs),
                trace_dir: None,
            },
        )
        .unwrap()
        .to_json()
        .unwrap()
    };
    let (a, b, c) = (json(1), json(1), json(8));
    outcome(
        a == b && a == c,
        format!(
            "{} bytes, jobs 1 vs 1 vs 8 identical: {}",
            a.len(),
            a == b && a == c
        ),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results: Vec<(usize, Outcome)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
    ];
    let trends = trend_runs();
    println!("estimated per-UE capacity {:.4} Gbps", trends.capacity_gbps);
    results.push((6, criterion_6(&trends)));
    results.push((7, criterion_7(&trends)));
    results.push((8, criterion_8(&trends)));
    results.push((9, criterion_9(&trends)));
    results.push((10, criterion_10(&trends)));
    results.push((11, criterion_11()));

    let mut failed = 0;
    for (i, o) in &results {
        println!(
            "criterion {i:>2}: {} - {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!(
        "{} passed, {failed} failed ({:.1} s)",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
