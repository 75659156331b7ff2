//! One proposed-policy slot checked against brute-force searches of its two subproblems.

use urllc_core::latency::{aux_floor, control_floor, utility_slope_bound, AuxSubproblem};
use urllc_core::policy::decide_proposed;
use urllc_core::{Cell, PolicyConfig, PolicyKind, ScenarioConfig, UeDynamicState};

fn setup() -> (Vec<UeDynamicState>, Vec<urllc_core::UeProfile>, Cell) {
    let cfg = ScenarioConfig::default();
    let profiles = vec![cfg.ue_template(80.0), cfg.ue_template(120.0)];
    let lambda = cfg.lambda_bits();
    let t = 50;
    let states = vec![
        UeDynamicState {
            queue: 40.0 * lambda,
            virtual_queue: 15.0 * lambda,
            served_cum: (t - 1) as f64 * lambda,
            aux_cum: (t - 1) as f64 * lambda,
            slot: t,
        },
        UeDynamicState {
            queue: 0.5 * lambda,
            virtual_queue: 0.05 * lambda,
            served_cum: (t - 1) as f64 * lambda,
            aux_cum: (t - 1) as f64 * lambda,
            slot: t,
        },
    ];
    let cell = Cell {
        n_antennas: 32,
        power_budget: cfg.power_budget_w(),
        omegas: vec![0.6, 0.35],
        taus: vec![0.1, 0.1],
        bits_per_se: cfg.bits_per_se(),
    };
    (states, profiles, cell)
}

#[test]
fn backlogged_ue_power_matches_budget_grid() {
    let (states, profiles, cell) = setup();
    let d = decide_proposed(
        &states,
        &profiles,
        &cell,
        &PolicyConfig::new(PolicyKind::Proposed),
    )
    .unwrap();
    assert!(d.power[0] > d.power[1]);

    let n = cell.n_antennas as f64;
    let w: Vec<f64> = cell.omegas.iter().map(|o| 1.0 / (n * o)).collect();
    let c: Vec<f64> = cell.taus.iter().map(|t| 1.0 - t * t).collect();
    let y: Vec<f64> = states.iter().map(|s| s.virtual_queue).collect();
    let value = |p: [f64; 2]| {
        (0..2)
            .map(|m| y[m] * (1.0 + c[m] * p[m]).log2())
            .sum::<f64>()
    };
    let k = 200_000;
    let best = (0..=k)
        .map(|i| {
            let share = cell.power_budget * i as f64 / k as f64;
            value([share / w[0], (cell.power_budget - share) / w[1]])
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let got = value([d.power[0], d.power[1]]);
    assert!(got >= best - 1e-3 * best.abs(), "{got} vs grid {best}");
    let used: f64 = d.power.iter().zip(&w).map(|(p, w)| p * w).sum();
    assert!(used <= cell.power_budget * (1.0 + 1e-9));
}

#[test]
fn auxiliary_choice_matches_joint_grid() {
    let (states, profiles, cell) = setup();
    let d = decide_proposed(
        &states,
        &profiles,
        &cell,
        &PolicyConfig::new(PolicyKind::Proposed),
    )
    .unwrap();
    for ue in 0..2 {
        let (s, p) = (&states[ue], &profiles[ue]);
        let sub = AuxSubproblem::new(
            s.virtual_queue,
            aux_floor(s.slot, p, s.aux_cum).value,
            p.rate_max,
            control_floor(s.virtual_queue, p.arrival_cap),
            utility_slope_bound(p),
            p.weight,
        );
        let f = |phi: f64, nu: f64| s.virtual_queue * phi - p.weight * nu * phi.ln();
        let (lo, hi) = (sub.control_floor / sub.pi, sub.control_ceiling);
        let k = 1000;
        let mut opt = f64::INFINITY;
        for i in 0..=k {
            let nu = lo + (hi - lo) * i as f64 / k as f64;
            for j in 0..=k {
                let phi = sub.aux_floor + (sub.aux_ceiling - sub.aux_floor) * j as f64 / k as f64;
                opt = opt.min(f(phi, nu));
            }
        }
        let got = f(d.aux[ue], d.control[ue]);
        assert!(
            got <= opt + 1e-3 * (1.0 + opt.abs()),
            "ue {ue}: {got} vs grid {opt}"
        );
        assert!(d.aux[ue] >= sub.aux_floor && d.aux[ue] <= sub.aux_ceiling);
        assert!(d.control[ue] >= lo);
    }
}
