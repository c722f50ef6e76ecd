mod common;

use chargeprice::objective::{expected_stage_utility, safeguard_check, Decision, Normalizers};
use chargeprice::optimizer::stage::assemble_stage_qp;
use chargeprice::optimizer::*;
use chargeprice::par::Execution;
use chargeprice::scenario::{Enforcement, Scenario, UtilityWeights};
use chargeprice::System;
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn system(s: Scenario) -> System {
    System::new(s).unwrap()
}

fn xvec(dec: &Decision) -> DVector<f64> {
    DVector::from_iterator(dec.prices.len() + 1, dec.prices.iter().copied().chain([dec.procurement]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn quadratic_form_matches_direct_objective(
        stations in 1usize..=2,
        p in proptest::collection::vec(0.0f64..150.0, 2),
        o in 0.0f64..300.0,
        storage in 0.0f64..20.0,
        u in 0.0f64..10.0,
        lam in (0.0f64..1.0, 0.0f64..1.0),
    ) {
        let sys = system(toy(&[31.0], stations));
        let l1 = lam.0;
        let l2 = (1.0 - l1) * lam.1;
        let w = UtilityWeights::new(l1, l2, 1.0 - l1 - l2);
        let ctx = sys.context(0, storage, u);
        let qp = assemble_stage_qp(&ctx, &sys.scenario.satisfaction, &w, &sys.normalizers[0]).unwrap();
        let dec = Decision { prices: p[..stations].to_vec(), procurement: o };
        let direct = expected_stage_utility(&ctx, &dec, &sys.scenario.satisfaction, &w, &sys.normalizers[0]).unwrap();
        let via_qp = qp.value(&xvec(&dec));
        prop_assert!((direct - via_qp).abs() < 1e-9 * (1.0 + direct.abs()), "{direct} vs {via_qp}");
        prop_assert!((&qp.q - qp.q.transpose()).amax() == 0.0);
    }
}

#[test]
fn profit_only_form_reduces_to_elasticities() {
    let mut s = toy(&[31.0], 2);
    s.storage.unit_storage_cost = 0.0;
    let sys = system(s);
    let norm = Normalizers { w_max: 250.0, g_max: 1.0, f_max: 1.0 };
    let ctx = sys.context(0, 5.0, 0.0);
    let qp = assemble_stage_qp(&ctx, &sys.scenario.satisfaction, &UtilityWeights::new(1.0, 0.0, 0.0), &norm).unwrap();
    let e = &sys.scenario.elasticity;
    let l1 = 1.0 / 250.0;
    let want = DMatrix::from_row_slice(
        3,
        3,
        &[
            -2.0 * e.self_elasticity[0] * l1,
            2.0 * e.cross[0][1] * l1,
            0.0,
            2.0 * e.cross[1][0] * l1,
            -2.0 * e.self_elasticity[1] * l1,
            0.0,
            0.0,
            0.0,
            0.0,
        ],
    );
    assert!((&qp.q - want).amax() < 1e-15);
    assert!((qp.b[2] + 31.0 * l1).abs() < 1e-15);
}

#[test]
fn impact_only_form_vanishes_without_sensitivity() {
    let s = toy(&[31.0], 2);
    let zero = chargeprice::grid::ImpactModel { columns: DMatrix::zeros(4, 2) };
    let sys = System::with_impact(s, zero).unwrap();
    let norm = Normalizers { w_max: 1.0, g_max: 1.0, f_max: 1.0 };
    let ctx = sys.context(0, 5.0, 0.0);
    let qp = assemble_stage_qp(&ctx, &sys.scenario.satisfaction, &UtilityWeights::new(0.0, 0.0, 1.0), &norm).unwrap();
    assert_eq!(qp.q.view((0, 0), (2, 2)).amax(), 0.0);
}

#[test]
fn interior_optimum_is_stationary_in_prices() {
    let sys = system(toy(&[31.0], 2));
    let pol = greedy(&sys).unwrap();
    let e = sys.scenario.storage.capacity;
    let sol = pol.decide(&sys, 0, e, 0).unwrap();
    assert_eq!(sol.decision.procurement, 0.0);
    let qp = assemble_stage_qp(&sys.context(0, e, 0.0), &sys.scenario.satisfaction, &sys.scenario.weights, &sys.normalizers[0]).unwrap();
    let x = xvec(&sol.decision);
    let grad = &qp.q * &x + &qp.b;
    let d = sys.scenario.elasticity.affine_mean(&sol.decision.prices);
    assert!(sol.decision.prices.iter().all(|&p| p > 1.0) && d.iter().all(|&v| v > 0.1));
    assert!(sol.next_storage > 0.0 && sol.next_storage < e);
    assert!(grad.rows(0, 2).amax() < 1e-6, "{grad}");
}

/// Best expected utility on a price/procurement grid, honouring every stage constraint.
fn grid_search(sys: &System, storage: f64, p_max: f64, o_max: f64) -> (f64, Decision) {
    let l = sys.scenario.stations;
    let st = &sys.scenario.storage;
    let ctx = sys.context(0, storage, 0.0);
    let n_p = (p_max / 0.5) as usize + 1;
    let mut best = (f64::NEG_INFINITY, Decision { prices: vec![], procurement: 0.0 });
    let mut idx = vec![0usize; l];
    loop {
        let prices: Vec<f64> = idx.iter().map(|&i| i as f64 * 0.5).collect();
        let d = sys.scenario.elasticity.affine_mean(&prices);
        if d.iter().all(|&v| v >= 0.0) {
            let phi: f64 = d.iter().sum();
            if phi <= st.capacity {
                for oi in 0..=(o_max as usize) {
                    let o = oi as f64;
                    let next = storage + st.charge_eff * o - phi / st.discharge_eff;
                    if !(0.0..=st.capacity).contains(&next) {
                        continue;
                    }
                    let dec = Decision { prices: prices.clone(), procurement: o };
                    if !safeguard_check(&ctx, &dec, &sys.scenario.safeguard).satisfied {
                        continue;
                    }
                    let v = expected_stage_utility(&ctx, &dec, &sys.scenario.satisfaction, &sys.scenario.weights, &sys.normalizers[0]).unwrap();
                    if v > best.0 {
                        best = (v, dec);
                    }
                }
            }
        }
        let mut j = 0;
        loop {
            if j == l {
                return best;
            }
            idx[j] += 1;
            if idx[j] < n_p {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

#[test]
fn stage_matches_dense_grid_search() {
    for (stations, p_max, o_max) in [(1, 200.0, 60.0), (2, 130.0, 50.0)] {
        let sys = system(toy(&[31.0], stations));
        let pol = greedy(&sys).unwrap();
        let sol = pol.decide(&sys, 0, 4.0, 0).unwrap();
        let (best, _) = grid_search(&sys, 4.0, p_max, o_max);
        assert!(sol.expected_utility >= best - 1e-12, "{} < {best}", sol.expected_utility);
        // The grid optimum is no worse than our solution snapped to its cell.
        let snapped = Decision {
            prices: sol.decision.prices.iter().map(|p| (p / 0.5).round() * 0.5).collect(),
            procurement: sol.decision.procurement.round(),
        };
        let ctx = sys.context(0, 4.0, 0.0);
        let cell = expected_stage_utility(&ctx, &snapped, &sys.scenario.satisfaction, &sys.scenario.weights, &sys.normalizers[0]).unwrap();
        assert!(sol.expected_utility - best <= (sol.expected_utility - cell).abs() + 1e-12, "{} {best} {cell}", sol.expected_utility);
    }
}

#[test]
fn vacuous_safeguard_changes_nothing() {
    let mut s = two_station();
    s.safeguard.w_min = -1e6;
    let loose = sdp_solve(&system(s.clone())).unwrap();
    s.safeguard.zeta = 0.999;
    let vacuous = sdp_solve(&system(s)).unwrap();
    assert_eq!(loose.decisions, vacuous.decisions);
}

#[test]
fn storage_dynamics_examples() {
    let sys = system(twenty_station());
    let same = next_storage(37.0, 0.0, 0.0, 0.0, 0.0, &sys);
    assert_eq!((same.next, same.spill), (37.0, 0.0));
    let step = next_storage(100.0, 10.0, 10.0, 9.0, 0.0, &sys);
    assert!((step.next - 108.0).abs() < 1e-12 && step.spill == 0.0);
    let over = next_storage(195.0, 10.0, 10.0, 0.0, 0.0, &sys);
    assert_eq!(over.next, 200.0);
    assert!((over.spill - 13.0).abs() < 1e-12);
}

#[test]
fn single_horizon_sdp_is_greedy() {
    let sys = system(toy(&[31.0], 2));
    let a = sdp_solve(&sys).unwrap();
    let b = greedy(&sys).unwrap();
    assert_eq!(a.decisions, b.decisions);
}

#[test]
fn stored_policy_is_consistent_and_feasible() {
    let sys = system(two_station());
    let pol = sdp_solve(&sys).unwrap();
    let sc = &sys.scenario;
    let st = &sc.storage;
    for (k, per_level) in pol.decisions.iter().enumerate() {
        for (l, row) in per_level.iter().enumerate() {
            for (i, sol) in row.iter().enumerate() {
                let storage = pol.grid.storage[i];
                let u = sys.renewable(k, l);
                let ctx = sys.context(k, storage, u);
                let dec = &sol.decision;
                let direct = expected_stage_utility(&ctx, dec, &sc.satisfaction, &pol.weights, &sys.normalizers[k]).unwrap();
                assert!((direct - sol.expected_utility).abs() < 1e-9, "k={k} i={i}: {direct} vs {}", sol.expected_utility);
                assert!((pol.values[k][l][i] - sol.expected_utility - sol.continuation).abs() < 1e-9);
                assert!(pol.values[k][l][i].is_finite());
                let d = sc.elasticity.affine_mean(&dec.prices);
                assert!(dec.prices.iter().all(|&p| p >= 0.0));
                assert!(d.iter().all(|&v| v >= -1e-9));
                assert!((0.0..=sc.o_max).contains(&dec.procurement));
                let phi: f64 = d.iter().sum();
                let next = storage + st.charge_eff * (u + dec.procurement) - phi / st.discharge_eff;
                assert!(next >= -1e-9 && next <= st.capacity + 1e-9, "next {next}");
                assert!((next - sol.next_storage).abs() < 1e-6);
                assert!(safeguard_check(&ctx, dec, &sc.safeguard).satisfied);
            }
        }
    }
}

#[test]
fn value_grows_with_stored_energy_when_storage_is_free() {
    let mut s = two_station();
    s.storage.unit_storage_cost = 0.0;
    let pol = sdp_solve(&system(s)).unwrap();
    for vk in &pol.values {
        for row in vk {
            for w in row.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{} < {}", w[1], w[0]);
            }
        }
    }
}

#[test]
fn deterministic_rollout_reproduces_table_value() {
    let mut s = deterministic_toy(&[25.0, 21.0, 20.0, 30.0, 45.0, 52.0, 40.0, 33.0], 2);
    s.solar.radiation = vec![0.0, 0.0, 0.3, 0.8, 0.9, 0.5, 0.0, 0.0];
    s.renewable = chargeprice::scenario::RenewableConfig::Deterministic;
    s.rebuild_chain().unwrap();
    let sys = system(s);
    let pol = sdp_solve(&sys).unwrap();
    let run = simulate_policy(&sys, &pol, 1, 3, NoiseMode::Deterministic).unwrap();
    let t = &run.trajectories[0];
    let j1 = pol.initial_value(&sys);
    assert!((t.total_expected_utility - j1).abs() < 1e-3, "{} vs {j1}", t.total_expected_utility);
    assert!((t.total_utility - t.total_expected_utility).abs() < 1e-9);
}

#[test]
fn simulation_is_reproducible_and_execution_independent() {
    let mut s = two_station();
    let sys = system(s.clone());
    let pol = sdp_solve(&sys).unwrap();
    let a = simulate_policy(&sys, &pol, 8, 11, NoiseMode::Stochastic).unwrap();
    let b = simulate_policy(&sys, &pol, 8, 11, NoiseMode::Stochastic).unwrap();
    assert_eq!(a.trajectories, b.trajectories);
    s.solver.execution = Execution::Sequential;
    let seq = system(s);
    let pol2 = sdp_solve(&seq).unwrap();
    assert_eq!(pol.values, pol2.values);
    let c = simulate_policy(&seq, &pol2, 8, 11, NoiseMode::Stochastic).unwrap();
    assert_eq!(a.trajectories, c.trajectories);
}

#[test]
fn greedy_does_not_buy_ahead_at_flat_prices() {
    let sys = system(toy(&[35.0; 6], 2));
    for pol in [greedy(&sys).unwrap(), sdp_solve(&sys).unwrap()] {
        let run = simulate_policy(&sys, &pol, 1, 0, NoiseMode::Deterministic).unwrap();
        for step in &run.trajectories[0].steps {
            assert!(step.storage.abs() < 1e-9, "{:?} stored {}", pol.kind, step.storage);
        }
    }
}

#[test]
fn sdp_beats_greedy_on_paired_seeds() {
    let sys = system(two_station());
    let sdp = sdp_solve(&sys).unwrap();
    let gr = greedy(&sys).unwrap();
    for seed in 0..5 {
        let a = simulate_policy(&sys, &sdp, 200, seed, NoiseMode::Stochastic).unwrap().summary;
        let b = simulate_policy(&sys, &gr, 200, seed, NoiseMode::Stochastic).unwrap().summary;
        assert!(a.mean_expected_utility >= b.mean_expected_utility, "seed {seed}: {a:?} {b:?}");
    }
    assert!(sdp.initial_value(&sys) >= gr.initial_value(&sys) - 1e-12);
}

#[test]
fn trajectories_conserve_energy() {
    let mut s = two_station();
    s.storage.process_noise_std = 2.0;
    let sys = system(s);
    let pol = sdp_solve(&sys).unwrap();
    let st = &sys.scenario.storage;
    let run = simulate_policy(&sys, &pol, 50, 5, NoiseMode::Stochastic).unwrap();
    let mut spilled = false;
    for t in &run.trajectories {
        let mut next = t.steps.iter().skip(1).map(|s| s.storage).chain([t.final_storage]);
        for step in &t.steps {
            let after = next.next().unwrap();
            let phi: f64 = step.demands.iter().sum();
            let rhs = st.charge_eff * (step.renewable + step.decision.procurement) - phi / st.discharge_eff + step.noise - step.spill;
            assert!((after - step.storage - rhs).abs() < 1e-9);
            spilled |= step.spill != 0.0;
        }
    }
    assert!(spilled);
}

#[test]
fn warn_only_reports_instead_of_excluding() {
    let mut s = two_station();
    s.safeguard.w_min = 400.0;
    s.safeguard.enforcement = Enforcement::WarnOnly;
    let sys = system(s.clone());
    let pol = sdp_solve(&sys).unwrap();
    assert!(pol.decisions.iter().flatten().flatten().any(|d| !d.safeguard.satisfied));
    s.safeguard.enforcement = Enforcement::Penalize;
    let strict = sdp_solve(&system(s)).unwrap();
    for d in strict.decisions.iter().flatten().flatten() {
        assert!(d.safeguard.satisfied || d.fallback);
    }
}

#[test]
fn policy_exports_json() {
    let sys = system(toy(&[31.0, 40.0], 2));
    let pol = sdp_solve(&sys).unwrap();
    let dir = std::env::temp_dir().join(format!("chargeprice-policy-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("policy.json");
    pol.write_json(&path).unwrap();
    let back: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back["values"].as_array().unwrap().len(), 3);
    assert_eq!(back["kind"], "sdp");
}
