use std::path::PathBuf;

use chargeprice::grid::case::read_solved_voltages;
use chargeprice::grid::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn case57() -> Network {
    read_case(&data("case57.m")).unwrap()
}

/// Textbook Y-bus assembly with real arithmetic only, written independently
/// of the library's complex-valued builder.
fn reference_ybus(net: &Network) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = net.n_buses();
    let mut g = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for br in &net.branches {
        let den = br.r * br.r + br.x * br.x;
        let (gs, bs) = (br.r / den, -br.x / den);
        let t = br.tap;
        let th = br.shift_deg.to_radians();
        let (f, to) = (br.from, br.to);
        g[(to, to)] += gs;
        b[(to, to)] += bs + br.b / 2.0;
        g[(f, f)] += gs / (t * t);
        b[(f, f)] += (bs + br.b / 2.0) / (t * t);
        // -ys / (t e^{-jθ}) and -ys / (t e^{jθ})
        let (c, s) = (th.cos(), th.sin());
        g[(f, to)] += -(gs * c - bs * s) / t;
        b[(f, to)] += -(bs * c + gs * s) / t;
        g[(to, f)] += -(gs * c + bs * s) / t;
        b[(to, f)] += -(bs * c - gs * s) / t;
    }
    for (i, bus) in net.buses.iter().enumerate() {
        g[(i, i)] += bus.g_shunt / net.base_mva;
        b[(i, i)] += bus.b_shunt / net.base_mva;
    }
    (g, b)
}

#[test]
fn parses_57_bus_case() {
    let net = case57();
    assert_eq!(net.n_buses(), 57);
    assert_eq!(net.pq_buses().len(), 50);
    assert_eq!(net.pv_buses().len(), 6);
    assert_eq!(net.branches.len(), 80);
    assert_eq!(net.buses[net.slack()].id, 1);
}

#[test]
fn branch_to_missing_bus_is_an_error() {
    let text = std::fs::read_to_string(data("case57.m")).unwrap();
    let bad = text.replacen("\t1\t2\t0.0083", "\t1\t99\t0.0083", 1);
    assert_ne!(bad, text);
    assert!(parse_case(&bad).unwrap_err().to_string().contains("unknown bus 99"));
}

#[test]
fn ybus_matches_reference_assembly() {
    let net = case57();
    let y = build_admittance(&net).unwrap();
    let (g, b) = reference_ybus(&net);
    assert!((&y.g - g).amax() < 1e-10);
    assert!((&y.b - b).amax() < 1e-10);
}

#[test]
fn power_flow_matches_golden_solution() {
    let net = case57();
    let sol = solve_power_flow(&net, PowerFlowOptions::default()).unwrap();
    assert!(sol.iterations <= 10, "{} iterations", sol.iterations);
    assert!(sol.final_mismatch < 1e-8);
    for (id, vm, va_deg) in read_solved_voltages(&data("case57_solved.csv")).unwrap() {
        let i = net.index_of(id).unwrap();
        assert!((sol.vm[i] - vm).abs() < 1e-4, "bus {id} vm");
        assert!((sol.va[i].to_degrees() - va_deg).abs() < 1e-4, "bus {id} va");
    }
}

#[test]
fn jacobian_inverse_is_inverse() {
    let net = case57();
    let sol = solve_power_flow(&net, PowerFlowOptions::default()).unwrap();
    let j = assemble_jacobian(&net, &sol).unwrap();
    let ji = invert_jacobian(&j).unwrap();
    assert_eq!(ji.dim(), 57 + 50 - 1);
    let eye = &j.matrix * &ji.matrix;
    assert!((eye - DMatrix::identity(106, 106)).amax() < 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = DVector::from_fn(106, |_, _| rng.gen_range(-1.0..1.0));
    let back = &ji.matrix * (&j.matrix * &x);
    assert!((back - x).amax() < 1e-8);
}

/// Finite-difference check of the linear voltage prediction against a full
/// nonlinear re-solve for small load steps.
#[test]
fn linear_prediction_matches_resolve() {
    let net = case57();
    let base = solve_power_flow(&net, PowerFlowOptions::default()).unwrap();
    let ji = invert_jacobian(&assemble_jacobian(&net, &base).unwrap()).unwrap();
    for &bus_id in &[18usize, 31, 45, 57] {
        let i = net.index_of(bus_id).unwrap();
        let step_pu = 1e-4;
        let perturbed = net.with_extra_load(i, step_pu * net.base_mva, 0.0);
        let sol = solve_power_flow(&perturbed, PowerFlowOptions::default()).unwrap();
        let mut delta = DVector::zeros(ji.dim());
        delta[ji.col_of(Injection::P(i)).unwrap()] = -step_pu;
        let pred = ji.apply(&delta);
        let actual = DVector::from_iterator(
            ji.dim(),
            ji.rows.iter().map(|r| match *r {
                StateVar::Vm(k) => sol.vm[k] - base.vm[k],
                StateVar::Va(k) => sol.va[k] - base.va[k],
            }),
        );
        let rel = (&pred - &actual).norm() / actual.norm();
        assert!(rel < 0.01, "bus {bus_id}: relative error {rel}");
    }
}

#[test]
fn sensitivities_positive_and_reproduce_reference_ordering() {
    let net = case57();
    let lin = linearize(&net, PowerFlowOptions::default()).unwrap();
    let sens = bus_sensitivities(&lin.inverse, &net);
    assert_eq!(sens.len(), 50);
    assert!(sens.iter().all(|s| s.active > 0.0 && s.reactive > 0.0));

    // stations 2,4,..,20 sit on buses 39,41,..,57
    let printed = [0.80, 0.61, 0.33, 0.17, 0.31, 0.29, 0.22, 0.60, 0.29, 1.33];
    let even: Vec<f64> = (1..=10)
        .map(|k| {
            let bus = 37 + 2 * k;
            sens.iter().find(|s| s.bus == bus).unwrap().active
        })
        .collect();
    for (a, b) in even.iter().zip(printed.iter()) {
        assert!((a - b).abs() < 0.02, "{even:?}");
    }
    let argmax = (0..10).max_by(|&a, &b| even[a].total_cmp(&even[b])).unwrap();
    let argmin = (0..10).min_by(|&a, &b| even[a].total_cmp(&even[b])).unwrap();
    assert_eq!(2 * (argmax + 1), 20);
    assert_eq!(2 * (argmin + 1), 8);
    // pairwise ordering agrees wherever the printed values differ by more than 0.015
    for a in 0..10 {
        for b in 0..10 {
            if printed[a] > printed[b] + 0.015 {
                assert!(even[a] > even[b], "stations {} vs {}", 2 * (a + 1), 2 * (b + 1));
            }
        }
    }
}

#[test]
fn impact_metric_properties() {
    let net = case57();
    let lin = linearize(&net, PowerFlowOptions::default()).unwrap();
    let map = StationMap {
        buses: (38..=57).collect(),
        power_factor: 1.0,
    };
    let model = ImpactModel::new(&lin.inverse, &net, &map).unwrap();
    let zero = vec![0.0; 20];
    assert_eq!(model.impact(&zero).unwrap(), 0.0);
    let d: Vec<f64> = (0..20).map(|i| 1.0 + i as f64 * 0.3).collect();
    let d2: Vec<f64> = d.iter().map(|x| 2.0 * x).collect();
    let f1 = model.impact(&d).unwrap();
    let f2 = model.impact(&d2).unwrap();
    assert!((f2 - 4.0 * f1).abs() < 1e-12 * f2);

    // one station drawing one per-unit of power reproduces the bus sensitivity
    let sens = bus_sensitivities(&lin.inverse, &net);
    for s in [0usize, 7, 19] {
        let mut one = vec![0.0; 20];
        one[s] = net.base_mva;
        let f = model.impact(&one).unwrap();
        let expect = sens.iter().find(|x| x.bus == map.buses[s]).unwrap().active;
        assert!((f - expect).abs() < 1e-12 * expect);
    }

    // slack-bus placement is rejected
    let bad = StationMap {
        buses: vec![38, 1],
        power_factor: 1.0,
    };
    let err = ImpactModel::new(&lin.inverse, &net, &bad).unwrap_err();
    assert!(err.to_string().contains("station 2 must map to a PQ bus"));
}

#[test]
fn sensitivity_ranking_is_base_independent() {
    let net = case57();
    let lin = linearize(&net, PowerFlowOptions::default()).unwrap();
    let map = StationMap {
        buses: (38..=57).collect(),
        power_factor: 1.0,
    };
    let rank = |base: f64| {
        let mut n = net.clone();
        n.base_mva = base;
        let m = ImpactModel::new(&lin.inverse, &n, &map).unwrap();
        let mut f: Vec<(usize, f64)> = (0..20)
            .map(|s| {
                let mut d = vec![0.0; 20];
                d[s] = 1.0;
                (s, m.impact(&d).unwrap())
            })
            .collect();
        f.sort_by(|a, b| a.1.total_cmp(&b.1));
        f.into_iter().map(|x| x.0).collect::<Vec<_>>()
    };
    assert_eq!(rank(100.0), rank(37.0));
}
