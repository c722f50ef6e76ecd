mod common;

use chargeprice::optimizer::stage::golden_max;
use chargeprice::par::Execution;
use chargeprice::pareto::*;
use chargeprice::scenario::UtilityWeights;
use chargeprice::System;
use proptest::prelude::*;

fn brute_force(values: &[[f64; 3]]) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..values.len() {
        let dominated = (0..values.len()).any(|j| dominates(&values[j], &values[i]));
        let duplicate = (0..i).any(|j| values[j] == values[i]);
        if !dominated && !duplicate {
            out.push(i);
        }
    }
    out
}

fn triples(n: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    // Coarse values so that ties and duplicates actually occur.
    proptest::collection::vec(
        (0u8..6, 0u8..6, 0u8..6).prop_map(|(a, b, c)| [a as f64, b as f64, c as f64]),
        1..n,
    )
}

proptest! {
    #[test]
    fn filter_equals_brute_force(v in triples(100)) {
        prop_assert_eq!(dominance_filter(&v), brute_force(&v));
    }

    #[test]
    fn filter_is_idempotent(v in triples(60)) {
        let once: Vec<[f64; 3]> = dominance_filter(&v).into_iter().map(|i| v[i]).collect();
        let twice: Vec<[f64; 3]> = dominance_filter(&once).into_iter().map(|i| once[i]).collect();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn dominated_points_do_not_lower_knee_metrics(
        v in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b, c)| [a, b, c]), 2..20),
        pick in 0usize..20,
        shrink in (0.0f64..0.5, 0.0f64..0.5, 0.0f64..0.5),
    ) {
        let front: Vec<[f64; 3]> = dominance_filter(&v).into_iter().map(|i| v[i]).collect();
        prop_assume!(front.len() >= 2);
        let m = front[pick % front.len()];
        let extra = [m[0] - shrink.0 - 0.01, m[1] - shrink.1, m[2] - shrink.2];
        let mut with = front.clone();
        with.push(extra);
        for i in 0..front.len() {
            prop_assert_eq!(knee_metric(i, &front), knee_metric(i, &with));
        }
    }

    #[test]
    fn two_point_metric_is_gain_over_loss(a in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), b in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0)) {
        let s = [[a.0, a.1, a.2], [b.0, b.1, b.2]];
        let gain: f64 = (0..3).map(|k| (s[0][k] - s[1][k]).max(0.0)).sum();
        let loss: f64 = (0..3).map(|k| (s[1][k] - s[0][k]).max(0.0)).sum();
        prop_assume!(gain > 0.0 && loss > 0.0);
        prop_assert!((knee_metric(0, &s) - gain / loss).abs() < 1e-15);
    }
}

#[test]
fn knee_threshold_edges() {
    let s = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.4, 0.4, 0.0]];
    assert_eq!(knee_select(&s, 0.0), vec![0, 1, 2]);
    assert_eq!(knee_select(&[[1.0, 0.0, 0.0], [0.5, 0.0, 0.0]], 0.0), vec![0]);
    assert!(knee_select(&s, f64::INFINITY).is_empty());
}

/// max λ1 x + λ2 y on the unit disc, solved numerically over the angle.
fn disc_toy(w: &UtilityWeights) -> chargeprice::Result<ParetoPoint> {
    let [l1, l2, _] = w.lambda;
    let th = golden_max(0.0, std::f64::consts::FRAC_PI_2, 80, |t| l1 * t.cos() + l2 * t.sin());
    Ok(ParetoPoint {
        weights: *w,
        objectives: [th.cos(), th.sin(), 0.0],
        station_demand: vec![],
    })
}

#[test]
fn refinement_stays_on_analytic_front() {
    let grid: Vec<UtilityWeights> = [(1.0, 0.0), (0.5, 0.5), (0.0, 1.0)]
        .iter()
        .map(|&(a, b)| UtilityWeights::new(a, b, 0.0))
        .collect();
    let start: Vec<ParetoPoint> = grid.iter().map(|w| disc_toy(w).unwrap()).collect();
    let refined = adaptive_refine(&start, 4, 0.1, Execution::Sequential, disc_toy).unwrap();
    assert!(refined.len() > start.len());
    for p in &refined {
        let r = (p.objectives[0].powi(2) + p.objectives[1].powi(2)).sqrt();
        assert!((r - 1.0).abs() < 1e-3, "{:?}", p.objectives);
    }
    let single = adaptive_refine(&start[..1], 4, 0.1, Execution::Sequential, disc_toy).unwrap();
    assert_eq!(single, start[..1].to_vec());
    let none = adaptive_refine(&start, 4, f64::INFINITY, Execution::Sequential, disc_toy).unwrap();
    assert_eq!(none, filter_points(&start));
}

#[test]
fn sweep_corners_and_positive_weights_on_small_scenario() {
    let sys = System::new(common::two_station()).unwrap();
    let grid = simplex_grid(0.25).unwrap();
    let pts = weighted_sum_sweep(&sys, &grid).unwrap();
    assert_eq!(pts.len(), 15);
    let corner = |w: [f64; 3]| pts.iter().position(|p| p.weights.lambda == w).unwrap();
    let ip = corner([1.0, 0.0, 0.0]);
    let is = corner([0.0, 1.0, 0.0]);
    for p in &pts {
        assert!(pts[ip].objectives[0] >= p.objectives[0] - 1e-6);
        assert!(pts[is].objectives[1] >= p.objectives[1] - 1e-6);
    }
    let front = filter_points(&pts);
    for p in pts.iter().filter(|p| p.weights.lambda.iter().all(|&l| l > 0.0)) {
        assert!(front.contains(p), "{:?} dropped", p.weights);
    }

    let built = build_front(&pts, 1.0);
    let dir = std::env::temp_dir().join(format!("chargeprice-front-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("front.csv");
    write_front_csv(&path, &built, false).unwrap();
    let rows = read_front_csv(&path).unwrap();
    assert_eq!(rows.len(), built.points.len());
    for (row, p) in rows.iter().zip(&built.points) {
        assert_eq!(row.1, p.objectives);
        assert_eq!(row.0, p.weights);
    }
}
