//! Weighted-sum Pareto front over (profit, satisfaction, impact) with midpoint
//! refinement, dominance filtering and knee selection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{sdp_solve_with, simulate_policy, NoiseMode};
use crate::par::{map_indexed, Execution};
use crate::scenario::UtilityWeights;
use crate::system::System;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub weights: UtilityWeights,
    /// Daily totals `[W, G, F]`.
    pub objectives: [f64; 3],
    /// Daily demand per station under the generating policy.
    pub station_demand: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Front {
    pub points: Vec<ParetoPoint>,
    /// Knee metric per point, on normalized objectives.
    pub rho: Vec<f64>,
    pub knees: Vec<usize>,
    pub rho0: f64,
}

/// Weight vectors on the simplex whose entries are multiples of `step`.
pub fn simplex_grid(step: f64) -> Result<Vec<UtilityWeights>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidInput("weight step must be in (0,1]".into()));
    }
    let n = (1.0 / step).round() as usize;
    if ((n as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("weight step must divide 1".into()));
    }
    let mut out = Vec::new();
    for i in 0..=n {
        for j in 0..=(n - i) {
            let l1 = i as f64 / n as f64;
            let l2 = j as f64 / n as f64;
            out.push(UtilityWeights::new(l1, l2, ((n - i - j) as f64 / n as f64).max(0.0)));
        }
    }
    Ok(out)
}

/// Solves the SDP for `weights` and totals the objectives of a noise-free rollout.
pub fn evaluate_weights(system: &System, weights: &UtilityWeights) -> Result<ParetoPoint> {
    let policy = sdp_solve_with(system, weights)?;
    let run = simulate_policy(system, &policy, 1, system.scenario.rng_seed, NoiseMode::Deterministic)?;
    let t = &run.trajectories[0];
    let mut objectives = [0.0; 3];
    let mut station_demand = vec![0.0; system.scenario.stations];
    for s in &t.steps {
        objectives[0] += s.profit;
        objectives[1] += s.satisfaction;
        objectives[2] += s.impact;
        for (acc, d) in station_demand.iter_mut().zip(&s.demands) {
            *acc += d;
        }
    }
    Ok(ParetoPoint {
        weights: *weights,
        objectives,
        station_demand,
    })
}

pub fn weighted_sum_sweep(system: &System, grid: &[UtilityWeights]) -> Result<Vec<ParetoPoint>> {
    sweep_with(system.scenario.solver.execution, grid, |w| evaluate_weights(system, w))
}

fn sweep_with<F>(exec: Execution, grid: &[UtilityWeights], eval: F) -> Result<Vec<ParetoPoint>>
where
    F: Fn(&UtilityWeights) -> Result<ParetoPoint> + Sync + Send,
{
    map_indexed(exec, grid.len(), |i| eval(&grid[i])).into_iter().collect()
}

/// `a` dominates `b`: profit and satisfaction no lower, impact no higher, one strictly.
pub fn dominates(a: &[f64; 3], b: &[f64; 3]) -> bool {
    let weak = a[0] >= b[0] && a[1] >= b[1] && a[2] <= b[2];
    let strict = a[0] > b[0] || a[1] > b[1] || a[2] < b[2];
    weak && strict
}

/// Indices of the non-dominated values, first occurrence kept among duplicates.
pub fn dominance_filter(values: &[[f64; 3]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b][0]
            .total_cmp(&values[a][0])
            .then(values[b][1].total_cmp(&values[a][1]))
            .then(values[a][2].total_cmp(&values[b][2]))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let v = &values[i];
        if kept.iter().any(|&k| values[k] == *v || dominates(&values[k], v)) {
            continue;
        }
        kept.push(i);
    }
    kept.sort_unstable();
    kept
}

pub fn filter_points(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let vals: Vec<[f64; 3]> = points.iter().map(|p| p.objectives).collect();
    dominance_filter(&vals).into_iter().map(|i| points[i].clone()).collect()
}

/// Min-max scaling of each objective to `[0, 1]` with impact negated, so that
/// larger is better in every coordinate. Constant objectives map to 0.
pub fn normalize(values: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let signed: Vec<[f64; 3]> = values.iter().map(|v| [v[0], v[1], -v[2]]).collect();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in &signed {
        for k in 0..3 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    signed
        .iter()
        .map(|v| {
            let mut out = [0.0; 3];
            for k in 0..3 {
                let span = hi[k] - lo[k];
                out[k] = if span > 0.0 { (v[k] - lo[k]) / span } else { 0.0 };
            }
            out
        })
        .collect()
}

/// Least gain per unit loss from moving to any other point of `set`; all
/// coordinates are maximized. `+∞` when no other point costs anything.
pub fn knee_metric(i: usize, set: &[[f64; 3]]) -> f64 {
    let yi = &set[i];
    let mut rho = f64::INFINITY;
    for (j, yj) in set.iter().enumerate() {
        if j == i {
            continue;
        }
        let gain: f64 = (0..3).map(|k| (yi[k] - yj[k]).max(0.0)).sum();
        let loss: f64 = (0..3).map(|k| (yj[k] - yi[k]).max(0.0)).sum();
        if loss > 0.0 {
            rho = rho.min(gain / loss);
        }
    }
    rho
}

/// Indices whose knee metric strictly exceeds `rho0`.
pub fn knee_select(set: &[[f64; 3]], rho0: f64) -> Vec<usize> {
    (0..set.len()).filter(|&i| knee_metric(i, set) > rho0).collect()
}

/// Filters `points` and marks knees on normalized objectives.
pub fn build_front(points: &[ParetoPoint], rho0: f64) -> Front {
    let points = filter_points(points);
    let norm = normalize(&points.iter().map(|p| p.objectives).collect::<Vec<_>>());
    let rho: Vec<f64> = if points.len() < 2 {
        vec![f64::INFINITY; points.len()]
    } else {
        (0..points.len()).map(|i| knee_metric(i, &norm)).collect()
    };
    let knees = if points.len() < 2 {
        Vec::new()
    } else {
        (0..points.len()).filter(|&i| rho[i] > rho0).collect()
    };
    Front {
        points,
        rho,
        knees,
        rho0,
    }
}

/// Midpoint refinement: every front point whose nearest neighbour in
/// normalized objective space is farther than `threshold` gets the midpoint
/// of the two generating weight vectors evaluated. Repeats up to `max_passes`
/// times and returns the filtered union.
pub fn adaptive_refine<F>(
    points: &[ParetoPoint],
    max_passes: usize,
    threshold: f64,
    exec: Execution,
    eval: F,
) -> Result<Vec<ParetoPoint>>
where
    F: Fn(&UtilityWeights) -> Result<ParetoPoint> + Sync + Send,
{
    let mut all = filter_points(points);
    let mut tried: Vec<UtilityWeights> = points.iter().map(|p| p.weights).collect();
    for _ in 0..max_passes {
        let front = filter_points(&all);
        if front.len() < 2 {
            break;
        }
        let norm = normalize(&front.iter().map(|p| p.objectives).collect::<Vec<_>>());
        let mut fresh: Vec<UtilityWeights> = Vec::new();
        for i in 0..front.len() {
            let (j, dist) = (0..front.len())
                .filter(|&j| j != i)
                .map(|j| (j, distance(&norm[i], &norm[j])))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .expect("at least two points");
            if dist <= threshold {
                continue;
            }
            let (a, b) = (front[i].weights.lambda, front[j].weights.lambda);
            let mid = UtilityWeights::new(0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2]));
            if !tried.iter().chain(&fresh).any(|w| same_weights(w, &mid)) {
                fresh.push(mid);
            }
        }
        if fresh.is_empty() {
            break;
        }
        tried.extend(&fresh);
        all.extend(sweep_with(exec, &fresh, &eval)?);
        all = filter_points(&all);
    }
    Ok(all)
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn same_weights(a: &UtilityWeights, b: &UtilityWeights) -> bool {
    (0..3).all(|k| (a.lambda[k] - b.lambda[k]).abs() < 1e-12)
}

/// Front CSV: `lambda1,lambda2,lambda3,W,G,F,is_knee`.
pub fn write_front_csv(path: &Path, front: &Front, knees_only: bool) -> Result<()> {
    let mut text = String::from("lambda1,lambda2,lambda3,W,G,F,is_knee\n");
    for (i, p) in front.points.iter().enumerate() {
        let knee = front.knees.contains(&i);
        if knees_only && !knee {
            continue;
        }
        let [l1, l2, l3] = p.weights.lambda;
        let [w, g, f] = p.objectives;
        text += &format!("{l1},{l2},{l3},{w},{g},{f},{knee}\n");
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a front CSV back as `(weights, objectives, is_knee)` rows.
pub fn read_front_csv(path: &Path) -> Result<Vec<(UtilityWeights, [f64; 3], bool)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<(f64, f64, f64, f64, f64, f64, bool)>() {
        let (l1, l2, l3, w, g, f, k) = rec.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        out.push((UtilityWeights::new(l1, l2, l3), [w, g, f], k));
    }
    Ok(out)
}
