//! Monte Carlo evaluation of a policy on sampled demand, storage noise and
//! renewable paths.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::sample_next;
use crate::objective::{profit, safeguard_check, satisfaction_value, stage_utility, Decision};
use crate::optimizer::sdp::Policy;
use crate::par::map_indexed;
use crate::system::System;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    Stochastic,
    /// Demand at its mean, no storage noise, renewable at the most likely level.
    Deterministic,
}

/// Realized storage update with the excess outside `[0, E]` spilled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StorageStep {
    pub next: f64,
    /// Positive when energy overflowed, negative when the balance went short.
    pub spill: f64,
}

/// `I' = I + η_c(u + o) − Σd/η_d + w`, clamped to `[0, E]`.
pub fn next_storage(
    storage: f64,
    renewable: f64,
    procurement: f64,
    demand: f64,
    noise: f64,
    system: &System,
) -> StorageStep {
    let st = &system.scenario.storage;
    let raw = storage + st.charge_eff * (renewable + procurement) - demand / st.discharge_eff + noise;
    let next = raw.clamp(0.0, st.capacity);
    StorageStep { next, spill: raw - next }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub horizon: usize,
    pub storage: f64,
    pub level: usize,
    pub renewable: f64,
    pub decision: Decision,
    pub demands: Vec<f64>,
    pub noise: f64,
    pub spill: f64,
    pub profit: f64,
    pub satisfaction: f64,
    pub impact: f64,
    pub utility: f64,
    pub expected_utility: f64,
    pub safeguard_probability: f64,
    pub safeguard_active: bool,
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub final_storage: f64,
    pub terminal_utility: f64,
    /// Realized stage utilities plus the terminal value.
    pub total_utility: f64,
    /// Expected stage utilities along the path plus the terminal value.
    pub total_expected_utility: f64,
    pub total_profit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub mean_utility: f64,
    pub ci95_utility: f64,
    pub mean_expected_utility: f64,
    pub mean_profit: f64,
    pub ci95_profit: f64,
    pub safeguard_warnings: usize,
    pub fallbacks: usize,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub trajectories: Vec<Trajectory>,
    pub summary: Summary,
}

pub fn simulate_policy(system: &System, policy: &Policy, runs: usize, seed: u64, mode: NoiseMode) -> Result<Simulation> {
    if runs == 0 {
        return Err(Error::InvalidInput("at least one run is needed".into()));
    }
    let trajectories = map_indexed(system.scenario.solver.execution, runs, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        run_once(system, policy, mode, &mut rng)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&trajectories);
    Ok(Simulation { trajectories, summary })
}

fn run_once(system: &System, policy: &Policy, mode: NoiseMode, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    let sc = &system.scenario;
    let chain = &sc.renewable_chain;
    let weights = &policy.weights;
    let stoch = mode == NoiseMode::Stochastic;
    let w_noise = Normal::new(0.0, sc.storage.process_noise_std).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let d_noise: Vec<Normal<f64>> = sc
        .elasticity
        .variances
        .iter()
        .map(|v| Normal::new(0.0, v.sqrt()).map_err(|e| Error::InvalidInput(e.to_string())))
        .collect::<Result<_>>()?;

    let mut storage = sc.storage.initial_level;
    let mut level = chain.initial_level;
    let mut steps = Vec::with_capacity(sc.horizons);
    for k in 0..sc.horizons {
        let sol = policy.decide(system, k, storage, level)?;
        let u = system.renewable(k, level);
        let ctx = system.context(k, storage, u);
        let mean = sc.elasticity.affine_mean(&sol.decision.prices);
        let demands: Vec<f64> = if stoch {
            mean.iter().zip(&d_noise).map(|(m, n)| (m + n.sample(rng)).max(0.0)).collect()
        } else {
            mean.iter().map(|m| m.max(0.0)).collect()
        };
        let noise = if stoch { w_noise.sample(rng) } else { 0.0 };
        let phi: f64 = demands.iter().sum();
        let w = profit(&ctx, &sol.decision, &demands, noise);
        let g = satisfaction_value(phi, &sc.satisfaction);
        let f = system.impact.impact(&demands)?;
        let utility = stage_utility(w, g, f, weights, &system.normalizers[k])?;
        let status = safeguard_check(&ctx, &sol.decision, &sc.safeguard);
        let step = next_storage(storage, u, sol.decision.procurement, phi, noise, system);
        steps.push(TrajectoryStep {
            horizon: k + 1,
            storage,
            level,
            renewable: u,
            decision: sol.decision.clone(),
            demands,
            noise,
            spill: step.spill,
            profit: w,
            satisfaction: g,
            impact: f,
            utility,
            expected_utility: sol.expected_utility,
            safeguard_probability: status.probability,
            safeguard_active: status.warns(),
            fallback: sol.fallback,
        });
        storage = step.next;
        if k + 1 < sc.horizons {
            level = if stoch {
                sample_next(chain, k, level, rng)
            } else {
                most_likely(&chain.transitions[k][level])
            };
        }
    }
    let terminal_utility = policy.value(sc.horizons, storage, level);
    let total: f64 = steps.iter().map(|s| s.utility).sum();
    let total_expected: f64 = steps.iter().map(|s| s.expected_utility).sum();
    let total_profit = steps.iter().map(|s| s.profit).sum();
    Ok(Trajectory {
        steps,
        final_storage: storage,
        terminal_utility,
        total_utility: total + terminal_utility,
        total_expected_utility: total_expected + terminal_utility,
        total_profit,
    })
}

fn most_likely(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = j;
        }
    }
    best
}

pub fn summarize(trajectories: &[Trajectory]) -> Summary {
    let n = trajectories.len();
    let (mu, ciu) = mean_ci(trajectories.iter().map(|t| t.total_utility));
    let (mp, cip) = mean_ci(trajectories.iter().map(|t| t.total_profit));
    let me = trajectories.iter().map(|t| t.total_expected_utility).sum::<f64>() / n as f64;
    Summary {
        runs: n,
        mean_utility: mu,
        ci95_utility: ciu,
        mean_expected_utility: me,
        mean_profit: mp,
        ci95_profit: cip,
        safeguard_warnings: trajectories.iter().flat_map(|t| &t.steps).filter(|s| s.safeguard_active).count(),
        fallbacks: trajectories.iter().flat_map(|t| &t.steps).filter(|s| s.fallback).count(),
    }
}

/// Mean and normal-approximation 95% half-width.
pub fn mean_ci(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Per-horizon CSV: `horizon,I,u,o,p_1..p_L,d_1..d_L,W,G,F,Pi,safeguard_active`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let l = traj.steps.first().map_or(0, |s| s.demands.len());
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut header = vec!["horizon".to_string(), "I".into(), "u".into(), "o".into()];
    header.extend((1..=l).map(|j| format!("p_{j}")));
    header.extend((1..=l).map(|j| format!("d_{j}")));
    header.extend(["W", "G", "F", "Pi", "safeguard_active"].map(String::from));
    let mut text = header.join(",") + "\n";
    for s in &traj.steps {
        let mut row = vec![s.horizon.to_string(), s.storage.to_string(), s.renewable.to_string(), s.decision.procurement.to_string()];
        row.extend(s.decision.prices.iter().map(f64::to_string));
        row.extend(s.demands.iter().map(f64::to_string));
        row.extend([s.profit, s.satisfaction, s.impact, s.utility].map(|v| v.to_string()));
        row.push(s.safeguard_active.to_string());
        text += &(row.join(",") + "\n");
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
