//! Backward dynamic programming over (horizon, storage, renewable level) and
//! the myopic baseline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::expected_next;
use crate::optimizer::stage::{interpolate, solve_state, Continuation, HorizonProblem, PriceFrontier, StageSolution};
use crate::par::map_indexed;
use crate::scenario::UtilityWeights;
use crate::system::System;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    /// Sorted storage levels from 0 to capacity.
    pub storage: Vec<f64>,
    pub levels: usize,
}

impl StateGrid {
    pub fn uniform(capacity: f64, points: usize, levels: usize) -> Self {
        let n = points.max(2);
        let storage = (0..n).map(|i| capacity * i as f64 / (n - 1) as f64).collect();
        Self { storage, levels }
    }

    pub fn len(&self) -> usize {
        self.storage.len() * self.levels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Sdp,
    Greedy,
}

/// Per-horizon data the policy keeps to re-solve at off-grid states.
#[derive(Clone, Debug)]
pub struct HorizonPlan {
    pub problem: HorizonProblem,
    pub frontier: PriceFrontier,
    /// One per renewable level at this horizon.
    pub continuation: Vec<Continuation>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Policy {
    pub kind: PolicyKind,
    pub weights: UtilityWeights,
    pub grid: StateGrid,
    /// `J_k(I, level)` as `values[k][level][i]`, `k = 0..=K`. For the greedy
    /// policy these are the expected utilities of following it.
    pub values: Vec<Vec<Vec<f64>>>,
    /// `decisions[k][level][i]`.
    pub decisions: Vec<Vec<Vec<StageSolution>>>,
    #[serde(skip)]
    plans: Vec<HorizonPlan>,
}

impl Policy {
    /// Decision at an arbitrary storage level, re-solving the stage against
    /// the stored continuation.
    pub fn decide(&self, system: &System, k: usize, storage: f64, level: usize) -> Result<StageSolution> {
        let plan = self
            .plans
            .get(k)
            .ok_or_else(|| Error::InvalidInput(format!("policy has no horizon {}", k + 1)))?;
        let limits = system.limits(system.scenario.safeguard);
        solve_state(
            &plan.problem,
            &plan.frontier,
            system.frontier_params(),
            &limits,
            &plan.continuation[level],
            storage.clamp(0.0, system.scenario.storage.capacity),
            system.renewable(k, level),
        )
    }

    /// `J_k(I, level)` interpolated in storage.
    pub fn value(&self, k: usize, storage: f64, level: usize) -> f64 {
        interpolate(&self.grid.storage, &self.values[k][level], storage)
    }

    /// Expected total utility from the scenario's initial state.
    pub fn initial_value(&self, system: &System) -> f64 {
        let sc = &system.scenario;
        self.value(0, sc.storage.initial_level, sc.renewable_chain.initial_level)
    }

    pub fn plans(&self) -> &[HorizonPlan] {
        &self.plans
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Terminal value: unused energy is worth the salvage price, in profit units.
pub fn terminal_values(system: &System, weights: &UtilityWeights, grid: &StateGrid) -> Vec<Vec<f64>> {
    let sc = &system.scenario;
    let k = sc.horizons - 1;
    let scale = weights.lambda[0] / system.normalizers[k].w_max * sc.terminal_salvage_price;
    vec![grid.storage.iter().map(|i| scale * i).collect(); grid.levels]
}

pub fn sdp_solve(system: &System) -> Result<Policy> {
    solve(system, &system.scenario.weights, PolicyKind::Sdp)
}

pub fn sdp_solve_with(system: &System, weights: &UtilityWeights) -> Result<Policy> {
    solve(system, weights, PolicyKind::Sdp)
}

/// Myopic policy: each stage maximizes its own expected utility.
pub fn greedy(system: &System) -> Result<Policy> {
    solve(system, &system.scenario.weights, PolicyKind::Greedy)
}

pub fn greedy_with(system: &System, weights: &UtilityWeights) -> Result<Policy> {
    solve(system, weights, PolicyKind::Greedy)
}

fn solve(system: &System, weights: &UtilityWeights, kind: PolicyKind) -> Result<Policy> {
    let bad = weights.violations();
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    let sc = &system.scenario;
    let kk = sc.horizons;
    let levels = sc.renewable_chain.levels();
    let grid = StateGrid::uniform(sc.storage.capacity, sc.solver.storage_points, levels);
    let exec = sc.solver.execution;
    let limits = system.limits(sc.safeguard);
    let np = grid.storage.len();

    let problems: Vec<Result<(HorizonProblem, PriceFrontier)>> = map_indexed(exec, kk, |k| {
        let hp = system.horizon_problem(k, weights, &system.normalizers[k])?;
        let fr = system.frontier(&hp)?;
        Ok((hp, fr))
    });
    let mut problems: Vec<Option<(HorizonProblem, PriceFrontier)>> =
        problems.into_iter().map(|r| r.map(Some)).collect::<Result<_>>()?;

    let mut values = vec![Vec::new(); kk + 1];
    values[kk] = terminal_values(system, weights, &grid);
    let mut decisions = vec![Vec::new(); kk];
    let mut plans: Vec<Option<HorizonPlan>> = (0..kk).map(|_| None).collect();

    for k in (0..kk).rev() {
        let (hp, frontier) = problems[k].take().expect("each horizon used once");
        let slope = hp.b_o / sc.storage.charge_eff;
        let expected: Vec<Vec<f64>> = (0..levels)
            .map(|l| {
                (0..np)
                    .map(|i| expected_next(&sc.renewable_chain, k, l, |j| values[k + 1][j][i]))
                    .collect()
            })
            .collect();
        let continuation: Vec<Continuation> = expected
            .iter()
            .map(|v| match kind {
                PolicyKind::Sdp => Continuation::new(grid.storage.clone(), v.clone(), slope),
                PolicyKind::Greedy => Continuation::zero(grid.storage.clone(), slope),
            })
            .collect();
        let sols: Vec<Result<StageSolution>> = map_indexed(exec, levels * np, |idx| {
            let (l, i) = (idx / np, idx % np);
            solve_state(
                &hp,
                &frontier,
                system.frontier_params(),
                &limits,
                &continuation[l],
                grid.storage[i],
                system.renewable(k, l),
            )
        });
        let mut vk = vec![vec![f64::NEG_INFINITY; np]; levels];
        let mut dk = Vec::with_capacity(levels);
        let mut row = Vec::with_capacity(np);
        for (idx, sol) in sols.into_iter().enumerate() {
            let (l, i) = (idx / np, idx % np);
            let sol = sol?;
            vk[l][i] = match kind {
                PolicyKind::Sdp => sol.value,
                PolicyKind::Greedy => sol.expected_utility + interpolate(&grid.storage, &expected[l], sol.next_storage),
            };
            row.push(sol);
            if i + 1 == np {
                dk.push(std::mem::take(&mut row));
            }
        }
        values[k] = vk;
        decisions[k] = dk;
        plans[k] = Some(HorizonPlan {
            problem: hp,
            frontier,
            continuation,
        });
    }

    Ok(Policy {
        kind,
        weights: *weights,
        grid,
        values,
        decisions,
        plans: plans.into_iter().map(|p| p.expect("filled")).collect(),
    })
}
