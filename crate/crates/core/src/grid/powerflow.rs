//! Newton-Raphson AC power flow in polar coordinates.
//!
//! Unknowns are ordered `[V of PQ buses; angle of non-slack buses]` and
//! equations `[P of non-slack buses; Q of PQ buses]`, so the Jacobian blocks
//! read `[[dP/dV, dP/dδ], [dQ/dV, dQ/dδ]]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::admittance::{build_admittance, AdmittanceMatrix};
use super::case::{BusKind, Network};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct PowerFlowOptions {
    /// Convergence threshold on the largest P/Q mismatch, p.u.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub vm: Vec<f64>,
    /// Voltage angles, radians.
    pub va: Vec<f64>,
    pub iterations: usize,
    pub final_mismatch: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateVar {
    /// Voltage magnitude of a PQ bus (internal index).
    Vm(usize),
    /// Voltage angle of a non-slack bus.
    Va(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Injection {
    /// Active power injection at a non-slack bus.
    P(usize),
    /// Reactive power injection at a PQ bus.
    Q(usize),
}

/// Variable and equation orderings shared by the solver and the Jacobian.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub pq: Vec<usize>,
    pub non_slack: Vec<usize>,
    pub vars: Vec<StateVar>,
    pub eqs: Vec<Injection>,
}

impl Layout {
    pub fn new(net: &Network) -> Self {
        let pq = net.pq_buses();
        let non_slack: Vec<usize> = (0..net.n_buses())
            .filter(|&i| net.buses[i].kind != BusKind::Slack)
            .collect();
        let vars = pq
            .iter()
            .map(|&i| StateVar::Vm(i))
            .chain(non_slack.iter().map(|&i| StateVar::Va(i)))
            .collect();
        let eqs = non_slack
            .iter()
            .map(|&i| Injection::P(i))
            .chain(pq.iter().map(|&i| Injection::Q(i)))
            .collect();
        Self {
            pq,
            non_slack,
            vars,
            eqs,
        }
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }
}

/// Computed active and reactive injections at every bus, p.u.
pub fn injections(y: &AdmittanceMatrix, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = vm.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let (mut pi, mut qi) = (0.0, 0.0);
        for k in 0..n {
            let (g, b) = (y.g[(i, k)], y.b[(i, k)]);
            if g == 0.0 && b == 0.0 {
                continue;
            }
            let (s, c) = (va[i] - va[k]).sin_cos();
            pi += vm[k] * (g * c + b * s);
            qi += vm[k] * (g * s - b * c);
        }
        p[i] = vm[i] * pi;
        q[i] = vm[i] * qi;
    }
    (p, q)
}

/// Scheduled net injections (generation minus load), p.u.
pub fn scheduled(net: &Network) -> (Vec<f64>, Vec<f64>) {
    let p = net
        .buses
        .iter()
        .map(|b| (b.p_gen - b.p_load) / net.base_mva)
        .collect();
    let q = net.buses.iter().map(|b| -b.q_load / net.base_mva).collect();
    (p, q)
}

fn mismatch(
    layout: &Layout,
    p_spec: &[f64],
    q_spec: &[f64],
    p: &[f64],
    q: &[f64],
) -> DVector<f64> {
    DVector::from_iterator(
        layout.dim(),
        layout.eqs.iter().map(|e| match *e {
            Injection::P(i) => p_spec[i] - p[i],
            Injection::Q(i) => q_spec[i] - q[i],
        }),
    )
}

/// Jacobian of the equation vector with respect to the unknown vector.
pub fn jacobian_matrix(layout: &Layout, y: &AdmittanceMatrix, vm: &[f64], va: &[f64]) -> DMatrix<f64> {
    let (p, q) = injections(y, vm, va);
    let n = layout.dim();
    let mut j = DMatrix::zeros(n, n);
    for (r, eq) in layout.eqs.iter().enumerate() {
        for (c, var) in layout.vars.iter().enumerate() {
            j[(r, c)] = partial(y, vm, va, &p, &q, *eq, *var);
        }
    }
    j
}

fn partial(
    y: &AdmittanceMatrix,
    vm: &[f64],
    va: &[f64],
    p: &[f64],
    q: &[f64],
    eq: Injection,
    var: StateVar,
) -> f64 {
    match (eq, var) {
        (Injection::P(i), StateVar::Va(k)) => {
            if i == k {
                -q[i] - y.b[(i, i)] * vm[i] * vm[i]
            } else {
                let (s, c) = (va[i] - va[k]).sin_cos();
                vm[i] * vm[k] * (y.g[(i, k)] * s - y.b[(i, k)] * c)
            }
        }
        (Injection::P(i), StateVar::Vm(k)) => {
            if i == k {
                p[i] / vm[i] + y.g[(i, i)] * vm[i]
            } else {
                let (s, c) = (va[i] - va[k]).sin_cos();
                vm[i] * (y.g[(i, k)] * c + y.b[(i, k)] * s)
            }
        }
        (Injection::Q(i), StateVar::Va(k)) => {
            if i == k {
                p[i] - y.g[(i, i)] * vm[i] * vm[i]
            } else {
                let (s, c) = (va[i] - va[k]).sin_cos();
                -vm[i] * vm[k] * (y.g[(i, k)] * c + y.b[(i, k)] * s)
            }
        }
        (Injection::Q(i), StateVar::Vm(k)) => {
            if i == k {
                q[i] / vm[i] - y.b[(i, i)] * vm[i]
            } else {
                let (s, c) = (va[i] - va[k]).sin_cos();
                vm[i] * (y.g[(i, k)] * s - y.b[(i, k)] * c)
            }
        }
    }
}

/// Flat-start initial point: setpoint magnitudes on slack/PV buses, 1 p.u. elsewhere.
pub fn flat_start(net: &Network) -> (Vec<f64>, Vec<f64>) {
    let vm = net
        .buses
        .iter()
        .map(|b| match b.kind {
            BusKind::Pq => 1.0,
            _ => b.v_setpoint,
        })
        .collect();
    (vm, vec![0.0; net.n_buses()])
}

pub fn solve_power_flow(net: &Network, opts: PowerFlowOptions) -> Result<PowerFlowSolution> {
    let (vm, va) = flat_start(net);
    solve_power_flow_from(net, opts, vm, va)
}

/// Newton iterations from a supplied starting point.
pub fn solve_power_flow_from(
    net: &Network,
    opts: PowerFlowOptions,
    mut vm: Vec<f64>,
    mut va: Vec<f64>,
) -> Result<PowerFlowSolution> {
    let y = build_admittance(net)?;
    let layout = Layout::new(net);
    let (p_spec, q_spec) = scheduled(net);
    for (i, b) in net.buses.iter().enumerate() {
        if b.kind != BusKind::Pq {
            vm[i] = b.v_setpoint;
        }
    }
    va[net.slack()] = 0.0;

    let mut iterations = 0;
    loop {
        let (p, q) = injections(&y, &vm, &va);
        let f = mismatch(&layout, &p_spec, &q_spec, &p, &q);
        let worst = f.amax();
        if !worst.is_finite() {
            return Err(Error::NotConverged {
                iterations,
                mismatch: worst,
            });
        }
        if worst < opts.tol {
            return Ok(PowerFlowSolution {
                vm,
                va,
                iterations,
                final_mismatch: worst,
            });
        }
        if iterations >= opts.max_iter {
            return Err(Error::NotConverged {
                iterations,
                mismatch: worst,
            });
        }
        let j = jacobian_matrix(&layout, &y, &vm, &va);
        let dx = j
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::SingularJacobian(format!("at Newton iteration {iterations}")))?;
        for (c, var) in layout.vars.iter().enumerate() {
            match *var {
                StateVar::Vm(i) => vm[i] += dx[c],
                StateVar::Va(i) => va[i] += dx[c],
            }
        }
        iterations += 1;
    }
}
