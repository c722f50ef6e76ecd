//! Linearised voltage response to load changes.
//!
//! The inverse power-flow Jacobian maps injection changes `[ΔP; ΔQ]` to voltage
//! changes `[ΔV; Δδ]`. The grid-impact metric of a charging demand vector is
//! the squared 2-norm of that response.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::admittance::build_admittance;
use super::case::{BusKind, Network};
use super::powerflow::{jacobian_matrix, Injection, Layout, PowerFlowSolution, StateVar};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    /// Row `r` holds the equation `eqs[r]`.
    pub eqs: Vec<Injection>,
    /// Column `c` differentiates with respect to `vars[c]`.
    pub vars: Vec<StateVar>,
}

#[derive(Clone, Debug)]
pub struct JacobianInverse {
    /// Entries `b[(j, c)]`.
    pub matrix: DMatrix<f64>,
    /// Row `j` is the change of `rows[j]`.
    pub rows: Vec<StateVar>,
    /// Column `c` is the response to a unit change of `cols[c]`.
    pub cols: Vec<Injection>,
}

impl JacobianInverse {
    pub fn col_of(&self, inj: Injection) -> Option<usize> {
        self.cols.iter().position(|&c| c == inj)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Response `[ΔV; Δδ]` to an injection change vector ordered like `cols`.
    pub fn apply(&self, delta: &DVector<f64>) -> DVector<f64> {
        &self.matrix * delta
    }
}

pub fn assemble_jacobian(net: &Network, sol: &PowerFlowSolution) -> Result<Jacobian> {
    let y = build_admittance(net)?;
    let layout = Layout::new(net);
    let matrix = jacobian_matrix(&layout, &y, &sol.vm, &sol.va);
    Ok(Jacobian {
        matrix,
        eqs: layout.eqs,
        vars: layout.vars,
    })
}

pub fn invert_jacobian(j: &Jacobian) -> Result<JacobianInverse> {
    let matrix = j
        .matrix
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularJacobian("operating point is at or near voltage collapse".into()))?;
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularJacobian("non-finite inverse".into()));
    }
    Ok(JacobianInverse {
        matrix,
        rows: j.vars.clone(),
        cols: j.eqs.clone(),
    })
}

/// Bus assignment of the charging stations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationMap {
    /// Case-file bus number feeding each station.
    pub buses: Vec<usize>,
    /// Power factor of the charging load; 1.0 draws no reactive power.
    #[serde(default = "unity")]
    pub power_factor: f64,
}

fn unity() -> f64 {
    1.0
}

impl StationMap {
    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    /// One message per station that is not fed by a PQ bus of `net`.
    pub fn violations(&self, net: &Network) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            out.push("power_factor must be in (0,1]".to_string());
        }
        for (s, &id) in self.buses.iter().enumerate() {
            match net.index_of(id) {
                None => out.push(format!("station {} maps to unknown bus {id}", s + 1)),
                Some(i) if net.buses[i].kind != BusKind::Pq => {
                    out.push(format!("station {} must map to a PQ bus", s + 1))
                }
                Some(_) => {}
            }
        }
        out
    }
}

/// Per-station voltage response columns, in per-unit voltage change per MW of demand.
#[derive(Clone, Debug)]
pub struct ImpactModel {
    pub columns: DMatrix<f64>,
}

impl ImpactModel {
    pub fn new(ji: &JacobianInverse, net: &Network, map: &StationMap) -> Result<Self> {
        let bad = map.violations(net);
        if !bad.is_empty() {
            return Err(Error::InvalidInput(bad.join("; ")));
        }
        let tan_phi = (1.0 / (map.power_factor * map.power_factor) - 1.0).max(0.0).sqrt();
        let mut columns = DMatrix::zeros(ji.dim(), map.len());
        for (s, &id) in map.buses.iter().enumerate() {
            let bus = net.index_of(id).expect("checked above");
            let cp = ji.col_of(Injection::P(bus)).expect("PQ bus has a P column");
            let cq = ji.col_of(Injection::Q(bus)).expect("PQ bus has a Q column");
            // Load is a negative injection; the sign drops out of the squared norm
            // but keeps the response vector physically oriented.
            let col = -(ji.matrix.column(cp) + ji.matrix.column(cq) * tan_phi) / net.base_mva;
            columns.set_column(s, &col);
        }
        Ok(Self { columns })
    }

    pub fn n_stations(&self) -> usize {
        self.columns.ncols()
    }

    /// Voltage response `[ΔV; Δδ]` to station demands in MW.
    pub fn response(&self, demands: &[f64]) -> DVector<f64> {
        &self.columns * DVector::from_column_slice(demands)
    }

    /// Grid impact `F = ‖J⁻¹[ΔP; ΔQ]‖²` of station demands (MWh over one hour).
    pub fn impact(&self, demands: &[f64]) -> Result<f64> {
        if demands.len() != self.n_stations() {
            return Err(Error::Dimension(format!(
                "{} demands for {} stations",
                demands.len(),
                self.n_stations()
            )));
        }
        if demands.iter().any(|&d| d < 0.0 || !d.is_finite()) {
            return Err(Error::InvalidInput("demands must be finite and nonnegative".into()));
        }
        Ok(self.response(demands).norm_squared())
    }
}

/// Grid impact of station demands; see [`ImpactModel::impact`].
pub fn impact_metric(
    ji: &JacobianInverse,
    net: &Network,
    demands: &[f64],
    map: &StationMap,
) -> Result<f64> {
    ImpactModel::new(ji, net, map)?.impact(demands)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusSensitivity {
    pub bus: usize,
    pub active: f64,
    pub reactive: f64,
}

/// Active and reactive sensitivity of every PQ bus: squared norm of the
/// inverse-Jacobian column for a unit (1 p.u.) injection there.
pub fn bus_sensitivities(ji: &JacobianInverse, net: &Network) -> Vec<BusSensitivity> {
    net.pq_buses()
        .into_iter()
        .map(|i| {
            let cp = ji.col_of(Injection::P(i)).expect("PQ bus has a P column");
            let cq = ji.col_of(Injection::Q(i)).expect("PQ bus has a Q column");
            BusSensitivity {
                bus: net.buses[i].id,
                active: ji.matrix.column(cp).norm_squared(),
                reactive: ji.matrix.column(cq).norm_squared(),
            }
        })
        .collect()
}
