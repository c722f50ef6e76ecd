//! Bus/branch network model, AC power flow and linearised grid impact.

pub mod admittance;
pub mod case;
pub mod powerflow;
pub mod sensitivity;

pub use admittance::{build_admittance, AdmittanceMatrix};
pub use case::{parse_case, read_case, Branch, Bus, BusKind, Network};
pub use powerflow::{
    solve_power_flow, solve_power_flow_from, Injection, PowerFlowOptions, PowerFlowSolution,
    StateVar,
};
pub use sensitivity::{
    assemble_jacobian, bus_sensitivities, impact_metric, invert_jacobian, BusSensitivity,
    ImpactModel, Jacobian, JacobianInverse, StationMap,
};

/// Solved base case with its inverse Jacobian.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub solution: PowerFlowSolution,
    pub inverse: JacobianInverse,
}

pub fn linearize(net: &Network, opts: PowerFlowOptions) -> crate::Result<Linearization> {
    let solution = solve_power_flow(net, opts)?;
    let jac = assemble_jacobian(net, &solution)?;
    let inverse = invert_jacobian(&jac)?;
    Ok(Linearization { solution, inverse })
}
