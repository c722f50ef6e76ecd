//! Stage problem, backward recursion and policy simulation.

pub mod qp;
pub mod sdp;
pub mod simulate;
pub mod stage;

pub use sdp::{greedy, greedy_with, sdp_solve, sdp_solve_with, Policy, PolicyKind, StateGrid};
pub use simulate::{next_storage, simulate_policy, NoiseMode, Simulation, Summary, Trajectory};
pub use stage::{assemble_stage_qp, StageQp, StageSolution};
