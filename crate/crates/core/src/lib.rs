#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod demand;
pub mod error;
pub mod forecast;
pub mod grid;
pub mod normal;
pub mod objective;
pub mod optimizer;
pub mod par;
pub mod pareto;
pub mod scenario;
pub mod system;

pub use error::{Error, Result};
pub use system::System;
