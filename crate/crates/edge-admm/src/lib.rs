//! Distributed ADMM for optimization problems whose agents are coupled by
//! affine edge agreements `A_ij (x_i - x_j) = b_ij`, plus a centralized
//! reference solver and a distributed battery MPC application.

pub mod admm;
pub mod battery;
pub mod error;
pub mod graph;
pub mod oracle;
pub mod scenario;
pub mod sets;
pub mod subproblem;

pub use error::{Error, Result};
