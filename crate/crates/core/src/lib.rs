//! Scenario-based energy and reserve market clearing with renewable portfolio
//! constraints: LP construction, solution, pricing, settlement and property checks.

pub mod dispatch;
pub mod error;
pub mod fixture;
pub mod instance;
pub mod lp;
pub mod network;
pub mod pricing;
pub mod scenario;
pub mod settlement;
pub mod solver;
pub mod study;
pub mod verify;

pub use error::{Error, Result};
pub use instance::{validate_instance, MarketInstance};
pub use lp::{build_lp, build_lp_with, BuildOptions, LpModel};
pub use solver::{solve, LpSolution, SolverOptions};
