//! Dense conic optimization for the robustness programs.

pub mod ipm;
pub mod program;
pub mod robustness;

pub use ipm::{solve, Solution, SolverOptions, Status};
pub use program::{ConeProgram, Expr, LinearMap, Row, VarId};
