//! In-repo LP/MILP engine: sparse LU, revised simplex, branch and bound.

pub mod basis;
pub mod lp;
pub mod lu;

pub use lp::{BasisSnapshot, LpProblem, LpStatus, PivotRule, SimplexOptions, SimplexSolver, VarStatus};
pub mod bnb;
pub use bnb::{branch_sos2, solve_lp, solve_milp, LpSolution, MilpOptions, Relaxation, SolveResult, SolveStatus, Sos2Split, DEFAULT_GAP};
