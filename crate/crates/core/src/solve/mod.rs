//! Mixed-integer QP solving: convex subsolvers for the relaxations and a
//! branch-and-bound driver on top of them.

mod active_set;
mod admm;
mod bnb;
mod qp;

pub use active_set::ActiveSetSolver;
pub use admm::AdmmSolver;
pub use bnb::{branch_and_bound, BnbSettings, MiqpResult, MiqpSolver, MiqpStatus, NodeRecord, SolveStats};
pub use qp::{qp_solve, QpData, QpMethod, QpSettings, QpSolution, QpStatus, WarmStart};
