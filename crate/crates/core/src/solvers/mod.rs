//! Dense LP and QP subproblem solvers.

mod coupling;
mod qp;
mod simplex;

pub use coupling::{coupling_objective, coupling_qp, project_coupling, CouplingSolution, CouplingStart, WorkingSet};
pub use qp::{solve_qp, solve_rank_one_qp, QpProblem, QpSolution, QpStatus};
pub use simplex::{active_rank, is_vertex, solve_lp, solve_lp_with_start, LpProblem, LpSolution, LpStart, LpStatus};
