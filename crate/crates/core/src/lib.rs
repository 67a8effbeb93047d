//! Maximum consensus robust fitting through a complementarity
//! reformulation, solved either by a Frank-Wolfe penalty method (EP) or by
//! ADMM (AM), plus the usual baselines and an exact small-instance oracle.

pub mod admm;
pub mod baselines;
pub mod error;
pub mod model;
pub mod oracle;
pub mod penalty;
pub mod profile;
pub mod reformulate;
pub mod scalar;
pub mod solvers;

pub use error::{Error, Result};
pub use admm::{am_solve, am_solve_report, AdmmState, AmConfig, AmReport};
pub use baselines::{
    l1_fit, least_squares, linf_outlier_removal, lo_ransac, ransac, HypothesisSource, LinearSource, RansacConfig,
};
pub use model::{
    complementarity_residual, complementarity_terms, consensus, feasibility_violation, init_state, lift_theta,
    penalty_value, recover_theta, Consensus, FitResult, TraceEntry, TIE_BAND,
};
pub use oracle::{exact_max_consensus, OracleResult};
pub use penalty::{ep_solve, ep_solve_report, EpConfig, EpReport};
pub use profile::Profile;
pub use scalar::Real;

pub type ModelParams = model::ModelParams<f64>;
pub type RegressionDataset = model::RegressionDataset<f64>;
pub type ConstraintSet = model::ConstraintSet<f64>;
pub type ConstraintSetBuilder = model::ConstraintSetBuilder<f64>;
pub type SolveState = model::SolveState<f64>;
