//! Multivariate-response linear regression with an overlapping group lasso
//! across outcome groups and a fused lasso across related outcomes, fit by
//! multi-block ADMM.

pub mod commands;
pub mod cv;
pub mod data;
pub mod error;
pub mod exec;
pub mod io;
pub mod path;
pub mod penalty;
pub mod sim;
pub mod solver;
pub mod structure;

pub use data::{CoefficientMatrix, Design, Moments, ProblemData, Standardization};
pub use error::{Error, Result};
pub use penalty::{
    compute_adaptive_weights, compute_marginal_weights_base, compute_ols, eval_objective,
    eval_penalties, make_nonadaptive_weights, BaseEstimate, PenaltyConfig, WeightScheme, Weights,
};
pub use solver::{fit, FitContext, FitResult, SolverOptions, SolverState};
pub use structure::{
    build_d, build_f, compute_hull, detect_structure, ConstraintMatrices, FusedPair,
    OutcomeGrouping,
};
pub use exec::Execution;
pub use path::{fit_path, make_lambda_grid, predict, PathSpec};
pub use cv::{cross_validate, refit, CVResult, CvOptions, GridIndex};
