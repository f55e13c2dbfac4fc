//! Sherali-Adams pseudo-distributions and the entropy-regularized relaxation.

pub mod family;
pub mod lp;
pub mod moments;
pub mod polytope;
pub mod solver;

pub use family::{
    embed_distribution, pseudo_entropy, pseudo_entropy_min, pseudo_expectation_energy,
    validate_local_family, LocalFamily, SearchMode, ValidationReport, Violation,
};
pub use polytope::{lp_solve, LpSolution, SaPolytope};
pub use solver::{solve_sa, solve_sa_with, SaOptions, SaSolveReport};
