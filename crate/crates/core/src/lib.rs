//! Two-sided free-energy estimation for Ising models and order-k Markov random fields.
//!
//! Lower bounds come from product distributions (mean-field optimization and
//! correlation rounding); upper bounds come from Sherali-Adams
//! pseudo-distributions with a pseudo-entropy surrogate. A brute-force oracle
//! provides ground truth on small instances.

pub mod distribution;
pub mod error;
pub mod exact;
pub mod info;
pub mod io;
pub mod linalg;
pub mod meanfield;
pub mod model;
pub mod rng;
pub mod rounding;
pub mod sa;
pub mod spinglass;
pub mod subsample;
pub mod util;

pub use distribution::{JointDistribution, MarginalSource, ProductDistribution};
pub use error::{Error, Result};
pub use exact::{exact_free_energy, exact_gibbs, ExactOracle};
pub use linalg::Matrix;
pub use model::{FrobeniusInteractionNorm, HyperEdge, IsingModel, Mrf, Noise, SpinConfiguration};
pub use rounding::{sa_meanfield, theorem1_witness};
pub use sa::{solve_sa, LocalFamily};
