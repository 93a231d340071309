//! Estimation toolkit for strategic network-formation models with latent
//! block structure.
//!
//! The pipeline has two steps. Block recovery ([`block_em`]) fits a
//! stochastic blockmodel with discrete covariates by variational EM, where
//! the E-step is replaced by a minorization-maximization update that reduces
//! to `n` independent quadratic programs over the simplex. Structural
//! estimation ([`mple`]) then fits the payoff parameters by maximum
//! pseudolikelihood conditional on the recovered blocks, separately for
//! within-block and between-block dyads.
//!
//! [`model`] holds the payoff specification, the potential function and an
//! exact enumeration of the stationary law for tiny graphs; [`simulator`]
//! runs the sequential link-formation dynamics whose stationary law it is.

pub mod block_em;
pub mod error;
pub mod graph;
pub mod model;
pub mod mple;
pub mod par;
pub mod simulator;

pub use error::{Error, Result};
pub use graph::{Adjacency, CovariateSet, DynamicGraph, FeatureAdjacency, Graph, GraphStats};
pub use model::{BlockAssignment, ChangeStats, ModelParams};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
