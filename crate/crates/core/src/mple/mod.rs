//! Structural estimation by maximum pseudolikelihood.
//!
//! Conditional on a block assignment, each dyad's link is logistic in its
//! change statistics. Within-block and between-block dyads are fitted
//! separately; between-block dyads carry no externality terms. Coefficients
//! are on the sufficient-statistic scale (`edges = 2α`, `two_stars = ψ`,
//! `triangles = 4γ`, `same_<cov> = 2β`).
//!
//! Standard errors are conditional on the block assignment.

mod design;
mod fit;

pub use design::{
    build_design, column_names, dyad_row, Design, DyadRow, Group, Sampling, SamplingInfo, Terms,
    AUTO_CONTROL_RATIO, AUTO_FULL_MAX_NODES,
};
pub use fit::{fit_logistic, log_pseudolikelihood, score_hessian, FitResult, SCORE_TOL};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{CovariateSet, Graph};
use crate::model::{BlockAssignment, GroupCoefficients, ModelParams};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MpleConfig {
    pub sampling: Sampling,
    pub terms: Terms,
    /// Seed for case-control draws.
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    /// `None` when no two nodes share a block.
    pub within: Option<FitResult>,
    /// `None` when every node is in the same block.
    pub between: Option<FitResult>,
}

impl Estimate {
    /// Fitted coefficients as model parameters; missing groups and terms are
    /// zero.
    pub fn params(&self, covariates: &[String]) -> ModelParams {
        let group = |f: &Option<FitResult>, within: bool| {
            let get = |name: &str| {
                f.as_ref()
                    .and_then(|f| f.coefficient(name))
                    .map_or(0.0, |c| c.0)
            };
            GroupCoefficients {
                edges: get("edges"),
                two_stars: within.then(|| get("two_stars")),
                triangles: within.then(|| get("triangles")),
                same: covariates
                    .iter()
                    .map(|c| get(&format!("same_{c}")))
                    .collect(),
            }
        };
        ModelParams::from_groups(&group(&self.within, true), &group(&self.between, false))
            .expect("same covariate count in both groups")
    }
}

/// Fits the within and between groups independently.
pub fn estimate(
    g: &Graph,
    x: &CovariateSet,
    z: &BlockAssignment,
    config: &MpleConfig,
) -> Result<Estimate> {
    let fit_group = |group: Group, seed: u64| -> Result<Option<FitResult>> {
        let d = build_design(g, x, z, group, config.sampling, config.terms, seed)?;
        if d.sampling.population == 0 {
            return Ok(None);
        }
        log::info!(
            "{} group: {} dyads in {} distinct rows",
            group.name(),
            d.sampling.dyads,
            d.nrows()
        );
        fit_logistic(&d).map(Some)
    };
    Ok(Estimate {
        within: fit_group(Group::Within, config.seed)?,
        between: fit_group(Group::Between, config.seed.wrapping_add(1))?,
    })
}
