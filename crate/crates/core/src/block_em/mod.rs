//! Block recovery by variational EM with a minorization-maximization E-step.
//!
//! The likelihood is approximated by a stochastic blockmodel whose link
//! probabilities depend on the block pair and on which covariates match. The
//! variational lower bound is raised by alternating three closed-form steps:
//! `ξ` maximizes a separable quadratic minorizer (one simplex QP per node),
//! `η` is the column mean of `ξ`, and `π` is the weighted link frequency of
//! each block pair and covariate pattern.

mod checkpoint;
mod diagnostics;
mod init;
mod kernel;
mod qp;
mod state;

use std::path::PathBuf;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use checkpoint::{checkpoint_paths, read_checkpoint, read_xi, write_checkpoint};
pub use diagnostics::{
    adjusted_rand_index, pair_table, size_summary, yule_coefficient, PairTable, SizeSummary,
};
pub use init::init_blocks;
pub use kernel::{
    default_sparsity_budget, lower_bound, lower_bound_from_omega, matched_mass_correction, omega,
    omega_naive, pair_mass, update_pi, DyadSupport, MAX_EM_COVARIATES, NAIVE_MAX_NODES,
};
pub use qp::{kkt_residual, qp_simplex, QpSolution};
pub use state::{eta_from_xi, floor_and_normalize, PiTable, VariationalState, PI_CLAMP, XI_FLOOR};

use crate::error::{Error, Result};
use crate::graph::{CovariateSet, Graph};
use crate::model::BlockAssignment;
use crate::par;

/// Quadratic coefficient of `ξ_ik²` in the per-node QP.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadCoefForm {
    /// `(Ω_ik/2 − 1)/ξ_ik`, which follows from the minorizer.
    #[default]
    Derived,
    /// `(Ω_ik/(2ξ_ik) − 1)/ξ_ik`, an alternative rearrangement kept for
    /// comparison. It does not maximize the minorizer.
    Rearranged,
}

/// Per-node QP coefficients `(a_i, b_i)`.
pub fn minorizer_coefficients(
    omega: ArrayView2<'_, f64>,
    xi_prev: ArrayView2<'_, f64>,
    eta: &[f64],
    form: QuadCoefForm,
) -> (Array2<f64>, Array2<f64>) {
    let a = Array2::from_shape_fn(omega.dim(), |(i, k)| {
        let (w, x) = (omega[[i, k]], xi_prev[[i, k]]);
        match form {
            QuadCoefForm::Derived => (w / 2.0 - 1.0) / x,
            QuadCoefForm::Rearranged => (w / (2.0 * x) - 1.0) / x,
        }
    });
    let b = Array2::from_shape_fn(omega.dim(), |(i, k)| {
        eta[k].ln() - xi_prev[[i, k]].ln() + 1.0
    });
    (a, b)
}

/// The minorizer `M(ξ; ξ^{(s)})` given `Ω` at `ξ^{(s)}`.
pub fn minorizer(
    xi: ArrayView2<'_, f64>,
    xi_prev: ArrayView2<'_, f64>,
    eta: &[f64],
    omega_prev: ArrayView2<'_, f64>,
) -> f64 {
    let mut total = 0.0;
    for ((i, k), &v) in xi.indexed_iter() {
        let s = xi_prev[[i, k]];
        total += omega_prev[[i, k]] / (2.0 * s) * v * v;
        total += v * (eta[k].ln() - s.ln() - v / s + 1.0);
    }
    total
}

/// Maximizes the minorizer row by row; entries are floored at
/// [`XI_FLOOR`] and rows renormalized.
pub fn update_xi(
    omega: ArrayView2<'_, f64>,
    xi_prev: ArrayView2<'_, f64>,
    eta: &[f64],
    form: QuadCoefForm,
) -> Result<Array2<f64>> {
    let (n, k) = xi_prev.dim();
    let (a, b) = minorizer_coefficients(omega, xi_prev, eta, form);
    let rows: Vec<Result<Vec<f64>>> = par::map_collect(n, |i| {
        let ai = a.row(i).to_vec();
        let bi = b.row(i).to_vec();
        let mut x = qp_simplex(&ai, &bi)?.x;
        floor_and_normalize(&mut x);
        Ok(x)
    });
    let mut out = Array2::zeros((n, k));
    for (i, r) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&ndarray::ArrayView1::from(&r?[..]));
    }
    Ok(out)
}

/// Hard assignment `argmax_k ξ_ik`, ties to the lowest index.
pub fn modal_assignment(xi: ArrayView2<'_, f64>) -> BlockAssignment {
    let labels = xi
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (k, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    BlockAssignment::new(labels, xi.ncols()).expect("argmax is in range")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    /// Upper bound on the number of blocks. The run uses as many blocks as
    /// the initial partition has.
    pub k_max: usize,
    pub iters: usize,
    /// Stop once the relative lower-bound improvement drops below this.
    pub tol: f64,
    pub seed: u64,
    /// Mass spread off the initial block in the starting `ξ`.
    pub smoothing: f64,
    /// Non-zero cap for each feature matrix; defaults to `50 · max(m, n)`.
    pub sparsity_budget: Option<usize>,
    pub quad_form: QuadCoefForm,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Starting partition; label propagation when absent.
    #[serde(skip)]
    pub init: Option<BlockAssignment>,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            k_max: 20,
            iters: 250,
            tol: 1e-9,
            seed: 0,
            smoothing: 1e-3,
            sparsity_budget: None,
            quad_form: QuadCoefForm::Derived,
            checkpoint_dir: None,
            init: None,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.k_max == 0 {
            errs.push("k_max must be at least 1".to_string());
        }
        if self.iters == 0 {
            errs.push("iters must be at least 1".to_string());
        }
        if self.tol < 0.0 || self.tol.is_nan() {
            errs.push("tol must be non-negative".to_string());
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            errs.push("smoothing must lie in [0, 1)".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(errs.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lower_bound: f64,
    /// Change from the previous iteration; absent for the starting point.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EmResult {
    pub z: BlockAssignment,
    pub init: BlockAssignment,
    pub state: VariationalState,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

/// Runs initialization and up to `config.iters` EM cycles.
pub fn em_run(g: &Graph, x: &CovariateSet, config: &EmConfig) -> Result<EmResult> {
    config.validate()?;
    if g.n() == 0 {
        return Err(Error::InvalidInput("graph has no nodes".into()));
    }
    let budget = config
        .sparsity_budget
        .unwrap_or_else(|| default_sparsity_budget(g));
    let support = DyadSupport::new(g, x, budget)?;

    let init = match &config.init {
        Some(z) if z.n() != g.n() => {
            return Err(Error::LengthMismatch {
                expected: g.n(),
                got: z.n(),
            })
        }
        Some(z) => z.clone(),
        None => init_blocks(g, config.k_max, config.seed),
    };
    let k = init.k();
    log::info!("block recovery: n = {}, K = {k}, p = {}", g.n(), x.p());

    let xi = VariationalState::smoothed_one_hot(init.labels(), k, config.smoothing);
    let eta = eta_from_xi(&xi);
    let pi = update_pi(&support, xi.view());
    kernel::warn_if_clamped(&pi);
    let mut om = omega(&support, xi.view(), &pi);
    let mut lb = lower_bound_from_omega(xi.view(), &eta, &om);
    let mut state = VariationalState {
        xi,
        eta,
        pi,
        iteration: 0,
        trace: vec![lb],
    };
    let mut trace = vec![TraceRow {
        iteration: 0,
        lower_bound: lb,
        delta: None,
    }];
    if let Some(dir) = &config.checkpoint_dir {
        write_checkpoint(dir, &state)?;
    }

    let mut converged = false;
    for it in 1..=config.iters {
        let xi = update_xi(om.view(), state.xi.view(), &state.eta, config.quad_form)?;
        let eta = eta_from_xi(&xi);
        let pi = update_pi(&support, xi.view());
        om = omega(&support, xi.view(), &pi);
        let next = lower_bound_from_omega(xi.view(), &eta, &om);
        if !next.is_finite() {
            return Err(Error::Numerical(format!(
                "lower bound became non-finite at iteration {it}"
            )));
        }
        let delta = next - lb;
        if delta < -1e-8 * lb.abs() {
            log::warn!("lower bound decreased at iteration {it}: {lb} -> {next}");
        }
        log::debug!("iteration {it}: lower bound {next:.6} (delta {delta:.3e})");
        state = VariationalState {
            xi,
            eta,
            pi,
            iteration: it,
            trace: std::mem::take(&mut state.trace),
        };
        state.trace.push(next);
        trace.push(TraceRow {
            iteration: it,
            lower_bound: next,
            delta: Some(delta),
        });
        if let Some(dir) = &config.checkpoint_dir {
            write_checkpoint(dir, &state)?;
        }
        let rel = delta / lb.abs().max(f64::MIN_POSITIVE);
        lb = next;
        if rel.abs() < config.tol {
            converged = true;
            break;
        }
    }

    Ok(EmResult {
        z: modal_assignment(state.xi.view()),
        init,
        state,
        trace,
        converged,
    })
}
