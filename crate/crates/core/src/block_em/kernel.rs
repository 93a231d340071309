//! Sparse kernels for the quadratic coefficients `Ω`, the `π` update and the
//! lower bound.
//!
//! Every ordered pair `(i, j)` falls into a configuration
//! `code = g_ij | (χ_ij << 1)`. The all-zero configuration is handled in
//! closed form through the column sums `τ` of `ξ`; every other configuration
//! lives on the union of the supports of `G` and the feature matrices `X_s`,
//! so only those pairs are ever visited.

use std::sync::atomic::{AtomicBool, Ordering};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::state::{PiTable, VariationalState};
use crate::error::{Error, Result};
use crate::graph::{density, Adjacency, CovariateSet, Graph, SparseBinary};
use crate::par;

/// Largest `n` accepted by [`omega_naive`].
pub const NAIVE_MAX_NODES: usize = 2000;

/// Largest number of covariates entering block recovery.
pub const MAX_EM_COVARIATES: usize = 6;

/// Denominator cells below this fraction of the cell's total pair mass are
/// treated as empty.
const EMPTY_CELL_RATIO: f64 = 1e-10;

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

/// Default non-zero budget for each feature matrix: `50 · max(m, n)`.
pub fn default_sparsity_budget(g: &Graph) -> usize {
    50 * g.m().max(g.n())
}

/// Pairs with a non-zero configuration code, per row, plus the feature
/// matrices and their intersections used by the `π` update.
pub struct DyadSupport<'a> {
    graph: &'a Graph,
    p: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    codes: Vec<u8>,
    /// `(|S|, X_S)` for every non-empty covariate subset `S`, where `X_S`
    /// is the entry-wise product of the `X_s` in `S`.
    intersections: Vec<(usize, SparseBinary)>,
}

impl<'a> DyadSupport<'a> {
    /// Builds the union support of `G` and every `X_s`. Feature matrices are
    /// subject to `budget` non-zeros each.
    pub fn new(g: &'a Graph, x: &'a CovariateSet, budget: usize) -> Result<Self> {
        let n = g.n();
        let p = x.p();
        if p > MAX_EM_COVARIATES {
            return Err(Error::Capacity {
                what: "covariates in block recovery",
                limit: MAX_EM_COVARIATES,
                got: p,
            });
        }
        if p > 0 && x.n() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: x.n(),
            });
        }
        let features: Vec<&SparseBinary> = (0..p)
            .map(|s| x.feature_adjacency(s, budget).map(|f| &f.matrix))
            .collect::<Result<_>>()?;

        let rows: Vec<Vec<(usize, u8)>> = par::map_collect(n, |i| {
            let mut entries: Vec<(usize, u8)> = g.neighbors(i).iter().map(|&j| (j, 1u8)).collect();
            for (s, f) in features.iter().enumerate() {
                entries.extend(f.row(i).iter().map(|&j| (j, 2u8 << s)));
            }
            entries.sort_unstable_by_key(|e| e.0);
            let mut merged: Vec<(usize, u8)> = Vec::with_capacity(entries.len());
            for (j, bit) in entries {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 |= bit,
                    _ => merged.push((j, bit)),
                }
            }
            merged
        });
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let total = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(total);
        let mut codes = Vec::with_capacity(total);
        for r in rows {
            for (j, c) in r {
                cols.push(j);
                codes.push(c);
            }
            offsets.push(cols.len());
        }

        let mut intersections = Vec::new();
        for subset in 1u32..(1 << p) {
            let mut members = (0..p).filter(|s| subset & (1 << s) != 0);
            let first = members.next().expect("non-empty subset");
            let mut acc = features[first].clone();
            for s in members {
                acc = acc.hadamard(features[s]);
            }
            intersections.push((subset.count_ones() as usize, acc));
        }

        Ok(DyadSupport {
            graph: g,
            p,
            offsets,
            cols,
            codes,
            intersections,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn graph(&self) -> &Graph {
        self.graph
    }

    /// Stored non-zero pairs (ordered).
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    fn row(&self, i: usize) -> (&[usize], &[u8]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[r.clone()], &self.codes[r])
    }

    /// Per-code sums `y_c = Σ_{j ∈ row i, code c} ξ_j`, laid out as
    /// `codes × K`, plus a bitmask of the codes present.
    fn row_sums(&self, i: usize, xi: ArrayView2<'_, f64>, y: &mut [f64]) -> u128 {
        let k = xi.ncols();
        y.fill(0.0);
        let mut seen = 0u128;
        let (cols, codes) = self.row(i);
        for (&j, &c) in cols.iter().zip(codes) {
            let c = c as usize;
            seen |= 1 << c;
            let dst = &mut y[c * k..(c + 1) * k];
            for (d, &v) in dst.iter_mut().zip(xi.row(j).iter()) {
                *d += v;
            }
        }
        seen
    }
}

fn column_sums(xi: ArrayView2<'_, f64>) -> Array1<f64> {
    xi.sum_axis(Axis(0))
}

/// `Ω_ik = Σ_{j≠i} Σ_l ξ_jl log π_kl(code_ij)`, computed as
/// `A₀Π₀ᵀ + Σ_{c≠0} (M_c ξ) Π_cᵀ` with `A₀ = 1τᵀ − ξ`, `Π_c = log π(c) − log π(0)`
/// and `M_c` the 0/1 matrix of pairs in configuration `c`.
pub fn omega(support: &DyadSupport<'_>, xi: ArrayView2<'_, f64>, pi: &PiTable) -> Array2<f64> {
    let n = xi.nrows();
    let k = xi.ncols();
    let logs = pi.log_tables();
    let codes = logs.len();
    let base = &logs[0];
    let diffs: Vec<Array2<f64>> = logs.iter().map(|l| l - base).collect();
    let tau = column_sums(xi);

    let mut out = Array2::<f64>::zeros((n, k));
    let data = out.as_slice_mut().expect("fresh array is contiguous");
    par::for_each_row_mut(data, k, |i, row| {
        let a0 = &tau - &xi.row(i);
        let mut acc = base.dot(&a0);
        let mut y = vec![0.0; codes * k];
        let seen = support.row_sums(i, xi, &mut y);
        for (c, diff) in diffs.iter().enumerate().skip(1) {
            if seen & (1 << c) != 0 {
                let yc = ArrayView1::from(&y[c * k..(c + 1) * k]);
                acc += &diff.dot(&yc);
            }
        }
        row.copy_from_slice(acc.as_slice().expect("contiguous"));
    });
    out
}

/// Reference evaluation of `Ω` by a direct loop over all `(i, j, k, l)`.
/// Only for testing and benchmarking.
pub fn omega_naive(
    g: &Graph,
    x: &CovariateSet,
    xi: ArrayView2<'_, f64>,
    pi: &PiTable,
) -> Result<Array2<f64>> {
    let n = xi.nrows();
    if n > NAIVE_MAX_NODES {
        return Err(Error::Capacity {
            what: "naive Ω evaluation node count",
            limit: NAIVE_MAX_NODES,
            got: n,
        });
    }
    let k = xi.ncols();
    let logs = pi.log_tables();
    let mut out = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            let code = (g.has_edge(i, j) as usize) | ((x.match_mask(i, j) as usize) << 1);
            let table = &logs[code];
            for a in 0..k {
                let mut s = 0.0;
                for b in 0..k {
                    s += xi[[j, b]] * table[[a, b]];
                }
                out[[i, a]] += s;
            }
        }
    }
    Ok(out)
}

/// `ℓ_B = ½ Σ_ik ξ_ik Ω_ik + Σ_ik ξ_ik (log η_k − log ξ_ik)` given `Ω`
/// evaluated at the same `ξ` and `π`.
pub fn lower_bound_from_omega(xi: ArrayView2<'_, f64>, eta: &[f64], omega: &Array2<f64>) -> f64 {
    let pair_term = 0.5 * (&xi * omega).sum();
    let mut entropy = 0.0;
    for row in xi.rows() {
        for (&v, &e) in row.iter().zip(eta) {
            if v > 0.0 {
                entropy += v * (e.ln() - v.ln());
            }
        }
    }
    pair_term + entropy
}

/// The variational lower bound at the state's `ξ`, `η` and `π`.
pub fn lower_bound(support: &DyadSupport<'_>, state: &VariationalState) -> f64 {
    warn_if_clamped(&state.pi);
    let om = omega(support, state.xi.view(), &state.pi);
    lower_bound_from_omega(state.xi.view(), &state.eta, &om)
}

pub(crate) fn warn_if_clamped(pi: &PiTable) {
    let clamped = pi.clamped_cells();
    if clamped > 0 && !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("{clamped} link probabilities are 0 or 1; clamping before taking logs");
    }
}

/// Pair mass per block pair and configuration, `S_c = Σ_{(i,j) in c} ξ_iᵀ ξ_j`,
/// for every non-zero code `c`.
fn configuration_masses(support: &DyadSupport<'_>, xi: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
    let k = xi.ncols();
    let codes = 2usize << support.p();
    par::fold_reduce(
        support.n(),
        || vec![Array2::<f64>::zeros((k, k)); codes],
        |mut acc, i| {
            let mut y = vec![0.0; codes * k];
            let seen = support.row_sums(i, xi, &mut y);
            let xi_i = xi.row(i);
            for (c, m) in acc.iter_mut().enumerate().skip(1) {
                if seen & (1 << c) == 0 {
                    continue;
                }
                let yc = &y[c * k..(c + 1) * k];
                for a in 0..k {
                    let w = xi_i[a];
                    if w == 0.0 {
                        continue;
                    }
                    for (dst, &v) in m.row_mut(a).iter_mut().zip(yc) {
                        *dst += w * v;
                    }
                }
            }
            acc
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += &y;
            }
            a
        },
    )
}

/// `P₁ = ττᵀ − ξᵀξ`: total ordered-pair mass per block pair.
pub fn pair_mass(xi: ArrayView2<'_, f64>) -> Array2<f64> {
    let tau = column_sums(xi).insert_axis(Axis(1));
    tau.dot(&tau.t()) - xi.t().dot(&xi)
}

/// `P₂ = Σ_{S≠∅} (−1)^{|S|} ξᵀ X_S ξ`: minus the ordered-pair mass of pairs
/// matching on at least one covariate, by inclusion-exclusion.
pub fn matched_mass_correction(support: &DyadSupport<'_>, xi: ArrayView2<'_, f64>) -> Array2<f64> {
    let k = xi.ncols();
    let mut out = Array2::<f64>::zeros((k, k));
    for (size, m) in &support.intersections {
        let q = m.quadratic_form(xi);
        if size % 2 == 1 {
            out -= &q;
        } else {
            out += &q;
        }
    }
    out
}

/// Closed-form maximizer of `ℓ_B` in `π` given `ξ`:
/// `π(1, χ) = ξᵀ(G ∘ Λ(χ))ξ ⊘ ξᵀΛ(χ)ξ` over ordered pairs, where `Λ(χ)`
/// marks pairs with match pattern `χ`. The `χ = 0` denominator is `P₁ + P₂`.
/// Cells without any pairs fall back to the global edge density.
pub fn update_pi(support: &DyadSupport<'_>, xi: ArrayView2<'_, f64>) -> PiTable {
    let k = xi.ncols();
    let p = support.p();
    let masses = configuration_masses(support, xi);
    let p1 = pair_mass(xi);
    let fallback = density(support.n(), support.graph().m());
    let mut empty_cells = 0usize;

    let mut mats = Vec::with_capacity(1 << p);
    for chi in 0..(1usize << p) {
        let linked = &masses[1 | (chi << 1)];
        let denom = if chi == 0 {
            &p1 + &matched_mass_correction(support, xi)
        } else {
            &masses[chi << 1] + linked
        };
        let mat = Array2::from_shape_fn((k, k), |(a, b)| {
            let d = denom[[a, b]];
            if d <= EMPTY_CELL_RATIO * p1[[a, b]] || d <= 0.0 {
                empty_cells += 1;
                fallback
            } else {
                (linked[[a, b]] / d).clamp(0.0, 1.0)
            }
        });
        mats.push(mat);
    }
    if empty_cells > 0 {
        log::warn!(
            "{empty_cells} link-probability cells have no pairs; using the global density {fallback:.3e}"
        );
    }
    PiTable::from_link_matrices(k, p, mats)
}
