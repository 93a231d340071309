//! Payoffs, the potential function and change statistics.
//!
//! Internally the potential uses the ordered-pair convention: an edge
//! contributes `u_ij + u_ji = 2α + Σ_p 2β_p f_p`, each within-block two-star
//! contributes `ψ` and each within-block triangle `4γ`. Reported coefficients
//! use the unordered sufficient-statistic convention
//! `edges = 2α, two_stars = ψ, triangles = 4γ, same_p = 2β_p`, which is also
//! what the pseudolikelihood fit recovers directly.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::graph::{common_neighbors, Adjacency, CovariateSet, Graph};

/// Largest node count accepted by [`exact_stationary`].
pub const MAX_EXACT_NODES: usize = 5;

/// Hard assignment of every node to one of `k` blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl BlockAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidInput(format!(
                "block label {bad} out of range for k = {k}"
            )));
        }
        Ok(BlockAssignment { labels, k })
    }

    /// Uses `max(label) + 1` blocks.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().map(|&l| l + 1).max().unwrap_or(1);
        BlockAssignment { labels, k }
    }

    /// Everyone in block 0.
    pub fn single(n: usize) -> Self {
        BlockAssignment {
            labels: vec![0; n],
            k: 1,
        }
    }

    #[inline]
    pub fn block(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// Sorted member lists per block.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            m[l].push(i);
        }
        m
    }

    /// Relabels blocks `0..k'` in order of first appearance, dropping empty
    /// blocks.
    pub fn compacted(&self) -> BlockAssignment {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        BlockAssignment {
            labels,
            k: next.max(1),
        }
    }

    /// Applies a node permutation: node `i` of the result is node `perm[i]`
    /// of `self`.
    pub fn permuted(&self, perm: &[usize]) -> BlockAssignment {
        BlockAssignment {
            labels: perm.iter().map(|&p| self.labels[p]).collect(),
            k: self.k,
        }
    }
}

/// Structural payoff parameters in utility units (ordered convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha_w: f64,
    pub alpha_b: f64,
    pub beta_w: Vec<f64>,
    pub beta_b: Vec<f64>,
    /// Popularity (two-star) payoff, within blocks only.
    pub psi: f64,
    /// Transitivity (triangle) payoff, within blocks only.
    pub gamma: f64,
}

/// Coefficients of one group in the unordered convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCoefficients {
    pub edges: f64,
    /// `None` for the between-block group.
    pub two_stars: Option<f64>,
    pub triangles: Option<f64>,
    pub same: Vec<f64>,
}

impl ModelParams {
    pub fn p(&self) -> usize {
        self.beta_w.len()
    }

    /// Homogeneous parameters with no covariates.
    pub fn simple(alpha_w: f64, alpha_b: f64, psi: f64, gamma: f64) -> Self {
        ModelParams {
            alpha_w,
            alpha_b,
            beta_w: Vec::new(),
            beta_b: Vec::new(),
            psi,
            gamma,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.beta_w.len() != p || self.beta_b.len() != p {
            return Err(Error::InvalidInput(format!(
                "parameters carry {}/{} homophily coefficients but there are {p} covariates",
                self.beta_w.len(),
                self.beta_b.len()
            )));
        }
        let all = [self.alpha_w, self.alpha_b, self.psi, self.gamma];
        if all
            .iter()
            .chain(&self.beta_w)
            .chain(&self.beta_b)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn within(&self) -> GroupCoefficients {
        GroupCoefficients {
            edges: 2.0 * self.alpha_w,
            two_stars: Some(self.psi),
            triangles: Some(4.0 * self.gamma),
            same: self.beta_w.iter().map(|b| 2.0 * b).collect(),
        }
    }

    pub fn between(&self) -> GroupCoefficients {
        GroupCoefficients {
            edges: 2.0 * self.alpha_b,
            two_stars: None,
            triangles: None,
            same: self.beta_b.iter().map(|b| 2.0 * b).collect(),
        }
    }

    /// Inverse of [`within`](Self::within)/[`between`](Self::between).
    pub fn from_groups(within: &GroupCoefficients, between: &GroupCoefficients) -> Result<Self> {
        if within.same.len() != between.same.len() {
            return Err(Error::LengthMismatch {
                expected: within.same.len(),
                got: between.same.len(),
            });
        }
        Ok(ModelParams {
            alpha_w: within.edges / 2.0,
            alpha_b: between.edges / 2.0,
            beta_w: within.same.iter().map(|v| v / 2.0).collect(),
            beta_b: between.same.iter().map(|v| v / 2.0).collect(),
            psi: within.two_stars.unwrap_or(0.0),
            gamma: within.triangles.unwrap_or(0.0) / 4.0,
        })
    }

    /// Flat JSON object with unordered-convention keys such as
    /// `within_edges`, `within_two_stars`, `between_same_<cov>`.
    pub fn to_flat_json(&self, covariate_names: &[String]) -> Result<Map<String, Value>> {
        self.validate(covariate_names.len())?;
        let mut map = Map::new();
        for (group, c) in [("within", self.within()), ("between", self.between())] {
            map.insert(format!("{group}_edges"), c.edges.into());
            if let Some(v) = c.two_stars {
                map.insert(format!("{group}_two_stars"), v.into());
            }
            if let Some(v) = c.triangles {
                map.insert(format!("{group}_triangles"), v.into());
            }
            for (name, v) in covariate_names.iter().zip(&c.same) {
                map.insert(format!("{group}_same_{name}"), (*v).into());
            }
        }
        Ok(map)
    }

    /// Parses [`to_flat_json`](Self::to_flat_json) output. Missing
    /// `two_stars`/`triangles` keys default to zero; every other key is
    /// required.
    pub fn from_flat_json(map: &Map<String, Value>, covariate_names: &[String]) -> Result<Self> {
        let mut missing = Vec::new();
        let mut get = |key: String, required: bool| -> f64 {
            match map.get(&key).and_then(Value::as_f64) {
                Some(v) => v,
                None => {
                    if required {
                        missing.push(key);
                    }
                    0.0
                }
            }
        };
        let within = GroupCoefficients {
            edges: get("within_edges".into(), true),
            two_stars: Some(get("within_two_stars".into(), false)),
            triangles: Some(get("within_triangles".into(), false)),
            same: covariate_names
                .iter()
                .map(|c| get(format!("within_same_{c}"), true))
                .collect(),
        };
        let between = GroupCoefficients {
            edges: get("between_edges".into(), true),
            two_stars: None,
            triangles: None,
            same: covariate_names
                .iter()
                .map(|c| get(format!("between_same_{c}"), true))
                .collect(),
        };
        if !missing.is_empty() {
            return Err(Error::InvalidInput(format!(
                "parameter JSON is missing: {}",
                missing.join(", ")
            )));
        }
        ModelParams::from_groups(&within, &between)
    }
}

/// `u_ij`: intercept plus homophily terms, with the within or between
/// coefficients. `same_mask` bit `p` is `f_p(x_i, x_j)`.
#[inline]
pub fn direct_utility(params: &ModelParams, same_mask: u32, same_block: bool) -> f64 {
    let (alpha, beta) = if same_block {
        (params.alpha_w, &params.beta_w)
    } else {
        (params.alpha_b, &params.beta_b)
    };
    let mut u = alpha;
    for (p, b) in beta.iter().enumerate() {
        if same_mask & (1 << p) != 0 {
            u += b;
        }
    }
    u
}

/// Change statistics for toggling one dyad.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeStats {
    /// `u_ij + u_ji`.
    pub edge_pair_utility: f64,
    /// Neighbors of `i` or `j` (other than each other) sharing their block.
    pub two_star_count: usize,
    /// Common neighbors sharing the block of `i` and `j`.
    pub triangle_count: usize,
    /// Bit `p` set iff `i` and `j` share covariate `p`.
    pub same_cov: u32,
}

impl ChangeStats {
    pub fn same_cov_vec(&self, p: usize) -> Vec<u8> {
        (0..p).map(|s| ((self.same_cov >> s) & 1) as u8).collect()
    }
}

/// Externality counts for dyad `(i, j)` under local externalities; both are
/// zero unless `i` and `j` share a block.
#[inline]
pub fn local_counts<G: Adjacency + ?Sized>(
    g: &G,
    z: &BlockAssignment,
    i: usize,
    j: usize,
) -> (usize, usize) {
    let b = z.block(i);
    if z.block(j) != b {
        return (0, 0);
    }
    let in_block = |&&r: &&usize| z.block(r) == b;
    let two = g
        .neighbors(i)
        .iter()
        .filter(|&&r| r != j)
        .filter(in_block)
        .count()
        + g.neighbors(j)
            .iter()
            .filter(|&&r| r != i)
            .filter(in_block)
            .count();
    let tri = common_neighbors(g, i, j, Some((z, b)));
    (two, tri)
}

/// Change statistics and `ΔQ = Q(g + ij) − Q(g − ij)` for dyad `(i, j)`,
/// whatever its current state.
pub fn change_stats<G: Adjacency + ?Sized>(
    g: &G,
    x: &CovariateSet,
    z: &BlockAssignment,
    params: &ModelParams,
    i: usize,
    j: usize,
) -> (ChangeStats, f64) {
    debug_assert!(i != j);
    let same_block = z.block(i) == z.block(j);
    let same_cov = x.match_mask(i, j);
    let edge_pair_utility = 2.0 * direct_utility(params, same_cov, same_block);
    let (two, tri) = local_counts(g, z, i, j);
    let delta = edge_pair_utility + params.psi * two as f64 + 4.0 * params.gamma * tri as f64;
    (
        ChangeStats {
            edge_pair_utility,
            two_star_count: two,
            triangle_count: tri,
            same_cov,
        },
        delta,
    )
}

/// The potential `Q(g)`:
/// `Σ_edges (u_ij + u_ji) + ψ·(within-block two-stars) + 4γ·(within-block triangles)`.
pub fn potential<G: Adjacency + ?Sized>(
    g: &G,
    x: &CovariateSet,
    z: &BlockAssignment,
    params: &ModelParams,
) -> f64 {
    let n = g.node_count();
    let mut q = 0.0;
    let mut two_stars = 0usize;
    let mut triangles = 0usize;
    for i in 0..n {
        let b = z.block(i);
        let nb = g.neighbors(i);
        let mut same = 0usize;
        for &j in nb {
            if z.block(j) == b {
                same += 1;
            }
            if j > i {
                q += 2.0 * direct_utility(params, x.match_mask(i, j), z.block(j) == b);
                if z.block(j) == b {
                    triangles += crate::graph::intersect_count(nb, g.neighbors(j), |w| {
                        w > j && z.block(w) == b
                    });
                }
            }
        }
        two_stars += same * same.saturating_sub(1) / 2;
    }
    q + params.psi * two_stars as f64 + 4.0 * params.gamma * triangles as f64
}

/// Exact stationary distribution over every graph on `n ≤ 5` nodes.
#[derive(Debug, Clone)]
pub struct StationaryLaw {
    pub n: usize,
    /// Dyads in lexicographic order; bit `d` of a state encodes `dyads[d]`.
    pub dyads: Vec<(usize, usize)>,
    pub probs: Vec<f64>,
}

impl StationaryLaw {
    pub fn state_of<G: Adjacency + ?Sized>(&self, g: &G) -> usize {
        self.dyads
            .iter()
            .enumerate()
            .filter(|(_, &(i, j))| g.has_edge(i, j))
            .fold(0, |acc, (d, _)| acc | (1 << d))
    }

    pub fn graph_of(&self, state: usize) -> Graph {
        let edges = self
            .dyads
            .iter()
            .enumerate()
            .filter(|(d, _)| state & (1 << d) != 0)
            .map(|(_, &e)| e);
        Graph::from_edge_list(edges, self.n).expect("dyads are in range")
    }

    pub fn prob<G: Adjacency + ?Sized>(&self, g: &G) -> f64 {
        self.probs[self.state_of(g)]
    }
}

/// `π(g) = exp(Q(g)) / Σ_ω exp(Q(ω))` by enumeration, with log-sum-exp
/// normalization.
pub fn exact_stationary(
    x: &CovariateSet,
    z: &BlockAssignment,
    params: &ModelParams,
) -> Result<StationaryLaw> {
    let n = z.n();
    if n > MAX_EXACT_NODES {
        return Err(Error::Capacity {
            what: "exact stationary enumeration node count",
            limit: MAX_EXACT_NODES,
            got: n,
        });
    }
    if x.p() > 0 && x.n() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: x.n(),
        });
    }
    let dyads: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let mut law = StationaryLaw {
        n,
        dyads,
        probs: Vec::new(),
    };
    let states = 1usize << law.dyads.len();
    let log_q: Vec<f64> = (0..states)
        .map(|s| potential(&law.graph_of(s), x, z, params))
        .collect();
    let max = log_q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_c = max + log_q.iter().map(|q| (q - max).exp()).sum::<f64>().ln();
    law.probs = log_q.iter().map(|q| (q - log_c).exp()).collect();
    Ok(law)
}

/// Logistic function `Λ(u) = 1 / (1 + e^{-u})`.
#[inline]
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}
