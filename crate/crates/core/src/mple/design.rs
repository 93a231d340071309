use std::collections::{HashMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, CovariateSet, Graph};
use crate::model::{local_counts, BlockAssignment};
use crate::par;

/// Node count above which [`Sampling::Auto`] switches to case-control.
pub const AUTO_FULL_MAX_NODES: usize = 20_000;

/// Non-edges per edge used by [`Sampling::Auto`] on large graphs.
pub const AUTO_CONTROL_RATIO: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Within,
    Between,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Within => "within",
            Group::Between => "between",
        }
    }
}

/// Which dyads enter the fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampling {
    /// Every dyad of the group.
    All,
    /// Every edge plus `ratio` non-edges per edge drawn without replacement;
    /// the intercept is corrected by an offset of `−ln(rate)`.
    CaseControl { ratio: usize },
    /// `All` up to [`AUTO_FULL_MAX_NODES`] nodes, case-control with
    /// [`AUTO_CONTROL_RATIO`] beyond.
    #[default]
    Auto,
}

impl Sampling {
    pub fn resolve(self, n: usize) -> Sampling {
        match self {
            Sampling::Auto if n <= AUTO_FULL_MAX_NODES => Sampling::All,
            Sampling::Auto => Sampling::CaseControl {
                ratio: AUTO_CONTROL_RATIO,
            },
            s => s,
        }
    }
}

/// Which externality terms enter the within-group fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Terms {
    pub two_stars: bool,
    pub triangles: bool,
}

impl Default for Terms {
    fn default() -> Self {
        Terms {
            two_stars: true,
            triangles: true,
        }
    }
}

/// One dyad's response and change statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadRow {
    pub response: bool,
    /// `[1, two_stars, triangles, same_1..same_p]` for within rows,
    /// `[1, same_1..same_p]` for between rows.
    pub stats: Vec<f64>,
    pub group: Group,
    pub blocks: (usize, usize),
}

/// The row for dyad `(i, j)`.
pub fn dyad_row(g: &Graph, x: &CovariateSet, z: &BlockAssignment, i: usize, j: usize) -> DyadRow {
    let group = if z.block(i) == z.block(j) {
        Group::Within
    } else {
        Group::Between
    };
    let mask = x.match_mask(i, j);
    let mut stats = vec![1.0];
    if group == Group::Within {
        let (two, tri) = local_counts(g, z, i, j);
        stats.extend([two as f64, tri as f64]);
    }
    stats.extend((0..x.p()).map(|s| ((mask >> s) & 1) as f64));
    DyadRow {
        response: g.has_edge(i, j),
        stats,
        group,
        blocks: (z.block(i), z.block(j)),
    }
}

/// Distinct dyad rows with frequency weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub group: Group,
    pub columns: Vec<String>,
    /// Row-major `rows × columns`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub weight: Vec<f64>,
    /// Added to every row's linear predictor.
    pub offset: f64,
    pub sampling: SamplingInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingInfo {
    pub kind: String,
    pub ratio: Option<usize>,
    /// Fraction of the group's non-edges kept.
    pub rate: f64,
    pub offset: f64,
    /// Dyads in the fit.
    pub dyads: u64,
    pub edges: u64,
    /// Dyads in the group before sampling.
    pub population: u64,
}

impl Design {
    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn nrows(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.ncols();
        &self.x[r * c..(r + 1) * c]
    }

    /// Total weight, the number of dyads represented.
    pub fn total_weight(&self) -> f64 {
        self.weight.iter().sum()
    }

    /// Builds a design from explicit rows (each with weight 1).
    pub fn from_rows(group: Group, columns: Vec<String>, rows: &[DyadRow]) -> Result<Design> {
        let c = columns.len();
        let mut x = Vec::with_capacity(rows.len() * c);
        for r in rows {
            if r.stats.len() != c {
                return Err(Error::LengthMismatch {
                    expected: c,
                    got: r.stats.len(),
                });
            }
            x.extend_from_slice(&r.stats);
        }
        let edges = rows.iter().filter(|r| r.response).count() as u64;
        Ok(Design {
            group,
            columns,
            x,
            y: rows.iter().map(|r| r.response as u8 as f64).collect(),
            weight: vec![1.0; rows.len()],
            offset: 0.0,
            sampling: SamplingInfo {
                kind: "all".into(),
                ratio: None,
                rate: 1.0,
                offset: 0.0,
                dyads: rows.len() as u64,
                edges,
                population: rows.len() as u64,
            },
        })
    }
}

/// Column names for a group.
pub fn column_names(group: Group, covariates: &[String], terms: Terms) -> Vec<String> {
    let mut cols = vec!["edges".to_string()];
    if group == Group::Within {
        if terms.two_stars {
            cols.push("two_stars".into());
        }
        if terms.triangles {
            cols.push("triangles".into());
        }
    }
    cols.extend(covariates.iter().map(|c| format!("same_{c}")));
    cols
}

/// `(response, two_stars, triangles, match mask)`.
type Key = (bool, u32, u32, u32);

fn key_for(
    g: &Graph,
    x: &CovariateSet,
    z: &BlockAssignment,
    i: usize,
    j: usize,
    within: bool,
) -> Key {
    let (two, tri) = if within {
        local_counts(g, z, i, j)
    } else {
        (0, 0)
    };
    (g.has_edge(i, j), two as u32, tri as u32, x.match_mask(i, j))
}

fn merge(mut a: HashMap<Key, u64>, b: HashMap<Key, u64>) -> HashMap<Key, u64> {
    if a.len() < b.len() {
        return merge(b, a);
    }
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

fn choose2(v: usize) -> u64 {
    (v as u64) * (v as u64).saturating_sub(1) / 2
}

/// Builds the aggregated design for one group.
pub fn build_design(
    g: &Graph,
    x: &CovariateSet,
    z: &BlockAssignment,
    group: Group,
    sampling: Sampling,
    terms: Terms,
    seed: u64,
) -> Result<Design> {
    let n = g.n();
    if z.n() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: z.n(),
        });
    }
    if x.p() > 0 && x.n() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: x.n(),
        });
    }
    let within = group == Group::Within;
    let members = z.members();
    let within_pairs: u64 = members.iter().map(|m| choose2(m.len())).sum();
    let population = if within {
        within_pairs
    } else {
        choose2(n) - within_pairs
    };
    let group_edges: Vec<(usize, usize)> = g
        .edges()
        .filter(|&(i, j)| (z.block(i) == z.block(j)) == within)
        .collect();
    let e = group_edges.len() as u64;
    let non_edges = population - e;

    let (counts, rate, kind, ratio) = match sampling.resolve(n) {
        Sampling::CaseControl { ratio } if (ratio as u64) * e * 2 <= non_edges && e > 0 => {
            let target = ratio as u64 * e;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let controls = sample_non_edges(g, z, &members, within, target as usize, &mut rng);
            let mut counts: HashMap<Key, u64> = HashMap::new();
            for &(i, j) in group_edges.iter().chain(&controls) {
                *counts.entry(key_for(g, x, z, i, j, within)).or_insert(0) += 1;
            }
            (
                counts,
                target as f64 / non_edges as f64,
                "case_control",
                Some(ratio),
            )
        }
        Sampling::CaseControl { ratio } => {
            log::info!(
                "{} group: case-control with ratio {ratio} would keep most non-edges; using all dyads",
                group.name()
            );
            (enumerate_all(g, x, z, &members, within), 1.0, "all", None)
        }
        _ => (enumerate_all(g, x, z, &members, within), 1.0, "all", None),
    };

    let columns = column_names(group, x.names(), terms);
    let mut keys: Vec<(Key, u64)> = counts.into_iter().collect();
    keys.sort_unstable();
    let ncols = columns.len();
    let mut xs = Vec::with_capacity(keys.len() * ncols);
    let mut y = Vec::with_capacity(keys.len());
    let mut weight = Vec::with_capacity(keys.len());
    let mut dyads = 0u64;
    for ((resp, two, tri, mask), w) in keys {
        xs.push(1.0);
        if within {
            if terms.two_stars {
                xs.push(two as f64);
            }
            if terms.triangles {
                xs.push(tri as f64);
            }
        }
        xs.extend((0..x.p()).map(|s| ((mask >> s) & 1) as f64));
        y.push(resp as u8 as f64);
        weight.push(w as f64);
        dyads += w;
    }
    let offset = -rate.ln();
    Ok(Design {
        group,
        columns,
        x: xs,
        y,
        weight,
        offset,
        sampling: SamplingInfo {
            kind: kind.into(),
            ratio,
            rate,
            offset,
            dyads,
            edges: e,
            population,
        },
    })
}

fn enumerate_all(
    g: &Graph,
    x: &CovariateSet,
    z: &BlockAssignment,
    members: &[Vec<usize>],
    within: bool,
) -> HashMap<Key, u64> {
    if within {
        let per_block: Vec<HashMap<Key, u64>> = par::map_collect(members.len(), |b| {
            let m = &members[b];
            let mut counts = HashMap::new();
            for (a, &i) in m.iter().enumerate() {
                for &j in &m[a + 1..] {
                    *counts.entry(key_for(g, x, z, i, j, true)).or_insert(0) += 1;
                }
            }
            counts
        });
        per_block.into_iter().fold(HashMap::new(), merge)
    } else {
        let n = g.n();
        par::fold_reduce(
            n,
            HashMap::new,
            |mut counts, i| {
                let bi = z.block(i);
                for j in i + 1..n {
                    if z.block(j) != bi {
                        *counts.entry(key_for(g, x, z, i, j, false)).or_insert(0) += 1;
                    }
                }
                counts
            },
            merge,
        )
    }
}

/// Distinct non-edges of the group by rejection sampling. Callers ensure
/// `target` is at most half of the available non-edges.
fn sample_non_edges(
    g: &Graph,
    z: &BlockAssignment,
    members: &[Vec<usize>],
    within: bool,
    target: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let n = g.n();
    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(target);
    let mut out = Vec::with_capacity(target);
    let blocks = if within {
        let w: Vec<f64> = members.iter().map(|m| choose2(m.len()) as f64).collect();
        Some(WeightedIndex::new(&w).expect("group has dyads"))
    } else {
        None
    };
    while out.len() < target {
        let (i, j) = match &blocks {
            Some(dist) => {
                let m = &members[dist.sample(rng)];
                let a = rng.random_range(0..m.len());
                let mut b = rng.random_range(0..m.len() - 1);
                if b >= a {
                    b += 1;
                }
                (m[a], m[b])
            }
            None => {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                if z.block(i) == z.block(j) {
                    continue;
                }
                (i, j)
            }
        };
        let pair = (i.min(j), i.max(j));
        if g.has_edge(pair.0, pair.1) || !seen.insert(pair) {
            continue;
        }
        out.push(pair);
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::from_edge_list([(0, 1), (1, 2), (0, 2)], 3).unwrap()
    }

    #[test]
    fn triangle_row() {
        let g = triangle();
        let r = dyad_row(
            &g,
            &CovariateSet::empty(3),
            &BlockAssignment::single(3),
            0,
            1,
        );
        assert!(r.response);
        assert_eq!(r.stats, vec![1.0, 2.0, 1.0]);
        assert_eq!(r.group, Group::Within);
    }

    #[test]
    fn singleton_blocks_are_between() {
        let g = triangle();
        let z = BlockAssignment::new(vec![0, 1, 2], 3).unwrap();
        let x = CovariateSet::from_columns(vec!["c".into()], vec![vec![0, 0, 1]]).unwrap();
        let r = dyad_row(&g, &x, &z, 0, 1);
        assert_eq!(r.group, Group::Between);
        assert_eq!(r.stats, vec![1.0, 1.0]);
    }

    #[test]
    fn full_enumeration_counts_every_dyad() {
        let n = 100;
        let z = BlockAssignment::new((0..n).map(|i| i % 3).collect(), 3).unwrap();
        let g = Graph::from_edge_list((0..n - 1).map(|i| (i, i + 1)), n).unwrap();
        let x = CovariateSet::empty(n);
        let w = build_design(
            &g,
            &x,
            &z,
            Group::Within,
            Sampling::All,
            Terms::default(),
            0,
        )
        .unwrap();
        let b = build_design(
            &g,
            &x,
            &z,
            Group::Between,
            Sampling::All,
            Terms::default(),
            0,
        )
        .unwrap();
        assert_eq!(
            w.total_weight() + b.total_weight(),
            (n * (n - 1) / 2) as f64
        );
        assert_eq!(w.sampling.edges + b.sampling.edges, g.m() as u64);
    }

    #[test]
    fn aggregation_matches_rows() {
        let g = Graph::from_edge_list([(0, 1), (1, 2), (2, 3), (0, 3), (3, 4)], 5).unwrap();
        let z = BlockAssignment::single(5);
        let x = CovariateSet::from_columns(vec!["c".into()], vec![vec![0, 1, 0, 1, 1]]).unwrap();
        let d = build_design(
            &g,
            &x,
            &z,
            Group::Within,
            Sampling::All,
            Terms::default(),
            0,
        )
        .unwrap();
        for r in 0..d.nrows() {
            let stats = d.row(r);
            let count = (0..5)
                .flat_map(|i| (i + 1..5).map(move |j| (i, j)))
                .map(|(i, j)| dyad_row(&g, &x, &z, i, j))
                .filter(|row| row.stats == stats && (row.response as u8 as f64) == d.y[r])
                .count();
            assert_eq!(count as f64, d.weight[r]);
        }
    }

    #[test]
    fn case_control_keeps_edges() {
        let n = 400;
        let g = Graph::from_edge_list((0..n - 1).map(|i| (i, i + 1)), n).unwrap();
        let z = BlockAssignment::new((0..n).map(|i| i / 200).collect(), 2).unwrap();
        let x = CovariateSet::empty(n);
        let d = build_design(
            &g,
            &x,
            &z,
            Group::Within,
            Sampling::CaseControl { ratio: 5 },
            Terms::default(),
            3,
        )
        .unwrap();
        let e = (n - 2) as u64;
        assert_eq!(d.sampling.edges, e);
        assert_eq!(d.sampling.dyads, 6 * e);
        let non_edges = 2 * choose2(200) - e;
        assert!((d.offset - (non_edges as f64 / (5 * e) as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn auto_resolution() {
        assert_eq!(Sampling::Auto.resolve(100), Sampling::All);
        assert_eq!(
            Sampling::Auto.resolve(30_000),
            Sampling::CaseControl { ratio: 5 }
        );
    }
}
