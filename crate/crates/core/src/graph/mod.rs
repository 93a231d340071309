//! Sparse undirected graphs, discrete node covariates and feature adjacency
//! matrices.
//!
//! Nodes are dense `0..n` indices. Callers with arbitrary external ids map
//! them at ingestion time (see the CLI loaders).

mod covariates;
mod sparse;

pub use covariates::{CovariateSet, FeatureAdjacency};
pub(crate) use sparse::intersect_count;
pub use sparse::SparseBinary;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::BlockAssignment;
use crate::par;

/// Read access to a simple undirected graph with sorted neighbor lists.
pub trait Adjacency {
    fn node_count(&self) -> usize;

    /// Sorted neighbors of `i`.
    fn neighbors(&self, i: usize) -> &[usize];

    fn edge_count(&self) -> usize;

    #[inline]
    fn degree(&self, i: usize) -> usize {
        self.neighbors(i).len()
    }

    #[inline]
    fn has_edge(&self, i: usize, j: usize) -> bool {
        let (a, b) = if self.degree(i) <= self.degree(j) {
            (i, j)
        } else {
            (j, i)
        };
        self.neighbors(a).binary_search(&b).is_ok()
    }
}

/// Immutable simple undirected graph.
///
/// Stored once as a symmetric CSR matrix; row `i` is the sorted neighbor
/// list of `i`, so the same storage serves neighbor intersections and sparse
/// matrix products.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: SparseBinary,
    m: usize,
}

impl Graph {
    /// Builds a graph from node pairs. Duplicate pairs (in either
    /// orientation) collapse to one edge and self-loops are dropped.
    pub fn from_edge_list<I>(pairs: I, n: usize) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (a, b) in pairs {
            for id in [a, b] {
                if id >= n {
                    return Err(Error::NodeOutOfRange { id, n });
                }
            }
            if a == b {
                continue;
            }
            rows[a].push(b);
            rows[b].push(a);
        }
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
        }
        let adj = SparseBinary::from_sorted_rows(&rows);
        let m = adj.nnz() / 2;
        Ok(Graph { adj, m })
    }

    pub fn empty(n: usize) -> Graph {
        Graph {
            adj: SparseBinary::empty(n),
            m: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.adj.dim()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// The adjacency matrix.
    pub fn matrix(&self) -> &SparseBinary {
        &self.adj
    }

    /// Edges as `(i, j)` with `i < j`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.adj
                .row(i)
                .iter()
                .copied()
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    pub fn to_dynamic(&self) -> DynamicGraph {
        DynamicGraph {
            rows: (0..self.n()).map(|i| self.adj.row(i).to_vec()).collect(),
            m: self.m,
        }
    }

    /// Density, degree histogram, two-star and triangle counts.
    pub fn stats(&self) -> GraphStats {
        graph_stats(self)
    }

    /// `|N(i) ∩ N(j)|`, optionally restricted to common neighbors in
    /// `block` under the given assignment.
    pub fn common_neighbors(
        &self,
        i: usize,
        j: usize,
        restrict: Option<(&BlockAssignment, usize)>,
    ) -> usize {
        common_neighbors(self, i, j, restrict)
    }
}

impl Adjacency for Graph {
    #[inline]
    fn node_count(&self) -> usize {
        self.adj.dim()
    }
    #[inline]
    fn neighbors(&self, i: usize) -> &[usize] {
        self.adj.row(i)
    }
    #[inline]
    fn edge_count(&self) -> usize {
        self.m
    }
}

/// Mutable graph used by the simulator. Neighbor lists stay sorted, so
/// toggling a dyad costs O(deg).
#[derive(Debug, Clone, Default)]
pub struct DynamicGraph {
    rows: Vec<Vec<usize>>,
    m: usize,
}

impl DynamicGraph {
    pub fn empty(n: usize) -> Self {
        DynamicGraph {
            rows: vec![Vec::new(); n],
            m: 0,
        }
    }

    /// Sets `g_ij` and returns whether the graph changed.
    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) -> bool {
        debug_assert!(i != j);
        let changed = match (self.rows[i].binary_search(&j), present) {
            (Err(pos), true) => {
                self.rows[i].insert(pos, j);
                true
            }
            (Ok(pos), false) => {
                self.rows[i].remove(pos);
                true
            }
            _ => false,
        };
        if changed {
            match self.rows[j].binary_search(&i) {
                Err(pos) => self.rows[j].insert(pos, i),
                Ok(pos) => {
                    self.rows[j].remove(pos);
                }
            }
            if present {
                self.m += 1;
            } else {
                self.m -= 1;
            }
        }
        changed
    }

    pub fn freeze(&self) -> Graph {
        let adj = SparseBinary::from_sorted_rows(&self.rows);
        Graph { adj, m: self.m }
    }
}

impl Adjacency for DynamicGraph {
    #[inline]
    fn node_count(&self) -> usize {
        self.rows.len()
    }
    #[inline]
    fn neighbors(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }
    #[inline]
    fn edge_count(&self) -> usize {
        self.m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub n: usize,
    pub m: usize,
    /// `m / (n(n-1)/2)`; zero for graphs with fewer than two nodes.
    pub density: f64,
    /// `degree_histogram[d]` is the number of nodes with degree `d`.
    pub degree_histogram: Vec<usize>,
    pub two_stars: u64,
    pub triangles: u64,
}

/// Edge density of `m` edges on `n` nodes.
pub fn density(n: usize, m: usize) -> f64 {
    let pairs = n as f64 * (n as f64 - 1.0) / 2.0;
    if pairs > 0.0 {
        m as f64 / pairs
    } else {
        0.0
    }
}

pub fn graph_stats<G: Adjacency + Sync>(g: &G) -> GraphStats {
    let n = g.node_count();
    let max_deg = (0..n).map(|i| g.degree(i)).max().unwrap_or(0);
    let mut degree_histogram = vec![0usize; max_deg + 1];
    let mut two_stars = 0u64;
    for i in 0..n {
        let d = g.degree(i);
        degree_histogram[d] += 1;
        two_stars += (d as u64) * (d as u64).saturating_sub(1) / 2;
    }
    if n == 0 {
        degree_histogram.clear();
    }
    // Each triangle u < v < w is counted once, from its smallest vertex.
    let triangles = par::fold_reduce(
        n,
        || 0u64,
        |acc, u| {
            let nu = g.neighbors(u);
            let mut c = 0u64;
            for &v in nu.iter().filter(|&&v| v > u) {
                c += intersect_count(nu, g.neighbors(v), |w| w > v) as u64;
            }
            acc + c
        },
        |a, b| a + b,
    );
    GraphStats {
        n,
        m: g.edge_count(),
        density: density(n, g.edge_count()),
        degree_histogram,
        two_stars,
        triangles,
    }
}

pub fn common_neighbors<G: Adjacency + ?Sized>(
    g: &G,
    i: usize,
    j: usize,
    restrict: Option<(&BlockAssignment, usize)>,
) -> usize {
    match restrict {
        None => intersect_count(g.neighbors(i), g.neighbors(j), |_| true),
        Some((z, k)) => intersect_count(g.neighbors(i), g.neighbors(j), |r| z.block(r) == k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::from_edge_list([(0, 1), (1, 2), (0, 2)], 3).unwrap()
    }

    fn path() -> Graph {
        Graph::from_edge_list([(0, 1), (1, 2)], 3).unwrap()
    }

    #[test]
    fn dedup_and_self_loops() {
        let g = Graph::from_edge_list([(0, 1), (1, 0), (2, 2)], 3).unwrap();
        assert_eq!(g.m(), 1);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(g.degree(2), 0);
    }

    #[test]
    fn empty_edge_list() {
        let g = Graph::from_edge_list(std::iter::empty(), 5).unwrap();
        assert_eq!(g.n(), 5);
        assert_eq!(g.m(), 0);
        let s = g.stats();
        assert_eq!((s.two_stars, s.triangles, s.density), (0, 0, 0.0));
        assert_eq!(s.degree_histogram, vec![5]);
    }

    #[test]
    fn triangle_degrees_and_stats() {
        let g = triangle();
        assert_eq!(g.m(), 3);
        assert!((0..3).all(|i| g.degree(i) == 2));
        let s = g.stats();
        assert_eq!(s.two_stars, 3);
        assert_eq!(s.triangles, 1);
        assert_eq!(s.density, 1.0);
    }

    #[test]
    fn path_stats() {
        let s = path().stats();
        assert_eq!((s.two_stars, s.triangles), (1, 0));
    }

    #[test]
    fn out_of_range_is_rejected() {
        let err = Graph::from_edge_list([(0, 3)], 3).unwrap_err();
        assert!(matches!(err, Error::NodeOutOfRange { id: 3, n: 3 }));
    }

    #[test]
    fn density_of_reported_network() {
        let d = density(242_223, 682_920);
        assert!((d - 2.3e-5).abs() < 0.05e-5, "{d}");
    }

    #[test]
    fn common_neighbor_counts() {
        assert_eq!(triangle().common_neighbors(0, 1, None), 1);
        assert_eq!(path().common_neighbors(0, 2, None), 1);
        let star = Graph::from_edge_list((1..5).map(|l| (0, l)), 5).unwrap();
        assert_eq!(star.common_neighbors(1, 2, None), 1);

        let z = BlockAssignment::new(vec![0, 1, 0], 2).unwrap();
        assert_eq!(path().common_neighbors(0, 2, Some((&z, 1))), 1);
        assert_eq!(path().common_neighbors(0, 2, Some((&z, 0))), 0);
    }

    #[test]
    fn dynamic_graph_toggles() {
        let mut d = DynamicGraph::empty(4);
        assert!(d.set_edge(0, 2, true));
        assert!(!d.set_edge(2, 0, true));
        assert!(d.set_edge(3, 2, true));
        assert_eq!(d.edge_count(), 2);
        assert!(d.set_edge(0, 2, false));
        assert_eq!(d.freeze(), Graph::from_edge_list([(2, 3)], 4).unwrap());
    }
}
