use std::collections::HashMap;
use std::sync::OnceLock;

use super::SparseBinary;
use crate::error::{Error, Result};

/// Per-node discrete covariates.
///
/// Category values are opaque; they are interned to dense ids per covariate.
/// An inverted index (category → sorted node list) backs the construction of
/// feature adjacency matrices, which are built on first use and cached.
#[derive(Debug, Default)]
pub struct CovariateSet {
    n: usize,
    names: Vec<String>,
    /// `columns[s][i]` is the category id of node `i` on covariate `s`.
    columns: Vec<Vec<u32>>,
    /// `members[s][c]` is the sorted list of nodes with category `c`.
    members: Vec<Vec<Vec<usize>>>,
    cache: Vec<OnceLock<FeatureAdjacency>>,
}

impl Clone for CovariateSet {
    fn clone(&self) -> Self {
        CovariateSet::from_ids(self.n, self.names.clone(), self.columns.clone())
    }
}

/// Sparse symmetric 0/1 matrix `X_s` with `X_s[i,j] = 1` iff nodes `i != j`
/// share their value on covariate `s`.
#[derive(Debug, Clone)]
pub struct FeatureAdjacency {
    pub covariate: usize,
    pub matrix: SparseBinary,
}

impl FeatureAdjacency {
    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }
}

impl CovariateSet {
    /// A set with no covariates on `n` nodes.
    pub fn empty(n: usize) -> Self {
        CovariateSet {
            n,
            ..Default::default()
        }
    }

    /// Builds from columns of arbitrary category ids.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<u32>>) -> Result<Self> {
        let n = check_shape(&names, &columns)?;
        let interned = columns
            .iter()
            .map(|col| intern(col.iter().copied()))
            .collect();
        Ok(CovariateSet::from_ids(n, names, interned))
    }

    /// Builds from string-valued columns. Categories with fewer than
    /// `pool_below` members are merged into one shared category when set.
    pub fn from_string_columns(
        names: Vec<String>,
        columns: Vec<Vec<String>>,
        pool_below: Option<usize>,
    ) -> Result<Self> {
        let n = check_shape(&names, &columns)?;
        for (s, col) in columns.iter().enumerate() {
            if let Some(i) = col.iter().position(|v| v.trim().is_empty()) {
                return Err(Error::InvalidInput(format!(
                    "covariate `{}` is missing for node {i}",
                    names[s]
                )));
            }
        }
        let interned = columns
            .iter()
            .map(|col| {
                let ids = intern(col.iter().map(String::as_str));
                match pool_below {
                    Some(t) if t > 1 => pool_rare(ids, t),
                    _ => ids,
                }
            })
            .collect();
        Ok(CovariateSet::from_ids(n, names, interned))
    }

    /// `columns` must already hold dense ids `0..categories`.
    fn from_ids(n: usize, names: Vec<String>, columns: Vec<Vec<u32>>) -> Self {
        let members = columns
            .iter()
            .map(|col| {
                let cats = col.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
                let mut m = vec![Vec::new(); cats];
                for (i, &c) in col.iter().enumerate() {
                    m[c as usize].push(i);
                }
                m
            })
            .collect();
        let cache = (0..columns.len()).map(|_| OnceLock::new()).collect();
        CovariateSet {
            n,
            names,
            columns,
            members,
            cache,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of covariates.
    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    #[inline]
    pub fn value(&self, i: usize, s: usize) -> u32 {
        self.columns[s][i]
    }

    pub fn column(&self, s: usize) -> &[u32] {
        &self.columns[s]
    }

    pub fn category_count(&self, s: usize) -> usize {
        self.members[s].len()
    }

    /// `f_s(x_i, x_j) = 1{x_is = x_js}`.
    #[inline]
    pub fn same(&self, i: usize, j: usize, s: usize) -> bool {
        self.columns[s][i] == self.columns[s][j]
    }

    /// Bitmask with bit `s` set iff `i` and `j` share covariate `s`.
    #[inline]
    pub fn match_mask(&self, i: usize, j: usize) -> u32 {
        let mut mask = 0;
        for (s, col) in self.columns.iter().enumerate() {
            if col[i] == col[j] {
                mask |= 1 << s;
            }
        }
        mask
    }

    /// Restriction to the named covariates, in the given order.
    pub fn select(&self, names: &[String]) -> Result<CovariateSet> {
        let mut missing = Vec::new();
        let mut cols = Vec::new();
        for name in names {
            match self.index_of(name) {
                Some(s) => cols.push(self.columns[s].clone()),
                None => missing.push(name.as_str()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::InvalidInput(format!(
                "unknown covariate(s): {}",
                missing.join(", ")
            )));
        }
        Ok(CovariateSet::from_ids(self.n, names.to_vec(), cols))
    }

    /// Non-zeros `X_s` would have: `Σ_v c_v (c_v - 1)` over category sizes.
    pub fn feature_nnz(&self, s: usize) -> usize {
        self.members[s]
            .iter()
            .map(|m| m.len() * m.len().saturating_sub(1))
            .sum()
    }

    /// The feature adjacency matrix of covariate `s`, built on first use.
    ///
    /// Fails without allocating if the matrix would have more than `budget`
    /// non-zeros.
    pub fn feature_adjacency(&self, s: usize, budget: usize) -> Result<&FeatureAdjacency> {
        if s >= self.p() {
            return Err(Error::InvalidInput(format!(
                "covariate index {s} out of range (p = {})",
                self.p()
            )));
        }
        if let Some(f) = self.cache[s].get() {
            return Ok(f);
        }
        let nnz = self.feature_nnz(s);
        if nnz > budget {
            return Err(Error::SparsityBudget {
                covariate: self.names[s].clone(),
                nnz,
                budget,
            });
        }
        let col = &self.columns[s];
        let rows: Vec<Vec<usize>> = (0..self.n)
            .map(|i| {
                let group = &self.members[s][col[i] as usize];
                // singleton categories contribute nothing
                if group.len() < 2 {
                    return Vec::new();
                }
                group.iter().copied().filter(|&j| j != i).collect()
            })
            .collect();
        let built = FeatureAdjacency {
            covariate: s,
            matrix: SparseBinary::from_sorted_rows(&rows),
        };
        Ok(self.cache[s].get_or_init(|| built))
    }
}

fn check_shape<T>(names: &[String], columns: &[Vec<T>]) -> Result<usize> {
    if names.len() != columns.len() {
        return Err(Error::LengthMismatch {
            expected: names.len(),
            got: columns.len(),
        });
    }
    let n = columns.first().map_or(0, Vec::len);
    if let Some(bad) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            got: bad.len(),
        });
    }
    Ok(n)
}

fn intern<K: std::hash::Hash + Eq, I: IntoIterator<Item = K>>(values: I) -> Vec<u32> {
    let mut ids: HashMap<K, u32> = HashMap::new();
    values
        .into_iter()
        .map(|v| {
            let next = ids.len() as u32;
            *ids.entry(v).or_insert(next)
        })
        .collect()
}

fn pool_rare(ids: Vec<u32>, threshold: usize) -> Vec<u32> {
    let cats = ids.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut counts = vec![0usize; cats];
    for &c in &ids {
        counts[c as usize] += 1;
    }
    let pooled = u32::MAX;
    let remapped = ids.into_iter().map(|c| {
        if counts[c as usize] < threshold {
            pooled
        } else {
            c
        }
    });
    intern(remapped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_column(values: &[&str]) -> CovariateSet {
        CovariateSet::from_string_columns(
            vec!["c".into()],
            vec![values.iter().map(|s| s.to_string()).collect()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn shared_pair_only() {
        let x = one_column(&["a", "a", "b"]);
        let f = x.feature_adjacency(0, 100).unwrap();
        assert_eq!(f.nnz(), 2);
        assert!(f.matrix.contains(0, 1) && f.matrix.contains(1, 0));
        assert!(!f.matrix.contains(0, 0));
    }

    #[test]
    fn all_distinct_is_empty() {
        let x = one_column(&["a", "b", "c", "d"]);
        assert_eq!(x.feature_adjacency(0, 100).unwrap().nnz(), 0);
    }

    #[test]
    fn all_equal_is_complete() {
        let x = one_column(&["a", "a", "a", "a"]);
        let f = x.feature_adjacency(0, 100).unwrap();
        assert_eq!(f.nnz(), 12);
        assert_eq!(x.feature_nnz(0), 12);
    }

    #[test]
    fn budget_names_the_covariate() {
        let x = one_column(&["a", "a", "a", "a"]);
        match x.feature_adjacency(0, 11).unwrap_err() {
            Error::SparsityBudget {
                covariate,
                nnz,
                budget,
            } => assert_eq!((covariate.as_str(), nnz, budget), ("c", 12, 11)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_value_rejected() {
        let err = CovariateSet::from_string_columns(
            vec!["c".into()],
            vec![vec!["a".into(), "".into()]],
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn pooling_merges_rare_categories() {
        let x = CovariateSet::from_string_columns(
            vec!["c".into()],
            vec![["a", "a", "b", "c", "d"]
                .iter()
                .map(|s| s.to_string())
                .collect()],
            Some(2),
        )
        .unwrap();
        assert_eq!(x.category_count(0), 2);
        assert!(x.same(2, 4, 0));
        assert!(!x.same(0, 2, 0));
    }

    #[test]
    fn match_mask_bits() {
        let x = CovariateSet::from_columns(
            vec!["a".into(), "b".into()],
            vec![vec![1, 1, 2], vec![7, 8, 8]],
        )
        .unwrap();
        assert_eq!(x.match_mask(0, 1), 0b01);
        assert_eq!(x.match_mask(1, 2), 0b10);
        assert_eq!(x.match_mask(0, 2), 0);
    }
}
