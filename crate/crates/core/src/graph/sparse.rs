use ndarray::{Array2, ArrayView2};

use crate::par;

/// Square 0/1 matrix in compressed sparse row form with sorted column
/// indices. Used for the adjacency matrix and for feature adjacency
/// matrices; both are symmetric with zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBinary {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
}

impl SparseBinary {
    /// Builds from per-row column lists. Each row must be strictly increasing.
    pub(crate) fn from_sorted_rows<R: AsRef<[usize]>>(rows: &[R]) -> Self {
        let n = rows.len();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let total = rows.iter().map(|r| r.as_ref().len()).sum();
        let mut cols = Vec::with_capacity(total);
        for r in rows {
            let r = r.as_ref();
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            cols.extend_from_slice(r);
            offsets.push(cols.len());
        }
        SparseBinary { n, offsets, cols }
    }

    pub fn empty(n: usize) -> Self {
        SparseBinary {
            n,
            offsets: vec![0; n + 1],
            cols: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&j).is_ok()
    }

    /// Entry-wise product; the support is the row-wise intersection.
    pub fn hadamard(&self, other: &SparseBinary) -> SparseBinary {
        assert_eq!(self.n, other.n, "hadamard of matrices with different sizes");
        let rows = par::map_collect(self.n, |i| {
            let mut out = Vec::new();
            intersect_into(self.row(i), other.row(i), &mut out);
            out
        });
        SparseBinary::from_sorted_rows(&rows)
    }

    /// Dense product `self · x` for an `n × k` matrix `x`.
    pub fn mul_dense(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n);
        let k = x.ncols();
        let mut out = Array2::<f64>::zeros((self.n, k));
        let data = out.as_slice_mut().expect("fresh array is contiguous");
        par::for_each_row_mut(data, k, |i, acc| {
            for &j in self.row(i) {
                for (a, &v) in acc.iter_mut().zip(x.row(j).iter()) {
                    *a += v;
                }
            }
        });
        out
    }

    /// `xᵀ · self · x`, a `k × k` matrix, without forming `self · x` densely
    /// for more than one row at a time.
    pub fn quadratic_form(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let y = self.mul_dense(x);
        x.t().dot(&y)
    }
}

/// Appends the sorted intersection of two strictly increasing slices.
pub(crate) fn intersect_into(a: &[usize], b: &[usize], out: &mut Vec<usize>) {
    let (mut p, mut q) = (0, 0);
    while p < a.len() && q < b.len() {
        match a[p].cmp(&b[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[p]);
                p += 1;
                q += 1;
            }
        }
    }
}

/// Size of the sorted intersection, optionally filtered.
pub(crate) fn intersect_count<F: Fn(usize) -> bool>(a: &[usize], b: &[usize], keep: F) -> usize {
    let (mut p, mut q, mut c) = (0, 0, 0);
    while p < a.len() && q < b.len() {
        match a[p].cmp(&b[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                if keep(a[p]) {
                    c += 1;
                }
                p += 1;
                q += 1;
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hadamard_intersects_rows() {
        let a = SparseBinary::from_sorted_rows(&[vec![1, 2], vec![0, 2], vec![0, 1]]);
        let b = SparseBinary::from_sorted_rows(&[vec![1], vec![0], vec![]]);
        let h = a.hadamard(&b);
        assert_eq!(h.nnz(), 2);
        assert!(h.contains(0, 1) && h.contains(1, 0));
    }

    #[test]
    fn quadratic_form_matches_dense() {
        let a = SparseBinary::from_sorted_rows(&[vec![1], vec![0, 2], vec![1]]);
        let x = array![[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]];
        let q = a.quadratic_form(x.view());
        let dense = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        let expect = x.t().dot(&dense).dot(&x);
        assert!((&q - &expect).iter().all(|v| v.abs() < 1e-15));
    }
}
