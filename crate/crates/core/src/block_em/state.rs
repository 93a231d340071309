use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp applied to link probabilities before taking logs.
pub const PI_CLAMP: f64 = 1e-12;

/// Floor applied to variational probabilities after each update.
pub const XI_FLOOR: f64 = 1e-12;

/// Link probabilities `π_kl(d, χ)` for every block pair, link state `d` and
/// covariate-match pattern `χ ∈ {0,1}^p`.
///
/// Only `π(1, χ)` is stored; `π(0, χ) = 1 − π(1, χ)`. Patterns are bitmasks
/// with bit `s` set when covariate `s` matches. A dyad's full configuration
/// is encoded as `code = d | (χ << 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiTable {
    k: usize,
    p: usize,
    /// `link[χ]` is the row-major `K × K` matrix of `π(1, χ)`.
    link: Vec<Vec<f64>>,
}

impl PiTable {
    /// Every cell set to `value`.
    pub fn constant(k: usize, p: usize, value: f64) -> Self {
        PiTable {
            k,
            p,
            link: vec![vec![value; k * k]; 1 << p],
        }
    }

    pub(crate) fn from_link_matrices(k: usize, p: usize, mats: Vec<Array2<f64>>) -> Self {
        debug_assert_eq!(mats.len(), 1 << p);
        PiTable {
            k,
            p,
            link: mats
                .into_iter()
                .map(|m| m.as_standard_layout().iter().copied().collect())
                .collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of dyad configurations `2^{p+1}`.
    pub fn codes(&self) -> usize {
        2 << self.p
    }

    /// `π_kl(d, χ)`, unclamped.
    #[inline]
    pub fn prob(&self, d: bool, chi: u32, k: usize, l: usize) -> f64 {
        let v = self.link[chi as usize][k * self.k + l];
        if d {
            v
        } else {
            1.0 - v
        }
    }

    /// `π(1, χ)` as a `K × K` view.
    pub fn link_matrix(&self, chi: u32) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.k, self.k), &self.link[chi as usize]).expect("K×K storage")
    }

    /// Clamped `log π_kl(code)` for every configuration code.
    pub fn log_tables(&self) -> Vec<Array2<f64>> {
        (0..self.codes())
            .map(|code| {
                let d = code & 1 == 1;
                let chi = (code >> 1) as u32;
                Array2::from_shape_fn((self.k, self.k), |(a, b)| {
                    self.prob(d, chi, a, b).clamp(PI_CLAMP, 1.0 - PI_CLAMP).ln()
                })
            })
            .collect()
    }

    /// Number of cells outside `[PI_CLAMP, 1 − PI_CLAMP]`.
    pub fn clamped_cells(&self) -> usize {
        self.link
            .iter()
            .flatten()
            .filter(|&&v| !(PI_CLAMP..=1.0 - PI_CLAMP).contains(&v))
            .count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.link.len() != 1 << self.p || self.link.iter().any(|m| m.len() != self.k * self.k) {
            return Err(Error::InvalidInput("π table has the wrong shape".into()));
        }
        if self.link.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("π entries must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Variational parameters and the current parameter tables.
#[derive(Debug, Clone)]
pub struct VariationalState {
    /// `n × K`; row `i` is node `i`'s distribution over blocks.
    pub xi: Array2<f64>,
    pub eta: Vec<f64>,
    pub pi: PiTable,
    pub iteration: usize,
    pub trace: Vec<f64>,
}

impl VariationalState {
    pub fn n(&self) -> usize {
        self.xi.nrows()
    }

    pub fn k(&self) -> usize {
        self.xi.ncols()
    }

    /// One-hot rows for `labels`, with mass `eps` spread over the other
    /// blocks.
    pub fn smoothed_one_hot(labels: &[usize], k: usize, eps: f64) -> Array2<f64> {
        let mut xi = Array2::zeros((labels.len(), k));
        let off = if k > 1 { eps / (k - 1) as f64 } else { 0.0 };
        let on = if k > 1 { 1.0 - eps } else { 1.0 };
        for (i, &z) in labels.iter().enumerate() {
            xi.row_mut(i).fill(off);
            xi[[i, z]] = on;
        }
        xi
    }

    /// Checks that rows lie on the simplex and `η` is a distribution.
    pub fn validate(&self) -> Result<()> {
        if self.eta.len() != self.k() {
            return Err(Error::LengthMismatch {
                expected: self.k(),
                got: self.eta.len(),
            });
        }
        for (i, row) in self.xi.rows().into_iter().enumerate() {
            let s: f64 = row.sum();
            if row.iter().any(|&v| v < 0.0 || v.is_nan()) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "ξ row {i} is not on the simplex"
                )));
            }
        }
        self.pi.validate()
    }
}

/// Column means of `ξ`.
pub fn eta_from_xi(xi: &Array2<f64>) -> Vec<f64> {
    let n = xi.nrows().max(1) as f64;
    xi.sum_axis(ndarray::Axis(0))
        .iter()
        .map(|s| s / n)
        .collect()
}

/// Floors entries at [`XI_FLOOR`] and rescales to sum to one.
pub fn floor_and_normalize(row: &mut [f64]) {
    for v in row.iter_mut() {
        if *v < XI_FLOOR {
            *v = XI_FLOOR;
        }
    }
    let s: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothed_rows_sum_to_one() {
        let xi = VariationalState::smoothed_one_hot(&[0, 2, 1], 3, 1e-3);
        for r in xi.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-15);
        }
        assert_eq!(xi[[1, 2]], 1.0 - 1e-3);
        let one = VariationalState::smoothed_one_hot(&[0, 0], 1, 1e-3);
        assert!(one.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn complementary_probabilities() {
        let t = PiTable::constant(2, 1, 0.3);
        assert_eq!(t.codes(), 4);
        assert!((t.prob(false, 1, 0, 1) - 0.7).abs() < 1e-15);
        let logs = t.log_tables();
        assert!((logs[1][[1, 0]] - 0.3f64.ln()).abs() < 1e-15);
        assert!((logs[2][[1, 0]] - 0.7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logs_are_clamped() {
        let t = PiTable::constant(1, 0, 0.0);
        assert_eq!(t.clamped_cells(), 1);
        assert!((t.log_tables()[1][[0, 0]] - PI_CLAMP.ln()).abs() < 1e-12);
        assert!(t.log_tables()[0][[0, 0]] <= 0.0);
    }

    #[test]
    fn floor_renormalizes() {
        let mut r = [0.0, 1.0];
        floor_and_normalize(&mut r);
        assert!(r[0] > 0.0 && (r[0] + r[1] - 1.0).abs() < 1e-15);
    }
}
