use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::design::{Design, SamplingInfo};
use crate::error::{Error, Result};

/// Converged when the largest score component is at most this.
pub const SCORE_TOL: f64 = 1e-8;

const MAX_ITERS: usize = 100;
const MAX_HALVINGS: usize = 60;
/// Coefficients beyond this magnitude signal separation.
const DIVERGENCE: f64 = 50.0;
/// Standard errors beyond this multiple of the coefficient signal separation.
const SEPARATION_SE: f64 = 100.0;
/// Relative pivot below which a column counts as dependent.
const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub se: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub log_pl: f64,
    pub bic: f64,
    /// Dyads in the fit, counting frequency weights.
    pub n_rows: u64,
    /// Distinct statistic patterns after aggregation.
    pub unique_rows: usize,
    pub iterations: usize,
    pub converged: bool,
    pub max_score: f64,
    pub sampling: SamplingInfo,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        let k = self.names.iter().position(|n| n == name)?;
        Some((self.coefficients[k], self.se[k]))
    }
}

#[inline]
fn log1p_exp(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

fn linear_predictor(d: &Design, beta: &[f64], r: usize) -> f64 {
    d.offset + d.row(r).iter().zip(beta).map(|(x, b)| x * b).sum::<f64>()
}

/// `ℓ_PL(β) = Σ w (y·η − log(1 + e^η))` with `η = offset + xβ`.
pub fn log_pseudolikelihood(d: &Design, beta: &[f64]) -> f64 {
    (0..d.nrows())
        .map(|r| {
            let eta = linear_predictor(d, beta, r);
            d.weight[r] * (d.y[r] * eta - log1p_exp(eta))
        })
        .sum()
}

/// Score `Σ w (y − μ) x` and Hessian `−Σ w μ(1−μ) x xᵀ`.
pub fn score_hessian(d: &Design, beta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let c = d.ncols();
    let mut score = DVector::zeros(c);
    let mut hess = DMatrix::zeros(c, c);
    for r in 0..d.nrows() {
        let mu = crate::model::logistic(linear_predictor(d, beta, r));
        let w = d.weight[r];
        let x = d.row(r);
        let res = w * (d.y[r] - mu);
        let v = w * mu * (1.0 - mu);
        for a in 0..c {
            score[a] += res * x[a];
            for b in 0..=a {
                hess[(a, b)] -= v * x[a] * x[b];
            }
        }
    }
    for a in 0..c {
        for b in 0..a {
            hess[(b, a)] = hess[(a, b)];
        }
    }
    (score, hess)
}

/// First column that is a linear combination of earlier ones, by pivoted
/// Cholesky of the weighted Gram matrix in column order.
fn dependent_column(d: &Design) -> Option<usize> {
    let c = d.ncols();
    let mut gram = DMatrix::<f64>::zeros(c, c);
    for r in 0..d.nrows() {
        let x = d.row(r);
        for a in 0..c {
            for b in 0..=a {
                gram[(a, b)] += d.weight[r] * x[a] * x[b];
            }
        }
    }
    let mut l = DMatrix::<f64>::zeros(c, c);
    for j in 0..c {
        let diag = gram[(j, j)];
        let mut pivot = diag;
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 0.0 || pivot <= PIVOT_TOL * diag {
            return Some(j);
        }
        let lj = pivot.sqrt();
        l[(j, j)] = lj;
        for i in j + 1..c {
            let mut s = gram[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / lj;
        }
    }
    None
}

/// Maximizes `ℓ_PL` by Newton-Raphson with step halving.
pub fn fit_logistic(d: &Design) -> Result<FitResult> {
    let c = d.ncols();
    if d.nrows() == 0 || d.total_weight() == 0.0 {
        return Err(Error::InvalidInput(format!(
            "{} group has no dyads",
            d.group.name()
        )));
    }
    let total = d.total_weight();
    let ones: f64 = d.y.iter().zip(&d.weight).map(|(y, w)| y * w).sum();
    if ones == 0.0 || ones == total {
        return Err(Error::Separation(format!(
            "{} group: every response is {}; the edges coefficient diverges",
            d.group.name(),
            if ones == 0.0 { 0 } else { 1 }
        )));
    }
    if let Some(j) = dependent_column(d) {
        return Err(Error::RankDeficient {
            column: format!("{}:{}", d.group.name(), d.columns[j]),
        });
    }

    let mut beta = vec![0.0; c];
    let mean = ones / total;
    beta[0] = (mean / (1.0 - mean)).ln() - d.offset;
    let mut ll = log_pseudolikelihood(d, &beta);
    let mut iterations = 0;
    let mut converged = false;
    let mut max_score = f64::INFINITY;

    while iterations < MAX_ITERS {
        let (score, hess) = score_hessian(d, &beta);
        max_score = score.amax();
        if max_score <= SCORE_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let info = -hess;
        let chol = info.cholesky().ok_or_else(|| {
            Error::Numerical(format!(
                "{} group: information matrix is not positive definite",
                d.group.name()
            ))
        })?;
        let step = chol.solve(&score);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + t * s)
                .collect();
            let cand_ll = log_pseudolikelihood(d, &cand);
            if cand_ll >= ll - 1e-12 * ll.abs() {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if let Some(k) = beta.iter().position(|b| b.abs() > DIVERGENCE) {
            return Err(Error::Separation(format!(
                "{} group: coefficient `{}` reached {:.1} and keeps growing",
                d.group.name(),
                d.columns[k],
                beta[k]
            )));
        }
        if !accepted {
            // at the floating-point optimum the score cannot shrink further
            let (s, _) = score_hessian(d, &beta);
            max_score = s.amax();
            converged = max_score <= SCORE_TOL * total.max(1.0);
            if converged {
                log::debug!(
                    "{} group: stopped at score {max_score:.2e} after {iterations} iterations",
                    d.group.name()
                );
            }
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "{} group: Newton-Raphson did not converge (max score {max_score:.3e})",
            d.group.name()
        )));
    }

    let (_, hess) = score_hessian(d, &beta);
    let cov = (-hess)
        .cholesky()
        .ok_or_else(|| Error::Numerical("information matrix is singular at the optimum".into()))?
        .inverse();
    let se: Vec<f64> = (0..c).map(|k| cov[(k, k)].sqrt()).collect();
    // Under separation the score vanishes exponentially fast while the
    // information in the separating direction collapses.
    if let Some(k) =
        (0..c).find(|&k| se[k] > SEPARATION_SE * beta[k].abs().max(1.0) || se[k].is_nan())
    {
        return Err(Error::Separation(format!(
            "{} group: coefficient `{}` = {:.2} has standard error {:.2e}",
            d.group.name(),
            d.columns[k],
            beta[k],
            se[k]
        )));
    }
    let z_scores = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let n_rows = total.round() as u64;
    Ok(FitResult {
        names: d.columns.clone(),
        coefficients: beta,
        se,
        z_scores,
        log_pl: ll,
        bic: -2.0 * ll + c as f64 * (n_rows as f64).ln(),
        n_rows,
        unique_rows: d.nrows(),
        iterations,
        converged,
        max_score,
        sampling: d.sampling.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mple::design::{DyadRow, Group};

    fn rows(data: &[(bool, Vec<f64>)]) -> Vec<DyadRow> {
        data.iter()
            .map(|(y, s)| DyadRow {
                response: *y,
                stats: s.clone(),
                group: Group::Between,
                blocks: (0, 1),
            })
            .collect()
    }

    #[test]
    fn intercept_only() {
        let r = rows(&[
            (true, vec![1.0]),
            (false, vec![1.0]),
            (false, vec![1.0]),
            (false, vec![1.0]),
        ]);
        let d = Design::from_rows(Group::Between, vec!["edges".into()], &r).unwrap();
        let f = fit_logistic(&d).unwrap();
        assert!((f.coefficients[0] - (-1.0986122886681098)).abs() < 1e-10);
        assert!(f.max_score <= SCORE_TOL);
        let bic = -2.0 * f.log_pl + 4f64.ln();
        assert!((f.bic - bic).abs() < 1e-12);
    }

    #[test]
    fn all_zero_is_separation() {
        let r = rows(&[(false, vec![1.0]), (false, vec![1.0])]);
        let d = Design::from_rows(Group::Between, vec!["edges".into()], &r).unwrap();
        assert!(matches!(fit_logistic(&d), Err(Error::Separation(_))));
    }

    #[test]
    fn perfect_predictor_is_separation() {
        let r = rows(&[
            (true, vec![1.0, 1.0]),
            (true, vec![1.0, 1.0]),
            (false, vec![1.0, 0.0]),
            (false, vec![1.0, 0.0]),
        ]);
        let d =
            Design::from_rows(Group::Between, vec!["edges".into(), "same_a".into()], &r).unwrap();
        assert!(matches!(fit_logistic(&d), Err(Error::Separation(_))));
    }

    #[test]
    fn duplicated_column_is_named() {
        let r = rows(&[
            (true, vec![1.0, 1.0, 1.0]),
            (false, vec![1.0, 0.0, 0.0]),
            (true, vec![1.0, 0.0, 0.0]),
            (false, vec![1.0, 1.0, 1.0]),
        ]);
        let cols = vec!["edges".into(), "same_a".into(), "same_b".into()];
        let d = Design::from_rows(Group::Between, cols, &r).unwrap();
        match fit_logistic(&d).unwrap_err() {
            Error::RankDeficient { column } => assert_eq!(column, "between:same_b"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn saturated_two_cell_model() {
        // cells: same=0 has 1/4 linked, same=1 has 2/3 linked
        let mut data = vec![(true, vec![1.0, 0.0])];
        data.extend(std::iter::repeat_n((false, vec![1.0, 0.0]), 3));
        data.extend(std::iter::repeat_n((true, vec![1.0, 1.0]), 2));
        data.push((false, vec![1.0, 1.0]));
        let d = Design::from_rows(
            Group::Between,
            vec!["edges".into(), "same_a".into()],
            &rows(&data),
        )
        .unwrap();
        let f = fit_logistic(&d).unwrap();
        let l0 = (0.25f64 / 0.75).ln();
        let l1 = 2f64.ln();
        assert!((f.coefficients[0] - l0).abs() < 1e-9);
        assert!((f.coefficients[1] - (l1 - l0)).abs() < 1e-9);
    }
}
