use crate::error::{Error, Result};

/// Solution of a separable concave QP over the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Lagrange multiplier of the sum constraint.
    pub lambda: f64,
}

/// Maximizes `Σ_k a_k x_k² + b_k x_k` subject to `x ≥ 0`, `Σ x = 1`, for
/// `a_k < 0`.
///
/// Stationarity gives `x_k(λ) = max(0, (b_k − λ) / (−2a_k))`, which is
/// non-increasing in `λ`. The multiplier is bracketed and bisected until the
/// active set settles, then solved exactly on that set.
pub fn qp_simplex(a: &[f64], b: &[f64]) -> Result<QpSolution> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::LengthMismatch {
            expected: a.len().max(1),
            got: b.len(),
        });
    }
    if let Some(k) = a.iter().position(|&v| v >= 0.0 || v.is_nan()) {
        return Err(Error::Contract(format!(
            "quadratic coefficient a[{k}] = {} must be negative",
            a[k]
        )));
    }
    if b.iter().any(|v| !v.is_finite()) || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite QP coefficient".into()));
    }
    let k = a.len();
    if k == 1 {
        return Ok(QpSolution {
            x: vec![1.0],
            lambda: b[0] + 2.0 * a[0],
        });
    }

    let total = |lambda: f64| -> f64 {
        a.iter()
            .zip(b)
            .map(|(&ak, &bk)| ((bk - lambda) / (-2.0 * ak)).max(0.0))
            .sum()
    };
    // total(hi) = 0 and total(lo) ≥ 1
    let mut hi = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = a
        .iter()
        .zip(b)
        .map(|(&ak, &bk)| bk + 2.0 * ak)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut lambda = lo;
    for _ in 0..200 {
        lambda = 0.5 * (lo + hi);
        if total(lambda) > 1.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        if hi - lo <= 1e-14 * (1.0 + lambda.abs()) {
            break;
        }
    }

    // Exact multiplier on the active set, repeated while it changes.
    let mut active: Vec<bool> = b.iter().map(|&bk| bk > lambda).collect();
    for _ in 0..k {
        let (mut num, mut den) = (0.0, 0.0);
        for ((&ak, &bk), &on) in a.iter().zip(b).zip(&active) {
            if on {
                num += bk / (-2.0 * ak);
                den += 1.0 / (-2.0 * ak);
            }
        }
        if den == 0.0 {
            break;
        }
        let exact = (num - 1.0) / den;
        let next: Vec<bool> = b.iter().map(|&bk| bk > exact).collect();
        lambda = exact;
        if next == active {
            break;
        }
        active = next;
    }

    let mut x: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&ak, &bk)| ((bk - lambda) / (-2.0 * ak)).max(0.0))
        .collect();
    let s: f64 = x.iter().sum();
    if s <= 0.0 || !s.is_finite() {
        return Err(Error::Numerical(
            "QP over the simplex failed to converge".into(),
        ));
    }
    for v in x.iter_mut() {
        *v /= s;
    }
    Ok(QpSolution { x, lambda })
}

/// Largest violation of the KKT conditions, scaled per coordinate by
/// `|a_k|` so that badly conditioned rows are comparable.
pub fn kkt_residual(a: &[f64], b: &[f64], sol: &QpSolution) -> f64 {
    let mut r = (sol.x.iter().sum::<f64>() - 1.0).abs();
    for ((&ak, &bk), &xk) in a.iter().zip(b).zip(&sol.x) {
        r = r.max((-xk).max(0.0));
        // grad_k − λ must be 0 on the support and ≤ 0 off it
        let g = (2.0 * ak * xk + bk - sol.lambda) / (-2.0 * ak);
        let v = if xk > 0.0 { g.abs() } else { g.max(0.0) };
        r = r.max(v);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(a: &[f64], b: &[f64]) -> Vec<f64> {
        let s = qp_simplex(a, b).unwrap();
        assert!(kkt_residual(a, b, &s) <= 1e-10);
        s.x
    }

    #[test]
    fn symmetric() {
        let x = solve(&[-1.0, -1.0], &[0.0, 0.0]);
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interior() {
        let x = solve(&[-1.0, -1.0], &[1.0, 0.0]);
        assert!((x[0] - 0.75).abs() < 1e-12 && (x[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn clipped_to_vertex() {
        let x = solve(&[-1.0, -1.0], &[10.0, 0.0]);
        assert_eq!(x, vec![1.0, 0.0]);
    }

    #[test]
    fn single_block() {
        assert_eq!(solve(&[-3.0], &[2.0]), vec![1.0]);
    }

    #[test]
    fn nonnegative_quadratic_is_contract_error() {
        assert!(matches!(
            qp_simplex(&[-1.0, 0.0], &[0.0, 0.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn wide_scale() {
        let a = [-1e12, -2.0, -5e3, -1.0];
        let b = [30.0, -2.0, 1.0, 0.5];
        solve(&a, &b);
    }
}
