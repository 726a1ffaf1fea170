//! Matrix-free conjugate residual iteration for symmetric systems.

use crate::error::{Error, Result};

/// Outcome of a linear solve.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final `‖b - Ax‖ / ‖b‖`.
    pub relative_residual: f64,
    /// Relative residual after every iteration, starting with the initial guess.
    #[serde(skip)]
    pub history: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric `A`, starting from the contents of `x`.
///
/// Conjugate residuals minimise `‖b - Ax‖` over the Krylov space, so the
/// residual norm never increases from one iteration to the next.
pub fn conjugate_residual(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rel = dot(&r, &r).sqrt() / scale;
    let mut history = vec![rel];
    if rel <= tol {
        return Ok(SolveReport { iterations: 0, relative_residual: rel, history });
    }
    let mut ar = vec![0.0; n];
    apply(&r, &mut ar);
    let mut p = r.clone();
    let mut ap = ar.clone();
    let mut r_ar = dot(&r, &ar);
    for it in 1..=max_iter {
        let ap2 = dot(&ap, &ap);
        if ap2 == 0.0 || !r_ar.is_finite() {
            break;
        }
        let alpha = r_ar / ap2;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / scale;
        history.push(rel);
        if !rel.is_finite() {
            return Err(Error::Numerical("non-finite residual in linear solve".into()));
        }
        if rel <= tol {
            return Ok(SolveReport { iterations: it, relative_residual: rel, history });
        }
        apply(&r, &mut ar);
        let next = dot(&r, &ar);
        let beta = next / r_ar;
        r_ar = next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
            ap[i] = ar[i] + beta * ap[i];
        }
    }
    Err(Error::SolverDivergence { iterations: history.len() - 1, residual: rel })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            out[i] = 3.0 * x[i] - l - r;
        }
    }

    #[test]
    fn solves_spd_tridiagonal() {
        let n = 50;
        let want: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        tridiag(&want, &mut b);
        let mut x = vec![0.0; n];
        let rep = conjugate_residual(tridiag, &b, &mut x, 1e-12, 200).unwrap();
        assert!(rep.iterations <= n);
        for i in 0..n {
            assert!((x[i] - want[i]).abs() < 1e-10);
        }
        assert!(rep.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn reports_divergence_when_capped() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut x = vec![0.0; n];
        let err = conjugate_residual(tridiag, &b, &mut x, 1e-14, 2).unwrap_err();
        assert!(matches!(err, Error::SolverDivergence { iterations: 2, .. }));
    }

    #[test]
    fn exact_initial_guess_needs_no_iterations() {
        let b = vec![1.0; 8];
        let mut x = b.clone();
        let rep = conjugate_residual(|v, o| o.copy_from_slice(v), &b, &mut x, 1e-8, 10).unwrap();
        assert_eq!(rep.iterations, 0);
    }
}
