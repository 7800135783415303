//! Small dense kernels on top of nalgebra.

use nalgebra::{Complex, DMatrix, Schur, SymmetricEigen};

/// Largest real part among the eigenvalues of a square real matrix.
/// NaN if the Schur iteration fails to converge.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return f64::NEG_INFINITY;
    }
    // the unbounded general solver can cycle on highly repeated eigenvalues
    let scale = a.amax().max(f64::MIN_POSITIVE);
    if (a - a.transpose()).amax() <= 1e-14 * scale {
        return SymmetricEigen::new((a + a.transpose()) * 0.5).eigenvalues.max();
    }
    // deflation at machine epsilon can stall, so loosen step by step
    [1e-14, 1e-12, 1e-10]
        .iter()
        .find_map(|&eps| Schur::try_new(a.clone(), eps, 1000 * a.nrows().max(10)))
        .map_or(f64::NAN, |s| s.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    spectral_abscissa(a) < 0.0
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
}

/// Symmetric and positive definite (Cholesky succeeds).
pub fn is_spd(m: &DMatrix<f64>) -> bool {
    is_symmetric(m, 1e-10) && ((m + m.transpose()) * 0.5).cholesky().is_some()
}

/// Solves `A^T X + X A + Q = 0` through the Kronecker form. Intended for the
/// small systems handled here (n up to a few dozen).
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let mut big = DMatrix::<f64>::zeros(n * n, n * n);
    // column-major vec: vec(A^T X) = (I (x) A^T) vec X, vec(X A) = (A^T (x) I) vec X
    for blk in 0..n {
        for i in 0..n {
            for j in 0..n {
                big[(blk * n + i, blk * n + j)] += at[(i, j)];
            }
        }
    }
    for bi in 0..n {
        for bj in 0..n {
            let coef = at[(bi, bj)];
            if coef != 0.0 {
                for k in 0..n {
                    big[(bi * n + k, bj * n + k)] += coef;
                }
            }
        }
    }
    let rhs = -DMatrix::from_column_slice(n * n, 1, q.as_slice());
    let sol = big.lu().solve(&rhs)?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Some((&x + x.transpose()) * 0.5)
}

/// Largest singular value of a complex matrix.
pub fn max_singular_value(m: &DMatrix<Complex<f64>>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values()
        .iter()
        .copied()
        .fold(0.0_f64, f64::max)
}
