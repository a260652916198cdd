//! Small dense helpers shared by the frequency-domain modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub(crate) type CMatrix = DMatrix<Complex64>;
pub(crate) type CVector = DVector<Complex64>;

/// Largest absolute column sum.
pub(crate) fn norm1(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU solve with partial pivoting, also returning the reciprocal 1-norm
/// condition number. `None` when the factorization hits an exact zero pivot.
pub(crate) fn solve_with_rcond(a: &CMatrix, b: &CVector) -> Option<(CVector, f64)> {
    let lu = a.clone().lu();
    let inv = lu.try_inverse()?;
    let rcond = 1.0 / (norm1(a) * norm1(&inv));
    let x = lu.solve(b)?;
    if !rcond.is_finite() || x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Some((x, 0.0));
    }
    Some((x, rcond))
}

/// Number of singular values at or above `rel_tol * max`.
pub(crate) fn numerical_rank(singular_values: &[f64], rel_tol: f64) -> usize {
    let max = singular_values.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    singular_values
        .iter()
        .filter(|&&s| s >= rel_tol * max)
        .count()
}

pub(crate) fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

// Complex SVDs go through faer: the nalgebra SVD can return factors that do
// not reproduce a rank-deficient input.
fn svd_of(a: &CMatrix) -> Option<faer::linalg::solvers::Svd<Complex64>> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
        .thin_svd()
        .ok()
}

/// Singular values of a complex matrix, descending.
pub(crate) fn complex_singular_values(a: &CMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    svd_of(a).map_or_else(Vec::new, |svd| {
        let s = svd.S().column_vector();
        (0..s.nrows()).map(|i| s[i].re).collect()
    })
}

/// Minimum-norm solution of `A x ≈ b` on the singular directions with
/// `σ ≥ rel_floor·σ_max`, or `None` if none is kept.
pub(crate) fn truncated_pinv_solve(a: &CMatrix, b: &CVector, rel_floor: f64) -> Option<CVector> {
    if a.is_empty() {
        return None;
    }
    let svd = svd_of(a)?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let s_max = (0..s.nrows()).map(|i| s[i].re).fold(0.0, f64::max);
    let mut x = CVector::zeros(a.ncols());
    let mut kept = 0;
    for i in 0..s.nrows() {
        let si = s[i].re;
        if si <= 0.0 || si < rel_floor * s_max {
            continue;
        }
        kept += 1;
        let coef = (0..a.nrows())
            .map(|r| u[(r, i)].conj() * b[r])
            .sum::<Complex64>()
            / si;
        for r in 0..a.ncols() {
            x[r] += v[(r, i)] * coef;
        }
    }
    (kept > 0).then_some(x)
}

/// Thin SVD `A = U diag(σ) Vᵀ` of a real matrix, `σ` descending.
pub(crate) fn real_svd(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    if a.is_empty() {
        return None;
    }
    let svd = faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
        .thin_svd()
        .ok()?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    Some((
        DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
        DVector::from_fn(s.nrows(), |i, _| s[i]),
        DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
    ))
}
