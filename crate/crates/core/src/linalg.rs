//! Dense complex linear algebra shared by the whole crate.
//!
//! Everything is a [`faer`] matrix over `Complex<f64>`. This module owns the
//! thin wrappers the domain types need — conjugate transpose, traces, Kronecker
//! products, eigendecompositions (Hermitian and general non-normal), inversion
//! — and the column-stacking vectorization `vec(X)[i + d·j] = X[i,j]` that
//! fixes this crate's single superoperator representation convention:
//! `vec(AXB) = (Bᵀ ⊗ A) vec(X)`.

use faer::linalg::solvers::{DenseSolveCore, Eigen, SelfAdjointEigen};
use faer::{Col, Mat, Side};
use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar used everywhere.
pub type C64 = Complex64;
/// Dense complex matrix.
pub type CMat = Mat<C64>;
/// Dense complex column vector.
pub type CCol = Col<C64>;

/// Errors from the dense solvers.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// The underlying eigensolver did not converge; never surfaced as NaN.
    #[error("eigendecomposition failed to converge (dim {dim})")]
    EigFailed { dim: usize },
    /// Singular-value computation failed.
    #[error("singular value decomposition failed (dim {rows}x{cols})")]
    SvdFailed { rows: usize, cols: usize },
}

/// Complex number from real and imaginary parts.
#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Real number as a complex scalar.
#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// The n×n identity matrix.
pub fn eye(n: usize) -> CMat {
    Mat::identity(n, n)
}

/// Conjugate transpose.
pub fn dagger(m: &CMat) -> CMat {
    m.adjoint().to_owned()
}

/// Matrix trace.
pub fn trace(m: &CMat) -> C64 {
    let mut t = C64::ZERO;
    for i in 0..m.nrows().min(m.ncols()) {
        t += m[(i, i)];
    }
    t
}

/// Hilbert–Schmidt inner product `⟨A,B⟩ = Tr(A†B)`.
pub fn hs_inner(a: &CMat, b: &CMat) -> C64 {
    let mut t = C64::ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            t += a[(i, j)].conj() * b[(i, j)];
        }
    }
    t
}

/// Scale a matrix by a complex factor.
pub fn scale(f: C64, m: &CMat) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| f * m[(i, j)])
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let mut dst = Mat::zeros(a.nrows() * b.nrows(), a.ncols() * b.ncols());
    faer::linalg::kron::kron(dst.as_mut(), a.as_ref(), b.as_ref());
    dst
}

/// Hermitian part `(M + M†)/2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    let n = m.nrows();
    Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()))
}

/// Anti-Hermitian part mapped to a Hermitian matrix: `(M − M†)/(2i)`.
pub fn antihermitian_part(m: &CMat) -> CMat {
    let n = m.nrows();
    let half_over_i = c(0.0, -0.5);
    Mat::from_fn(n, n, |i, j| half_over_i * (m[(i, j)] - m[(j, i)].conj()))
}

/// Largest entrywise deviation from conjugate symmetry.
pub fn hermiticity_residual(m: &CMat) -> f64 {
    let mut r: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            r = r.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    r
}

/// Column-stacking vectorization: `vec(X)[i + d·j] = X[i,j]`.
pub fn vec_of(m: &CMat) -> CCol {
    let (r, c_) = (m.nrows(), m.ncols());
    Col::from_fn(r * c_, |k| m[(k % r, k / r)])
}

/// Inverse of [`vec_of`] for an `rows×cols` matrix.
pub fn unvec(v: &CCol, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.nrows(), rows * cols, "vectorized length mismatch");
    Mat::from_fn(rows, cols, |i, j| v[i + rows * j])
}

/// Largest entrywise modulus of the difference.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut r: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            r = r.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    r
}

/// Eigendecomposition of a general (possibly non-normal) complex matrix.
///
/// `vectors` holds right eigenvectors as columns, aligned with `values`.
/// Left eigenvectors are never obtained by inverting this basis; callers that
/// need them decompose the adjoint matrix instead, which stays stable under
/// near-degeneracy.
pub struct Eig {
    pub values: Vec<C64>,
    pub vectors: CMat,
}

/// Full eigendecomposition of a square complex matrix.
pub fn eig(m: &CMat) -> Result<Eig, LinalgError> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eig of non-square matrix");
    let e = Eigen::new(m.as_ref()).map_err(|_| LinalgError::EigFailed { dim: n })?;
    let values: Vec<C64> = (0..n).map(|i| e.S()[i]).collect();
    Ok(Eig {
        values,
        vectors: e.U().to_owned(),
    })
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

/// Eigendecomposition of a Hermitian matrix (input symmetrized by the caller).
pub fn herm_eig(m: &CMat) -> Result<HermEig, LinalgError> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "herm_eig of non-square matrix");
    let e = SelfAdjointEigen::new(m.as_ref(), Side::Lower)
        .map_err(|_| LinalgError::EigFailed { dim: n })?;
    let mut idx: Vec<usize> = (0..n).collect();
    let raw: Vec<f64> = (0..n).map(|i| e.S()[i].re).collect();
    idx.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let values: Vec<f64> = idx.iter().map(|&i| raw[i]).collect();
    let u = e.U();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, idx[j])]);
    Ok(HermEig { values, vectors })
}

/// Eigenvalue range `(min, max)` of a Hermitian matrix.
pub fn herm_eig_range(m: &CMat) -> Result<(f64, f64), LinalgError> {
    let e = herm_eig(m)?;
    Ok((e.values[0], e.values[e.values.len() - 1]))
}

/// Matrix inverse via partial-pivot LU.
pub fn inverse(m: &CMat) -> CMat {
    m.partial_piv_lu().inverse()
}

/// Singular values, descending.
pub fn singular_values(m: &CMat) -> Result<Vec<f64>, LinalgError> {
    m.singular_values().map_err(|_| LinalgError::SvdFailed {
        rows: m.nrows(),
        cols: m.ncols(),
    })
}

/// Numerical rank: singular values above `rel_tol` times the largest.
pub fn numerical_rank(m: &CMat, rel_tol: f64) -> Result<usize, LinalgError> {
    let sv = singular_values(m)?;
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > rel_tol * top).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat2(rows: [[C64; 2]; 2]) -> CMat {
        Mat::from_fn(2, 2, |i, j| rows[i][j])
    }

    #[test]
    fn vec_unvec_round_trip() {
        let m = Mat::from_fn(3, 2, |i, j| c(i as f64, j as f64 + 0.5));
        let v = vec_of(&m);
        // Column stacking: entry (i,j) sits at i + rows·j.
        assert_eq!(v[1 + 3], m[(1, 1)]);
        assert_eq!(max_abs_diff(&unvec(&v, 3, 2), &m), 0.0);
    }

    #[test]
    fn vec_convention_matches_transpose_kron() {
        // vec(A X B) = (Bᵀ ⊗ A) vec(X) — the defining identity of the
        // column-stacking convention.
        let a = mat2([[c(1.0, 0.5), c(0.0, -1.0)], [c(2.0, 0.0), c(0.3, 0.3)]]);
        let b = mat2([[c(0.0, 1.0), c(1.5, 0.0)], [c(-1.0, 0.2), c(0.4, 0.0)]]);
        let x = mat2([[c(0.7, -0.1), c(0.2, 0.2)], [c(-0.5, 0.0), c(1.0, 1.0)]]);
        let lhs = vec_of(&(&a * &x * &b));
        let bt = b.transpose().to_owned();
        let rhs = &kron(&bt, &a) * &vec_of(&x);
        for k in 0..4 {
            assert!((lhs[k] - rhs[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn herm_eig_sorted_and_reconstructs() {
        let m = mat2([[cr(2.0), c(0.0, 1.0)], [c(0.0, -1.0), cr(0.5)]]);
        let e = herm_eig(&m).unwrap();
        assert!(e.values[0] <= e.values[1]);
        // U diag(S) U† = M
        let rebuilt = Mat::from_fn(2, 2, |i, j| {
            (0..2)
                .map(|k| e.vectors[(i, k)] * cr(e.values[k]) * e.vectors[(j, k)].conj())
                .sum()
        });
        assert!(max_abs_diff(&rebuilt, &m) < 1e-12);
    }

    #[test]
    fn general_eig_on_nonnormal_matrix() {
        // Jordan-style defective matrix: eigenvalues still come out right.
        let m = mat2([[cr(1.0), cr(1.0)], [cr(0.0), cr(1.0)]]);
        let e = eig(&m).unwrap();
        for v in &e.values {
            assert!((v - cr(1.0)).norm() < 1e-7);
        }
    }

    #[test]
    fn inverse_of_shifted_matrix() {
        let m = mat2([[cr(2.0), c(0.3, 0.1)], [c(0.1, -0.2), cr(1.5)]]);
        let inv = inverse(&m);
        assert!(max_abs_diff(&(&m * &inv), &eye(2)) < 1e-12);
    }

    #[test]
    fn rank_detects_dependent_columns() {
        let m = Mat::from_fn(3, 2, |i, j| cr((i + 1) as f64 * (j + 1) as f64));
        assert_eq!(numerical_rank(&m, 1e-10).unwrap(), 1);
    }
}
