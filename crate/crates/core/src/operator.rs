//! Hermitian operators and density operators on the hidden system.
//!
//! [`HermitianOperator`] wraps a d×d complex matrix validated (and then
//! exactly symmetrized) to conjugate symmetry; [`DensityOperator`] adds the
//! state invariants: eigenvalues ≥ 0 and unit trace, both within the shared
//! tolerances. The degenerate dimension d = 1 is fully supported — it is the
//! i.i.d. reduction used throughout the tests.

use crate::linalg::{self, c, cr, CMat, C64};
use crate::tol::Tolerances;
use faer::Mat;
use rand::Rng;
use thiserror::Error;

/// Construction errors for operators and states.
#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: conjugate-symmetry residual {residual:.3e} exceeds {tol:.1e}")]
    NotHermitian { residual: f64, tol: f64 },
    #[error("operator is not positive semi-definite: minimum eigenvalue {min_eig:.3e}")]
    NotPsd { min_eig: f64 },
    #[error("trace is {trace:.12}, expected 1 within {tol:.1e}")]
    NotUnitTrace { trace: f64, tol: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// A d×d Hermitian matrix.
///
/// The stored matrix is the exact Hermitian part of the input, so downstream
/// eigendecompositions see conjugate symmetry to the last bit.
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    mat: CMat,
}

impl HermitianOperator {
    /// Validates conjugate symmetry within `tol.hermitian_entry`, then stores
    /// the symmetrized matrix.
    pub fn new(mat: CMat, tol: &Tolerances) -> Result<Self, OperatorError> {
        if mat.nrows() != mat.ncols() {
            return Err(OperatorError::NotSquare {
                rows: mat.nrows(),
                cols: mat.ncols(),
            });
        }
        let residual = linalg::hermiticity_residual(&mat);
        if residual > tol.hermitian_entry {
            return Err(OperatorError::NotHermitian {
                residual,
                tol: tol.hermitian_entry,
            });
        }
        Ok(Self {
            mat: linalg::hermitian_part(&mat),
        })
    }

    /// Wraps a matrix that is Hermitian by construction (symmetrizes without
    /// validating a residual).
    pub fn from_hermitian_part(mat: &CMat) -> Self {
        Self {
            mat: linalg::hermitian_part(mat),
        }
    }

    /// The identity operator.
    pub fn identity(dim: usize) -> Self {
        Self {
            mat: linalg::eye(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    /// Trace (real by Hermiticity).
    pub fn trace(&self) -> f64 {
        linalg::trace(&self.mat).re
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>, OperatorError> {
        Ok(linalg::herm_eig(&self.mat)?.values)
    }

    /// `(min, max)` eigenvalues.
    pub fn eig_range(&self) -> Result<(f64, f64), OperatorError> {
        Ok(linalg::herm_eig_range(&self.mat)?)
    }

    /// Operator norm = max |eigenvalue|.
    pub fn operator_norm(&self) -> Result<f64, OperatorError> {
        let (lo, hi) = self.eig_range()?;
        Ok(lo.abs().max(hi.abs()))
    }

    /// Expectation `Tr(H ρ)` against a state.
    pub fn expectation(&self, rho: &DensityOperator) -> f64 {
        linalg::hs_inner(&self.mat, rho.mat()).re
    }
}

/// A density operator: Hermitian, PSD within tolerance, unit trace.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    op: HermitianOperator,
}

impl DensityOperator {
    /// Validates all state invariants.
    pub fn new(mat: CMat, tol: &Tolerances) -> Result<Self, OperatorError> {
        let op = HermitianOperator::new(mat, tol)?;
        let (min_eig, _) = op.eig_range()?;
        if min_eig < -tol.psd {
            return Err(OperatorError::NotPsd { min_eig });
        }
        let trace = op.trace();
        if (trace - 1.0).abs() > tol.trace {
            return Err(OperatorError::NotUnitTrace {
                trace,
                tol: tol.trace,
            });
        }
        Ok(Self { op })
    }

    /// The maximally mixed state I/d.
    pub fn maximally_mixed(dim: usize) -> Self {
        let f = cr(1.0 / dim as f64);
        Self {
            op: HermitianOperator {
                mat: linalg::scale(f, &linalg::eye(dim)),
            },
        }
    }

    /// The basis state |i⟩⟨i|.
    pub fn basis_state(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        Self {
            op: HermitianOperator {
                mat: Mat::from_fn(dim, dim, |r, s| if r == i && s == i { cr(1.0) } else { C64::ZERO }),
            },
        }
    }

    /// The pure state |ψ⟩⟨ψ| for a (normalized or not) ket.
    pub fn from_ket(ket: &[C64]) -> Self {
        let d = ket.len();
        let norm2: f64 = ket.iter().map(|z| z.norm_sqr()).sum();
        let mat = Mat::from_fn(d, d, |i, j| ket[i] * ket[j].conj() / cr(norm2));
        Self {
            op: HermitianOperator { mat },
        }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn mat(&self) -> &CMat {
        self.op.mat()
    }

    pub fn as_hermitian(&self) -> &HermitianOperator {
        &self.op
    }

    /// Minimum eigenvalue (negative values bounded by the PSD tolerance).
    pub fn min_eigenvalue(&self) -> Result<f64, OperatorError> {
        Ok(self.op.eig_range()?.0)
    }
}

/// Random ket with i.i.d. standard complex Gaussian entries, normalized.
pub fn random_ket<R: Rng>(dim: usize, rng: &mut R) -> Vec<C64> {
    // Box–Muller from uniform draws; keeps the dependency surface to `rand`.
    let mut ket = Vec::with_capacity(dim);
    for _ in 0..dim {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        ket.push(c(
            r * (std::f64::consts::TAU * u2).cos(),
            r * (std::f64::consts::TAU * u2).sin(),
        ));
    }
    ket
}

/// Random pure state |ψ⟩⟨ψ| (Haar-distributed ψ).
pub fn random_pure_state<R: Rng>(dim: usize, rng: &mut R) -> DensityOperator {
    DensityOperator::from_ket(&random_ket(dim, rng))
}

/// Random full-rank density operator (Gaussian square, normalized).
pub fn random_density<R: Rng>(dim: usize, rng: &mut R) -> DensityOperator {
    let g = random_gaussian_matrix(dim, rng);
    let m = &g * &linalg::dagger(&g);
    let t = linalg::trace(&m);
    DensityOperator {
        op: HermitianOperator {
            mat: linalg::hermitian_part(&linalg::scale(cr(1.0 / t.re), &m)),
        },
    }
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian<R: Rng>(dim: usize, rng: &mut R) -> HermitianOperator {
    let g = random_gaussian_matrix(dim, rng);
    HermitianOperator::from_hermitian_part(&g)
}

fn random_gaussian_matrix<R: Rng>(dim: usize, rng: &mut R) -> CMat {
    let entries: Vec<C64> = (0..dim * dim)
        .map(|_| {
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random();
            let r = (-2.0 * u1.ln()).sqrt();
            c(
                r * (std::f64::consts::TAU * u2).cos(),
                r * (std::f64::consts::TAU * u2).sin(),
            )
        })
        .collect();
    Mat::from_fn(dim, dim, |i, j| entries[i * dim + j])
}
