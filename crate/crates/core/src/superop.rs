//! Superoperators: linear maps on matrix space.
//!
//! A map `M: T(C^{d_in}) → T(C^{d_out})` is stored as its
//! `d_out² × d_in²` matrix in the column-stacking convention
//! (`vec(AXB) = (Bᵀ ⊗ A) vec(X)`), optionally backed by a Kraus list
//! `{K_k}` with `M(X) = Σ_k K_k X K_k†`; the matrix of a Kraus-backed map is
//! `Σ_k conj(K_k) ⊗ K_k`. Most maps in this crate are endomorphisms
//! (`d_in = d_out = d`); the rectangular case exists for the
//! finitely-correlated-state presentation `Γ: T(H) → T(C^{|Ω|} ⊗ H)`.

use crate::linalg::{self, cr, CCol, CMat, C64};
use crate::operator::HermitianOperator;
use crate::tol::Tolerances;
use faer::Mat;
use thiserror::Error;

/// Errors from superoperator construction and application.
#[derive(Debug, Error)]
pub enum SuperOpError {
    #[error("Kraus operator {index} is {rows}x{cols}, expected {dout}x{din}")]
    KrausShape {
        index: usize,
        rows: usize,
        cols: usize,
        dout: usize,
        din: usize,
    },
    #[error("matrix is {rows}x{cols}, expected {exp_rows}x{exp_cols}")]
    MatrixShape {
        rows: usize,
        cols: usize,
        exp_rows: usize,
        exp_cols: usize,
    },
    #[error("map does not preserve Hermiticity: residual {residual:.3e}")]
    NotHermiticityPreserving { residual: f64 },
    #[error("input dimension {input} does not match map input dimension {expected}")]
    DimMismatch { input: usize, expected: usize },
    #[error("operation requires an endomorphism, got {din} -> {dout}")]
    NotSquare { din: usize, dout: usize },
    #[error("map is not completely positive: Choi minimum eigenvalue {min_eig:.3e}")]
    NotCompletelyPositive { min_eig: f64 },
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// A linear map on matrix space, with optional Kraus backing.
#[derive(Clone, Debug)]
pub struct SuperOperator {
    dim_in: usize,
    dim_out: usize,
    matrix: CMat,
    kraus: Option<Vec<CMat>>,
}

impl SuperOperator {
    /// The identity map ι on d×d matrices.
    pub fn identity(dim: usize) -> Self {
        Self {
            dim_in: dim,
            dim_out: dim,
            matrix: linalg::eye(dim * dim),
            kraus: Some(vec![linalg::eye(dim)]),
        }
    }

    /// The zero map.
    pub fn zero(dim_in: usize, dim_out: usize) -> Self {
        Self {
            dim_in,
            dim_out,
            matrix: Mat::zeros(dim_out * dim_out, dim_in * dim_in),
            kraus: None,
        }
    }

    /// Builds `X ↦ Σ_k K_k X K_k†` from a Kraus list (completely positive by
    /// construction).
    pub fn from_kraus(dim_in: usize, dim_out: usize, kraus: Vec<CMat>) -> Result<Self, SuperOpError> {
        for (index, k) in kraus.iter().enumerate() {
            if k.nrows() != dim_out || k.ncols() != dim_in {
                return Err(SuperOpError::KrausShape {
                    index,
                    rows: k.nrows(),
                    cols: k.ncols(),
                    dout: dim_out,
                    din: dim_in,
                });
            }
        }
        let mut matrix = Mat::zeros(dim_out * dim_out, dim_in * dim_in);
        for k in &kraus {
            let conj_k = Mat::from_fn(dim_out, dim_in, |i, j| k[(i, j)].conj());
            matrix += linalg::kron(&conj_k, k);
        }
        Ok(Self {
            dim_in,
            dim_out,
            matrix,
            kraus: Some(kraus),
        })
    }

    /// Wraps an explicit matrix representation; validates the shape and that
    /// the map preserves Hermiticity (the exact entrywise symmetry
    /// `m[(l,k),(j,i)] = conj(m[(k,l),(i,j)])`).
    pub fn from_matrix(
        dim_in: usize,
        dim_out: usize,
        matrix: CMat,
        tol: &Tolerances,
    ) -> Result<Self, SuperOpError> {
        if matrix.nrows() != dim_out * dim_out || matrix.ncols() != dim_in * dim_in {
            return Err(SuperOpError::MatrixShape {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                exp_rows: dim_out * dim_out,
                exp_cols: dim_in * dim_in,
            });
        }
        let s = Self {
            dim_in,
            dim_out,
            matrix,
            kraus: None,
        };
        let residual = s.hermiticity_preservation_residual();
        if residual > tol.hermiticity {
            return Err(SuperOpError::NotHermiticityPreserving { residual });
        }
        Ok(s)
    }

    /// Wraps a matrix known to represent a Hermiticity-preserving map
    /// (e.g. built internally from sums/products of validated maps).
    pub(crate) fn from_matrix_unchecked(dim_in: usize, dim_out: usize, matrix: CMat) -> Self {
        Self {
            dim_in,
            dim_out,
            matrix,
            kraus: None,
        }
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    /// Endomorphism dimension d (input = output), if square.
    pub fn dim(&self) -> Option<usize> {
        (self.dim_in == self.dim_out).then_some(self.dim_in)
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn kraus(&self) -> Option<&[CMat]> {
        self.kraus.as_deref()
    }

    /// Applies the map to a raw matrix via the matrix representation.
    pub fn apply_mat(&self, x: &CMat) -> CMat {
        assert_eq!(x.nrows(), self.dim_in, "input dimension mismatch");
        assert_eq!(x.ncols(), self.dim_in, "input dimension mismatch");
        let v: CCol = &self.matrix * &linalg::vec_of(x);
        linalg::unvec(&v, self.dim_out, self.dim_out)
    }

    /// Applies the map through its Kraus list (panics without one); used to
    /// cross-check the matrix representation and preferred on PSD inputs.
    pub fn apply_via_kraus(&self, x: &CMat) -> CMat {
        let kraus = self.kraus.as_ref().expect("map has no Kraus backing");
        let mut out = Mat::zeros(self.dim_out, self.dim_out);
        for k in kraus {
            out += k * x * linalg::dagger(k);
        }
        out
    }

    /// Applies the map to a Hermitian operator; the output is symmetrized
    /// (the map preserves Hermiticity, so this only removes rounding noise).
    pub fn apply(&self, h: &HermitianOperator) -> Result<HermitianOperator, SuperOpError> {
        if h.dim() != self.dim_in {
            return Err(SuperOpError::DimMismatch {
                input: h.dim(),
                expected: self.dim_in,
            });
        }
        Ok(HermitianOperator::from_hermitian_part(&self.apply_mat(h.mat())))
    }

    /// The adjoint map under the Hilbert–Schmidt inner product; its matrix is
    /// the conjugate transpose, and a Kraus backing turns into `{K_k†}`.
    pub fn adjoint(&self) -> SuperOperator {
        SuperOperator {
            dim_in: self.dim_out,
            dim_out: self.dim_in,
            matrix: linalg::dagger(&self.matrix),
            kraus: self
                .kraus
                .as_ref()
                .map(|ks| ks.iter().map(linalg::dagger).collect()),
        }
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &SuperOperator) -> Result<SuperOperator, SuperOpError> {
        if other.dim_out != self.dim_in {
            return Err(SuperOpError::DimMismatch {
                input: other.dim_out,
                expected: self.dim_in,
            });
        }
        Ok(SuperOperator {
            dim_in: other.dim_in,
            dim_out: self.dim_out,
            matrix: &self.matrix * &other.matrix,
            kraus: match (&self.kraus, &other.kraus) {
                (Some(a), Some(b)) if a.len() * b.len() <= 64 => {
                    Some(a.iter().flat_map(|ka| b.iter().map(move |kb| ka * kb)).collect())
                }
                _ => None,
            },
        })
    }

    /// Pointwise sum of two maps with identical dimensions.
    pub fn add(&self, other: &SuperOperator) -> Result<SuperOperator, SuperOpError> {
        if self.dim_in != other.dim_in || self.dim_out != other.dim_out {
            return Err(SuperOpError::DimMismatch {
                input: other.dim_in,
                expected: self.dim_in,
            });
        }
        Ok(SuperOperator {
            dim_in: self.dim_in,
            dim_out: self.dim_out,
            matrix: &self.matrix + &other.matrix,
            kraus: match (&self.kraus, &other.kraus) {
                (Some(a), Some(b)) => {
                    let mut ks = a.clone();
                    ks.extend(b.iter().cloned());
                    Some(ks)
                }
                _ => None,
            },
        })
    }

    /// Scales the map by a real factor. A nonnegative factor keeps the Kraus
    /// backing (scaled by √c); a negative one drops it (no longer CP).
    pub fn scale(&self, factor: f64) -> SuperOperator {
        let kraus = if factor >= 0.0 {
            let s = cr(factor.sqrt());
            self.kraus
                .as_ref()
                .map(|ks| ks.iter().map(|k| linalg::scale(s, k)).collect())
        } else {
            None
        };
        SuperOperator {
            dim_in: self.dim_in,
            dim_out: self.dim_out,
            matrix: linalg::scale(cr(factor), &self.matrix),
            kraus,
        }
    }

    /// Tensor product of maps: `(M1 ⊗ M2)(A ⊗ B) = M1(A) ⊗ M2(B)`.
    ///
    /// The matrix is assembled entrywise because the composite vectorization
    /// interleaves row and column indices of the two factors (it is *not*
    /// `kron` of the two map matrices).
    pub fn tensor(&self, other: &SuperOperator) -> SuperOperator {
        let (d1, e1) = (self.dim_in, self.dim_out);
        let (d2, e2) = (other.dim_in, other.dim_out);
        let (din, dout) = (d1 * d2, e1 * e2);
        let mut matrix = Mat::zeros(dout * dout, din * din);
        for k1 in 0..e1 {
            for l1 in 0..e1 {
                for i1 in 0..d1 {
                    for j1 in 0..d1 {
                        let m1 = self.matrix[(k1 + e1 * l1, i1 + d1 * j1)];
                        if m1 == C64::ZERO {
                            continue;
                        }
                        for k2 in 0..e2 {
                            for l2 in 0..e2 {
                                let row = (k1 * e2 + k2) + dout * (l1 * e2 + l2);
                                for i2 in 0..d2 {
                                    for j2 in 0..d2 {
                                        let col = (i1 * d2 + i2) + din * (j1 * d2 + j2);
                                        matrix[(row, col)] +=
                                            m1 * other.matrix[(k2 + e2 * l2, i2 + d2 * j2)];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let kraus = match (&self.kraus, &other.kraus) {
            (Some(a), Some(b)) if a.len() * b.len() <= 256 => Some(
                a.iter()
                    .flat_map(|ka| b.iter().map(move |kb| linalg::kron(ka, kb)))
                    .collect(),
            ),
            _ => None,
        };
        SuperOperator {
            dim_in: din,
            dim_out: dout,
            matrix,
            kraus,
        }
    }

    /// Applies the map n times to `x` (endomorphisms only).
    pub fn apply_iterated(&self, x: &CMat, n: usize) -> Result<CMat, SuperOpError> {
        if self.dim_in != self.dim_out {
            return Err(SuperOpError::NotSquare {
                din: self.dim_in,
                dout: self.dim_out,
            });
        }
        let mut cur = x.clone();
        for _ in 0..n {
            cur = self.apply_mat(&cur);
        }
        Ok(cur)
    }

    /// Maximum eigenvalue modulus of the map's matrix (endomorphisms only).
    pub fn spectral_radius(&self) -> Result<f64, SuperOpError> {
        self.eigenvalues()
            .map(|vs| vs.iter().map(|v| v.norm()).fold(0.0, f64::max))
    }

    /// All eigenvalues of the map's matrix (endomorphisms only).
    pub fn eigenvalues(&self) -> Result<Vec<C64>, SuperOpError> {
        if self.dim_in != self.dim_out {
            return Err(SuperOpError::NotSquare {
                din: self.dim_in,
                dout: self.dim_out,
            });
        }
        Ok(linalg::eig(&self.matrix)?.values)
    }

    /// Exact entrywise residual of the Hermiticity-preservation symmetry
    /// `M(X†) = M(X)†  ⟺  m[(l,k),(j,i)] = conj(m[(k,l),(i,j)])`.
    pub fn hermiticity_preservation_residual(&self) -> f64 {
        let (din, dout) = (self.dim_in, self.dim_out);
        let mut res: f64 = 0.0;
        for k in 0..dout {
            for l in 0..dout {
                for i in 0..din {
                    for j in 0..din {
                        let a = self.matrix[(k + dout * l, i + din * j)];
                        let b = self.matrix[(l + dout * k, j + din * i)];
                        res = res.max((a - b.conj()).norm());
                    }
                }
            }
        }
        res
    }

    /// Whether the map is trace-preserving: `Σ_k m[(k,k),(i,j)] = δ_ij`.
    pub fn is_trace_preserving(&self, tol: &Tolerances) -> bool {
        self.trace_preservation_residual() <= tol.trace
    }

    /// Largest deviation of `Tr M(E_ij)` from `δ_ij`.
    pub fn trace_preservation_residual(&self) -> f64 {
        let (din, dout) = (self.dim_in, self.dim_out);
        let mut res: f64 = 0.0;
        for i in 0..din {
            for j in 0..din {
                let mut t = C64::ZERO;
                for k in 0..dout {
                    t += self.matrix[(k + dout * k, i + din * j)];
                }
                let expected = if i == j { cr(1.0) } else { C64::ZERO };
                res = res.max((t - expected).norm());
            }
        }
        res
    }

    /// The Choi matrix `Σ_ij M(E_ij) ⊗ E_ij` (a `d_out·d_in` square matrix);
    /// PSD iff the map is completely positive.
    pub fn choi(&self) -> CMat {
        let (din, dout) = (self.dim_in, self.dim_out);
        let n = dout * din;
        let mut choi = Mat::zeros(n, n);
        for i in 0..din {
            for j in 0..din {
                // M(E_ij) read straight from the matrix columns.
                let col = i + din * j;
                for k in 0..dout {
                    for l in 0..dout {
                        let v = self.matrix[(k + dout * l, col)];
                        choi[(k * din + i, l * din + j)] += v;
                    }
                }
            }
        }
        choi
    }

    /// Extracts a Kraus list from the Choi matrix; errors when the map is not
    /// completely positive within `tol.psd` (relative to the largest Choi
    /// eigenvalue).
    pub fn kraus_from_choi(&self, tol: &Tolerances) -> Result<Vec<CMat>, SuperOpError> {
        let (din, dout) = (self.dim_in, self.dim_out);
        let choi = linalg::hermitian_part(&self.choi());
        let e = linalg::herm_eig(&choi)?;
        let top = e.values.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
        let mut kraus = Vec::new();
        for (idx, &val) in e.values.iter().enumerate() {
            if val < -tol.psd * top {
                return Err(SuperOpError::NotCompletelyPositive { min_eig: val });
            }
            if val <= tol.psd * top {
                continue;
            }
            let s = cr(val.sqrt());
            // Choi row index k·d_in + i ↦ Kraus entry K[k, i].
            let k_mat = Mat::from_fn(dout, din, |k, i| s * e.vectors[(k * din + i, idx)]);
            kraus.push(k_mat);
        }
        Ok(kraus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, cr, max_abs_diff};
    use crate::operator::{random_density, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    const TOL: Tolerances = Tolerances::DEFAULT;

    /// The cyclic shift map on d=3: single Kraus per summand |i⟩⟨i−1|;
    /// here assembled as one CP map with three Kraus operators, which sends
    /// |i⟩⟨i| to |i+1⟩⟨i+1| (indices mod 3).
    fn shift_map() -> SuperOperator {
        let mut kraus = Vec::new();
        for i in 0..3usize {
            let k = Mat::from_fn(3, 3, |r, c_| {
                if r == i && c_ == (i + 2) % 3 {
                    cr(1.0)
                } else {
                    C64::ZERO
                }
            });
            kraus.push(k);
        }
        SuperOperator::from_kraus(3, 3, kraus).unwrap()
    }

    #[test]
    fn identity_fixes_everything() {
        let id = SuperOperator::identity(3);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let h = random_hermitian(3, &mut rng);
        let out = id.apply(&h).unwrap();
        assert!(max_abs_diff(out.mat(), h.mat()) < 1e-14);
    }

    #[test]
    fn shift_moves_basis_states() {
        let m = shift_map();
        let e0 = crate::operator::DensityOperator::basis_state(3, 0);
        let out = m.apply_mat(e0.mat());
        let e1 = crate::operator::DensityOperator::basis_state(3, 1);
        assert!(max_abs_diff(&out, e1.mat()) < 1e-14);
        assert!(m.is_trace_preserving(&TOL));
    }

    #[test]
    fn kraus_and_matrix_paths_agree() {
        let m = shift_map();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..50 {
            let h = random_hermitian(3, &mut rng);
            let a = m.apply_mat(h.mat());
            let b = m.apply_via_kraus(h.mat());
            assert!(max_abs_diff(&a, &b) < 1e-10);
        }
    }

    #[test]
    fn adjoint_satisfies_inner_product_identity() {
        let m = shift_map();
        let madj = m.adjoint();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_hermitian(3, &mut rng);
            let b = random_hermitian(3, &mut rng);
            let lhs = linalg::hs_inner(&madj.apply_mat(a.mat()), b.mat());
            let rhs = linalg::hs_inner(a.mat(), &m.apply_mat(b.mat()));
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn adjoint_is_involution_and_fixes_identity_for_tp() {
        let m = shift_map();
        let madj = m.adjoint();
        let out = madj.apply_mat(&linalg::eye(3));
        assert!(max_abs_diff(&out, &linalg::eye(3)) < 1e-12);
        let back = madj.adjoint();
        assert!(max_abs_diff(back.matrix(), m.matrix()) < 1e-15);
    }

    #[test]
    fn tensor_acts_factorwise_on_product_inputs() {
        let m1 = shift_map();
        // A qubit map with two Kraus operators, deliberately not unitary.
        let k0 = Mat::from_fn(2, 2, |i, j| if i == j { cr(0.9f64.sqrt()) } else { C64::ZERO });
        let k1 = Mat::from_fn(2, 2, |i, j| {
            if i == 0 && j == 1 {
                cr(0.1f64.sqrt())
            } else if i == 1 && j == 0 {
                cr(0.1f64.sqrt())
            } else {
                C64::ZERO
            }
        });
        let m2 = SuperOperator::from_kraus(2, 2, vec![k0, k1]).unwrap();
        let t = m1.tensor(&m2);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let a = random_density(3, &mut rng);
        let b = random_density(2, &mut rng);
        let lhs = t.apply_mat(&linalg::kron(a.mat(), b.mat()));
        let rhs = linalg::kron(&m1.apply_mat(a.mat()), &m2.apply_mat(b.mat()));
        assert!(max_abs_diff(&lhs, &rhs) < 1e-10);
        // Kraus path of the tensor agrees with its matrix path.
        let x = linalg::kron(a.mat(), b.mat());
        assert!(max_abs_diff(&t.apply_via_kraus(&x), &t.apply_mat(&x)) < 1e-10);
    }

    #[test]
    fn spectral_radius_of_tp_map_is_one_and_scales() {
        let m = shift_map();
        assert!((m.spectral_radius().unwrap() - 1.0).abs() < 1e-10);
        let scaled = m.scale(2.5);
        assert!((scaled.spectral_radius().unwrap() - 2.5).abs() < 1e-9);
        let adj = m.adjoint();
        assert!((adj.spectral_radius().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tensor_spectral_radius_multiplies_for_shift() {
        let m = shift_map();
        let t = m.tensor(&m);
        assert!((t.spectral_radius().unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn tilted_shift_spectral_radius_is_e() {
        // Scale the shift summands by e^{θ x_i} with x = (0,1,2), θ = 1:
        // the cyclic structure forces r³ = e^{0+1+2}, i.e. r = e.
        let mut tilted = SuperOperator::zero(3, 3);
        for i in 0..3usize {
            let k = Mat::from_fn(3, 3, |r, c_| {
                if r == i && c_ == (i + 2) % 3 {
                    cr((0.5 * i as f64).exp())
                } else {
                    C64::ZERO
                }
            });
            let term = SuperOperator::from_kraus(3, 3, vec![k]).unwrap();
            tilted = tilted.add(&term).unwrap();
        }
        assert!((tilted.spectral_radius().unwrap() - std::f64::consts::E).abs() < 1e-8);
    }

    #[test]
    fn choi_round_trip_reproduces_the_map() {
        let m = shift_map();
        let kraus = m.kraus_from_choi(&TOL).unwrap();
        let rebuilt = SuperOperator::from_kraus(3, 3, kraus).unwrap();
        assert!(max_abs_diff(rebuilt.matrix(), m.matrix()) < 1e-10);
    }

    #[test]
    fn non_cp_map_fails_choi_extraction() {
        // The transpose map preserves Hermiticity but is not CP.
        let d = 2usize;
        let mut mat = Mat::zeros(4, 4);
        for i in 0..d {
            for j in 0..d {
                // T(E_ij) = E_ji.
                mat[(j + d * i, i + d * j)] = cr(1.0);
            }
        }
        let t = SuperOperator::from_matrix(2, 2, mat, &TOL).unwrap();
        assert!(matches!(
            t.kraus_from_choi(&TOL),
            Err(SuperOpError::NotCompletelyPositive { .. })
        ));
    }

    #[test]
    fn from_matrix_rejects_non_hermiticity_preserving() {
        let mut mat = linalg::eye(4);
        mat[(0, 1)] = c(0.0, 0.5);
        assert!(matches!(
            SuperOperator::from_matrix(2, 2, mat, &TOL),
            Err(SuperOpError::NotHermiticityPreserving { .. })
        ));
    }

    #[test]
    fn compose_matches_sequential_application() {
        let m = shift_map();
        let mm = m.compose(&m).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let h = random_hermitian(3, &mut rng);
        let a = mm.apply_mat(h.mat());
        let b = m.apply_mat(&m.apply_mat(h.mat()));
        assert!(max_abs_diff(&a, &b) < 1e-12);
    }
}
