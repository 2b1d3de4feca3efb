//! Centralized numerical tolerances.
//!
//! Every classification in this crate (Hermiticity, positivity, eigenvalue
//! clustering, trace preservation) ultimately compares floating-point
//! residuals against a threshold. Those thresholds live here, in one record
//! that is threaded through constructors and algorithms, so that all modules
//! share consistent tolerance semantics and tests can tighten or loosen them
//! coherently.

/// Tolerance record shared by the whole crate.
///
/// All fields are absolute unless stated otherwise. The defaults follow one
/// scheme: structural identities that hold to machine precision get `1e-10`
/// (or `1e-12` entrywise), spectral quantities that pass through a dense
/// eigensolver get `1e-8`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Entrywise conjugate-symmetry slack for accepting a matrix as Hermitian.
    pub hermitian_entry: f64,
    /// Map-level Hermiticity preservation and Kraus-vs-matrix agreement.
    pub hermiticity: f64,
    /// Eigenvalue floor for accepting an operator as positive semi-definite:
    /// eigenvalues ≥ −psd pass.
    pub psd: f64,
    /// Trace-normalization and trace-preservation residuals.
    pub trace: f64,
    /// Relative radius used to cluster eigenvalues (multiplicity counting,
    /// peripheral spectrum, spectral projections).
    pub eig_equality: f64,
    /// Relative strict-positivity band: an eigenvector counts as strictly
    /// positive definite when min-eig > band·max-eig; verdicts with
    /// 0 < min-eig ≤ band·max-eig are "indeterminate" rather than booleans.
    pub positivity_band: f64,
    /// Residual allowed in Perron–Frobenius eigen-equations
    /// ‖Λ_θ(ρ_θ) − λ_θ ρ_θ‖.
    pub eig_residual: f64,
    /// Residual allowed in the fundamental-matrix identities
    /// (Λ̃∘Λ = Λ∘Λ̃ = Λ̃² = Λ̃ and Z∘(ι − (Λ − Λ̃)) = ι).
    pub fundamental: f64,
}

impl Tolerances {
    /// The default tolerance set used everywhere unless a caller overrides it.
    pub const DEFAULT: Tolerances = Tolerances {
        hermitian_entry: 1e-12,
        hermiticity: 1e-10,
        psd: 1e-10,
        trace: 1e-10,
        eig_equality: 1e-8,
        positivity_band: 1e-8,
        eig_residual: 1e-8,
        fundamental: 1e-9,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
