//! Numerics for hidden Markovian processes whose hidden system is quantum.
//!
//! The observed process is generated by an *instrument*: a finite family
//! `{C_ω}` of completely positive maps on the hidden system whose sum is
//! trace-preserving. Outcome `ω` carries a real value `x_ω`, occurs with
//! probability `Tr C_ω(σ)`, and updates the hidden state to
//! `C_ω(σ)/Tr C_ω(σ)`. Everything observable about the running sample mean
//! `Xⁿ = (x_{ω₁} + … + x_{ωₙ})/n` is encoded in the spectral data of the
//! tilted transfer operator `Λ_θ = Σ_ω e^{θ x_ω} C_ω`.
//!
//! The crate provides, in dependency order:
//!
//! * [`operator`], [`superop`] — dense complex matrices as Hermitian
//!   operators, density operators, and superoperators in the column-stacking
//!   vectorization (`vec(AXB) = (Bᵀ ⊗ A) vec(X)`), with Kraus backings.
//! * [`instrument`] — instrument construction/validation, the total map `Λ`,
//!   tilted maps `Λ_θ`, and value-weighted maps `C_X = Σ x_ω C_ω`.
//! * [`perron`] — Perron–Frobenius eigendata `(λ_θ, ρ_θ, A_θ)` of CP maps and
//!   the irreducible/primitive classification with explicit positivity
//!   margins.
//! * [`cgf`] — the cumulant generating function `φ(θ) = log λ_θ`, its
//!   derivatives and inverse, the finite-n sandwich corrections
//!   `δ̄_ρ(θ), δ̲_ρ(θ)`, and Bregman/Rényi-type divergences.
//! * [`variance`] — the projector map `Λ̃`, the fundamental matrix
//!   `Z = (ι − (Λ − Λ̃))⁻¹`, and the exact asymptotic variance `φ″(0)`.
//! * [`bounds`] — O(1)-computable finite-n tail-probability bounds and
//!   large/moderate-deviation rates.
//! * [`simulate`] — Monte Carlo trajectory sampling and the exact oracles
//!   (CGF by operator iteration, sum distribution by dynamic programming)
//!   that every bound is tested against.
//! * [`fcs`] — the finitely-correlated-state presentation
//!   `Γ(σ) = Σ_ω |ω⟩⟨ω| ⊗ C_ω(σ)` and the conversion back via spectral
//!   projections of the output observable.
//! * [`fixtures`] — the bundled instruments used by tests, the CLI, and the
//!   browser demo.
//!
//! Numerical policy: tolerances are data, not policy — a single
//! [`Tolerances`] record is threaded through every constructor and
//! classification instead of per-call magic numbers.

pub mod bounds;
pub mod cgf;
pub mod fcs;
pub mod fixtures;
pub mod instrument;
pub mod io;
pub mod linalg;
pub mod operator;
pub mod perron;
pub mod simulate;
pub mod superop;
pub mod tol;
pub mod variance;

pub use instrument::Instrument;
pub use operator::{DensityOperator, HermitianOperator};
pub use superop::SuperOperator;
pub use tol::Tolerances;

/// Which tail of the sample-mean distribution a bound or oracle refers to.
///
/// `Upper` is the event `Xⁿ ≥ a`, `Lower` is `Xⁿ ≤ a`. The two are exchanged
/// exactly by negating every outcome value and reflecting `a` around the
/// mean, and the bound evaluators exploit that symmetry rather than
/// duplicating formulas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Upper,
    Lower,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Upper => "upper",
            Direction::Lower => "lower",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "upper" => Ok(Direction::Upper),
            "lower" => Ok(Direction::Lower),
            other => Err(format!("unknown direction {other:?} (expected upper|lower)")),
        }
    }
}
