//! Asymptotic variance through the fundamental matrix of the total map.
//!
//! For a primitive total map Λ with stationary state ρ₀, the projector map
//! Λ̃(H) = (Tr H)ρ₀ absorbs the peripheral spectrum: every eigenvalue of
//! Λ − Λ̃ has modulus below one, so Z = (ι − (Λ − Λ̃))⁻¹ exists (the
//! fundamental matrix, computed here by direct dense inversion; the Neumann
//! series Σ(Λ−Λ̃)ᵏ is kept as a verification path in the tests). The exact
//! second derivative of the CGF at the origin is then
//! φ″(0) = V_{ρ₀}[X] + 2·Tr C_X∘(Z − Λ̃)∘C_X(ρ₀).

use crate::instrument::{Instrument, InstrumentError};
use crate::linalg::{self, eig, hs_inner, CMat};
use crate::operator::DensityOperator;
use crate::perron::{self, PerronError};
use crate::superop::{SuperOpError, SuperOperator};
use faer::Mat;
use thiserror::Error;

/// Errors from fundamental-matrix construction.
#[derive(Debug, Error)]
pub enum VarianceError {
    #[error("total map is not primitive (irreducible: {irreducible}); the projector map has no limit along powers")]
    NotPrimitive { irreducible: bool },
    #[error(transparent)]
    Perron(#[from] PerronError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    SuperOp(#[from] SuperOpError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Stationary projector, fundamental matrix and mixing diagnostics of a
/// primitive total map.
#[derive(Clone, Debug)]
pub struct FundamentalData {
    /// Stationary state ρ₀ (full rank for a primitive map).
    pub rho0: DensityOperator,
    /// Projector map H ↦ (Tr H)ρ₀.
    pub lambda_tilde: SuperOperator,
    /// Fundamental matrix Z = (ι − (Λ − Λ̃))⁻¹.
    pub z: SuperOperator,
    /// Modulus of the largest eigenvalue of Λ − Λ̃ (the second-largest of
    /// Λ); mixing speed diagnostic.
    pub second_eigenvalue_modulus: f64,
    /// Set when the second eigenvalue modulus exceeds 1 − 1e-6 and the
    /// inversion is poorly conditioned.
    pub conditioning_warning: bool,
}

/// Builds the projector map and fundamental matrix. Requires primitivity:
/// the projector is the limit of Λⁿ, which exists only then.
pub fn fundamental_data(instr: &Instrument) -> Result<FundamentalData, VarianceError> {
    let tol = instr.tolerances();
    let total = instr.total_map();
    let class = perron::classify(&total, tol)?;
    if !class.primitive {
        return Err(VarianceError::NotPrimitive {
            irreducible: class.irreducible,
        });
    }
    let rho0 = perron::pf_eigendata(instr, 0.0)?.rho;

    let d = instr.dim();
    let d2 = d * d;
    // Λ̃(H) = (Tr H)ρ₀ vectorizes to the rank-one matrix vec(ρ₀)·vec(I)ᵀ
    // (no conjugation: Tr H = Σ_i vec(H)[i + d·i]).
    let vr = linalg::vec_of(rho0.mat());
    let vi = linalg::vec_of(&linalg::eye(d));
    let lt_matrix = Mat::from_fn(d2, d2, |i, j| vr[i] * vi[j]);
    let lambda_tilde = SuperOperator::from_matrix_unchecked(d, d, lt_matrix);

    let diff = total.matrix() - lambda_tilde.matrix();
    let gamma = eig(&diff)?
        .values
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let z_matrix = linalg::inverse(&(linalg::eye(d2) - &diff));
    let z = SuperOperator::from_matrix_unchecked(d, d, z_matrix);

    Ok(FundamentalData {
        rho0,
        lambda_tilde,
        z,
        second_eigenvalue_modulus: gamma,
        conditioning_warning: gamma > 1.0 - 1e-6,
    })
}

/// Per-step mean and variance of the outcome value in a given hidden state.
fn step_moments(instr: &Instrument, sigma: &CMat) -> (f64, f64) {
    let probabilities = instr.probabilities(sigma);
    let mut mean = 0.0;
    let mut second = 0.0;
    for (o, p) in instr.outcomes().iter().zip(&probabilities) {
        mean += o.value * p;
        second += o.value * o.value * p;
    }
    (mean, second - mean * mean)
}

/// Adjoint image of the identity under the value-weighted map:
/// G = Σ_ω x_ω Σ_k K†K, so that Tr C_X(Y) = Tr(G·Y).
fn weighted_trace_witness(instr: &Instrument) -> CMat {
    let d = instr.dim();
    let mut g: CMat = Mat::zeros(d, d);
    for o in instr.outcomes() {
        for k in o.kraus() {
            g += linalg::scale(linalg::cr(o.value), &(linalg::dagger(k) * k));
        }
    }
    g
}

/// Exact asymptotic variance φ″(0) = V_{ρ₀}[X] + 2·Tr C_X∘(Z−Λ̃)∘C_X(ρ₀).
pub fn asymptotic_variance(instr: &Instrument) -> Result<f64, VarianceError> {
    let data = fundamental_data(instr)?;
    let (_, step_variance) = step_moments(instr, data.rho0.mat());
    let weighted = instr.weighted_map();
    let pushed = weighted.apply_mat(data.rho0.mat());
    let propagated = data.z.apply_mat(&pushed) - data.lambda_tilde.apply_mat(&pushed);
    let witness = weighted_trace_witness(instr);
    let correction = 2.0 * hs_inner(&linalg::dagger(&witness), &propagated).re;
    Ok(step_variance + correction)
}

/// Exact variance of the n-step sum through the covariance expansion
/// n·V_ρ[X] + 2Σ_{k=0}^{n−2}(n−k−1)·Tr C_X∘(Λᵏ − Λ̃)∘C_X(ρ), applying
/// powers of Λ iteratively (never enumerating outcome strings). With the
/// stationary ρ₀ this is exactly V[nXⁿ]; (1/n)·value converges to the
/// asymptotic variance.
pub fn finite_n_variance(
    instr: &Instrument,
    rho: &DensityOperator,
    n: usize,
) -> Result<f64, VarianceError> {
    assert!(n >= 1);
    let (_, step_variance) = step_moments(instr, rho.mat());
    if n == 1 {
        return Ok(step_variance);
    }
    // The subtracted projector term only needs ρ₀, which exists for every
    // irreducible map (primitivity is not required here).
    let rho0 = perron::pf_eigendata(instr, 0.0)?.rho;
    let witness = weighted_trace_witness(instr);
    let trace_weighted = |y: &CMat| hs_inner(&linalg::dagger(&witness), y).re;
    let weighted = instr.weighted_map();
    let total = instr.total_map();

    let pushed = weighted.apply_mat(rho.mat());
    let pushed_trace = linalg::trace(&pushed).re;
    let stationary_step = trace_weighted(rho0.mat());

    let mut correction = 0.0;
    let mut y = pushed;
    for k in 0..=(n - 2) {
        let term = trace_weighted(&y) - pushed_trace * stationary_step;
        correction += (n - k - 1) as f64 * term;
        if k < n - 2 {
            y = total.apply_mat(&y);
        }
    }
    Ok(n as f64 * step_variance + 2.0 * correction)
}
