//! The cumulant generating function of the observed sample mean and its
//! geometry.
//!
//! For an irreducible instrument, φ(θ) = log λ_θ with λ_θ the
//! Perron–Frobenius eigenvalue of the tilted map. The finite-n CGF
//! φ_{n,ρ}(θ) = log Tr Λ_θⁿ(ρ) is sandwiched between nφ(θ) + δ̲_ρ(θ) and
//! nφ(θ) + δ̄_ρ(θ), where the correction exponents
//! δ̄_ρ(θ) = log Tr A_θρ and δ̲_ρ(θ) = δ̄_ρ(θ) − log‖A_θ‖ are n-independent.
//! On top of φ sit the Bregman divergence D(θ‖θ̄), its Rényi-type
//! generalization D_{1+s}, the Legendre data φ′, φ′⁻¹, and the rate
//! function a ↦ θ*a − φ(θ*).
//!
//! Derivative policy: φ′ is the exact eigenvector-pairing value (no finite
//! differences); φ″ uses a Richardson-refined central second difference
//! except at θ = 0, where the fundamental-matrix formula gives the exact
//! asymptotic variance whenever the map is primitive.

use crate::instrument::{Instrument, InstrumentError};
use crate::linalg::hs_inner;
use crate::perron::{pf_eigendata, PerronError, PerronFrobeniusData};
use crate::variance;
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// Default differentiation step for φ″ away from the origin.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Absolute φ′-variation under which the CGF is treated as affine.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;

/// Cap on θ·(x_max − x_min), the log-spread between the heaviest and
/// lightest outcome weights in the tilted map. Beyond e^±14 ≈ 1.2e6 the
/// light outcomes start dropping below the Perron eigenvector's positivity
/// band (1e-8 of the top entry needs e^{−spread} ≫ 1e-8), and the computed
/// map degenerates toward the dominant outcome alone.
pub const TILT_SPREAD_LIMIT: f64 = 14.0;

/// Errors from CGF evaluation and inversion.
#[derive(Debug, Error)]
pub enum CgfError {
    #[error("degenerate CGF: phi-prime varies by {variation:.3e} over the search bracket, the sample mean is asymptotically deterministic")]
    DegenerateCgf { variation: f64 },
    #[error("unreachable level: a = {a} is outside the attainable range ({lo:.6}, {hi:.6}) of phi-prime")]
    UnreachableLevel { a: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Perron(#[from] PerronError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
}

/// CGF evaluator for one instrument and one initial state, with a per-θ
/// eigendata cache. All evaluations are pure; the cache only avoids repeated
/// eigendecompositions.
pub struct CgfProfile {
    instr: Instrument,
    fd_step: f64,
    cache: Mutex<HashMap<u64, Arc<PerronFrobeniusData>>>,
    misses: AtomicUsize,
    phi2_at_zero: Mutex<Option<f64>>,
}

impl CgfProfile {
    /// Builds a profile and verifies irreducibility by computing the θ = 0
    /// eigendata up front. The instrument's initial state is the ρ of the
    /// correction exponents.
    pub fn new(instr: Instrument) -> Result<Self, CgfError> {
        let profile = Self {
            instr,
            fd_step: DEFAULT_FD_STEP,
            cache: Mutex::new(HashMap::new()),
            misses: AtomicUsize::new(0),
            phi2_at_zero: Mutex::new(None),
        };
        profile.eigendata(0.0)?;
        Ok(profile)
    }

    pub fn instrument(&self) -> &Instrument {
        &self.instr
    }

    /// Number of eigendecompositions performed so far (cache misses). The
    /// tail-bound evaluators are required to keep this n-independent.
    pub fn cache_misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    /// Eigendata at θ, cached by the exact bit pattern of θ.
    pub fn eigendata(&self, theta: f64) -> Result<Arc<PerronFrobeniusData>, CgfError> {
        let key = theta.to_bits();
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let data = Arc::new(pf_eigendata(&self.instr, theta)?);
        self.misses.fetch_add(1, Ordering::Relaxed);
        self.cache.lock().unwrap().insert(key, data.clone());
        Ok(data)
    }

    /// φ(θ) = log λ_θ. Exactly 0 at θ = 0.
    pub fn phi(&self, theta: f64) -> Result<f64, CgfError> {
        Ok(self.eigendata(theta)?.lambda.ln())
    }

    /// The correction exponents (δ̄_ρ(θ), δ̲_ρ(θ)); δ̲ ≤ 0 ≤ δ̄ by the
    /// eigendata normalization. Both vanish at θ = 0 up to the trace
    /// rounding of ρ (A₀ is pinned to the exact identity).
    pub fn deltas(&self, theta: f64) -> Result<(f64, f64), CgfError> {
        let data = self.eigendata(theta)?;
        let rho = self.instr.initial_state();
        let pairing = hs_inner(data.a_op.mat(), rho.mat()).re;
        let upper = pairing.ln();
        let lower = upper - data.a_norm.ln();
        Ok((upper, lower))
    }

    /// The n-step sandwich (nφ + δ̲, nφ + δ̄) around φ_{n,ρ}(θ).
    pub fn finite_n_cgf_bounds(&self, theta: f64, n: usize) -> Result<(f64, f64), CgfError> {
        let phi = self.phi(theta)?;
        let (upper_delta, lower_delta) = self.deltas(theta)?;
        let base = n as f64 * phi;
        Ok((base + lower_delta, base + upper_delta))
    }

    /// φ′(θ) from the eigenvector pairing:
    /// Tr A_θ Λ′_θ(ρ_θ) / (λ_θ · Tr A_θ ρ_θ).
    pub fn phi_prime(&self, theta: f64) -> Result<f64, CgfError> {
        let data = self.eigendata(theta)?;
        let derivative_map = self.instr.weighted_tilted_map(theta)?;
        let pushed = derivative_map.apply_mat(data.rho.mat());
        let numerator = hs_inner(data.a_op.mat(), &pushed).re;
        let pairing = hs_inner(data.a_op.mat(), data.rho.mat()).re;
        Ok(numerator / (data.lambda * pairing))
    }

    /// φ″(θ). At θ = 0 the exact fundamental-matrix value is used when the
    /// map is primitive; otherwise (and at θ ≠ 0) a Richardson-refined
    /// central second difference of φ.
    pub fn phi_double_prime(&self, theta: f64) -> Result<f64, CgfError> {
        if theta == 0.0 {
            if let Some(v) = *self.phi2_at_zero.lock().unwrap() {
                return Ok(v);
            }
            let value = match variance::asymptotic_variance(&self.instr) {
                Ok(v) => v,
                Err(variance::VarianceError::NotPrimitive { .. }) => {
                    self.second_difference(0.0)?
                }
                Err(variance::VarianceError::Perron(e)) => return Err(e.into()),
                Err(variance::VarianceError::Instrument(e)) => return Err(e.into()),
                Err(_) => self.second_difference(0.0)?,
            };
            *self.phi2_at_zero.lock().unwrap() = Some(value);
            return Ok(value);
        }
        self.second_difference(theta)
    }

    /// Central second difference of φ with one Richardson refinement step.
    fn second_difference(&self, theta: f64) -> Result<f64, CgfError> {
        let h = self.fd_step;
        let at = |t: f64| self.phi(t);
        let coarse = (at(theta + h)? - 2.0 * at(theta)? + at(theta - h)?) / (h * h);
        let half = h / 2.0;
        let fine = (at(theta + half)? - 2.0 * at(theta)? + at(theta - half)?) / (half * half);
        Ok((4.0 * fine - coarse) / 3.0)
    }

    /// Largest |θ| at which the tilted map is numerically trustworthy.
    ///
    /// Two constraints meet here: e^{θ|x|} must stay inside f64 range, and
    /// the weight spread e^{θ(x_max−x_min)} must stay small enough that the
    /// lightest outcome remains visible next to the heaviest
    /// ([`TILT_SPREAD_LIMIT`]); past that the Perron data collapses onto the
    /// dominant outcome and irreducibility is lost in floating point.
    pub fn theta_cap(&self) -> f64 {
        let values = self.instr.values();
        let mx = self.instr.max_abs_value();
        let overflow = if mx == 0.0 { f64::INFINITY } else { 690.0 / mx };
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let range = hi - lo;
        let separation = if range > 0.0 {
            TILT_SPREAD_LIMIT / range
        } else {
            f64::INFINITY
        };
        let cap = overflow.min(separation);
        if cap.is_finite() {
            cap
        } else {
            1.0
        }
    }

    /// φ′(h) − φ′(−h) at a fixed probe width h = min(θcap/4, 1/2).
    ///
    /// This separates an affine φ (spread at eigensolver rounding level,
    /// ≲ 1e-12) from a genuinely curved one (spread ≈ 2h·φ″(0)) without a
    /// difference quotient, so no h² noise amplification is involved. Used
    /// as the degeneracy gate wherever a vanishing φ″(0) must be detected
    /// exactly rather than estimated.
    pub fn derivative_spread(&self) -> Result<f64, CgfError> {
        let h = (0.25 * self.theta_cap()).min(0.5);
        Ok(self.phi_prime(h)? - self.phi_prime(-h)?)
    }

    /// Solves φ′(θ*) = a by bisection on the monotone φ′, expanding the
    /// bracket geometrically up to the overflow cap.
    pub fn phi_prime_inverse(&self, a: f64) -> Result<f64, CgfError> {
        let cap = self.theta_cap();
        let mut lo = -1.0f64.min(cap);
        let mut hi = 1.0f64.min(cap);
        let mut f_lo = self.phi_prime(lo)?;
        let mut f_hi = self.phi_prime(hi)?;
        // Expand until the bracket straddles a or hits the cap.
        while f_lo > a && lo > -cap {
            lo = (lo * 2.0).max(-cap);
            f_lo = self.phi_prime(lo)?;
        }
        while f_hi < a && hi < cap {
            hi = (hi * 2.0).min(cap);
            f_hi = self.phi_prime(hi)?;
        }
        if f_lo > a || f_hi < a {
            let variation = (f_hi - f_lo).abs();
            if variation < DEGENERACY_THRESHOLD {
                return Err(CgfError::DegenerateCgf { variation });
            }
            return Err(CgfError::UnreachableLevel {
                a,
                lo: f_lo,
                hi: f_hi,
            });
        }
        // φ′ is nondecreasing; plain bisection is robust and each step is a
        // single cached eigendecomposition.
        for _ in 0..200 {
            if hi - lo <= 1e-13 * hi.abs().max(lo.abs()).max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let f_mid = self.phi_prime(mid)?;
            if f_mid < a {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Bregman divergence D(θ‖θ̄) = (θ−θ̄)φ′(θ) − φ(θ) + φ(θ̄); ≥ 0 by
    /// convexity of φ.
    pub fn bregman(&self, theta: f64, theta_bar: f64) -> Result<f64, CgfError> {
        Ok((theta - theta_bar) * self.phi_prime(theta)? - self.phi(theta)?
            + self.phi(theta_bar)?)
    }

    /// Rényi-type Bregman divergence
    /// D_{1+s}(θ‖θ̄) = [φ((1+s)θ − sθ̄) − (1+s)φ(θ) + sφ(θ̄)]/s for s > 0;
    /// increasing in s and converging to the Bregman divergence as s → 0.
    pub fn renyi_bregman(&self, s: f64, theta: f64, theta_bar: f64) -> Result<f64, CgfError> {
        assert!(s > 0.0, "renyi order parameter must be positive");
        let blended = (1.0 + s) * theta - s * theta_bar;
        Ok((self.phi(blended)? - (1.0 + s) * self.phi(theta)? + s * self.phi(theta_bar)?) / s)
    }

    /// Rate function a ↦ θ*a − φ(θ*) with θ* = φ′⁻¹(a); equals the
    /// half-line Legendre transform on the matching side of the mean, and 0
    /// at the mean itself by continuity.
    pub fn rate_function(&self, a: f64) -> Result<f64, CgfError> {
        let mean = self.phi_prime(0.0)?;
        if (a - mean).abs() <= 1e-15 * (1.0 + a.abs()) {
            return Ok(0.0);
        }
        let theta_star = self.phi_prime_inverse(a)?;
        Ok(theta_star * a - self.phi(theta_star)?)
    }
}
