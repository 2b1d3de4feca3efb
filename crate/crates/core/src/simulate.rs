//! Monte Carlo trajectory sampling and the exact oracles every bound is
//! tested against.
//!
//! Three independent computations of the same process law live here:
//!
//! * trajectory sampling — draws outcome sequences step by step from
//!   `Tr C_ω(σ)`, renormalizing the hidden state each step, with one
//!   counter-derived RNG stream per trajectory;
//! * the exact finite-n CGF `log Tr Λ_θⁿ(ρ)` by iterated map application
//!   with per-step rescaling (no outcome enumeration);
//! * the exact law of the n-step sum by dynamic programming over
//!   unnormalized hidden-state operators ρ_s, indexed by the sum value on a
//!   10⁻¹² lattice.
//!
//! The DP picks its storage from the value structure: when the outcome
//! values lie on a coarse lattice (integers, halves, …) the sum axis is a
//! dense array and n = 10⁴ is cheap; otherwise a sparse map is used and the
//! a-priori atom bound min(|Ω|ⁿ, multisets) decides feasibility.

use crate::cgf::{CgfError, CgfProfile};
use crate::instrument::{Instrument, InstrumentError};
use crate::linalg::{self, cr, CMat, C64};
use crate::operator::{DensityOperator, OperatorError};
use crate::perron::{self, PerronError};
use crate::variance::{self, VarianceError};
use crate::Direction;
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// Sum values are aggregated on this lattice (12 decimal digits).
const SUM_KEY_SCALE: f64 = 1e12;

/// Budget for dense DP storage, in complex lattice slots.
const DENSE_SLOT_BUDGET: u128 = 20_000_000;

/// Budget on sparse DP atoms times d² (the configured cap of the oracle).
const SPARSE_ATOM_BUDGET: u128 = 100_000_000;

/// Budget on total DP work, in Kraus-application units.
const OP_BUDGET: u128 = 400_000_000;

/// Total outcome probability below which a trajectory aborts.
const MIN_TOTAL_PROBABILITY: f64 = 1e-14;

/// Errors from sampling and the exact oracles.
#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("trajectory {trial}, step {step}: total outcome probability {total:.3e} is numerically zero")]
    ZeroProbability { trial: u64, step: usize, total: f64 },
    #[error("sum-distribution cap exceeded: estimated cost {estimated} exceeds budget {budget}")]
    CapExceeded { estimated: u128, budget: u128 },
    #[error("zero asymptotic variance ({variance:.3e}): the sample mean does not fluctuate at CLT scale")]
    ZeroVariance { variance: f64 },
    #[error(transparent)]
    Perron(#[from] PerronError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Cgf(#[from] CgfError),
    #[error(transparent)]
    Variance(#[from] VarianceError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// One sampled measurement record.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Outcome indices into `instr.outcomes()`, in time order.
    pub outcome_indices: Vec<usize>,
    /// Outcome values x_{ω₁}, …, x_{ωₙ}.
    pub values: Vec<f64>,
    /// Post-measurement hidden states, when recording was requested.
    pub states: Option<Vec<DensityOperator>>,
    /// Trial index; the trajectory was drawn from RNG stream `trial + 1`
    /// of the base seed.
    pub trial: u64,
}

impl Trajectory {
    /// Sample mean of the recorded values.
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Outcome labels in time order.
    pub fn labels<'a>(&self, instr: &'a Instrument) -> Vec<&'a str> {
        self.outcome_indices
            .iter()
            .map(|&i| instr.outcomes()[i].label.as_str())
            .collect()
    }
}

/// Row-major flattening of a matrix.
fn flat_of(m: &CMat) -> Vec<C64> {
    let (r, c) = (m.nrows(), m.ncols());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn unflat(v: &[C64], d: usize) -> CMat {
    Mat::from_fn(d, d, |i, j| v[i * d + j])
}

/// scratch = K·m, then out += scratch·K†; all row-major d×d.
fn accumulate_kraus(k: &[C64], m: &[C64], scratch: &mut [C64], out: &mut [C64], d: usize) {
    for i in 0..d {
        for j in 0..d {
            let mut acc = C64::ZERO;
            for l in 0..d {
                acc += k[i * d + l] * m[l * d + j];
            }
            scratch[i * d + j] = acc;
        }
    }
    for i in 0..d {
        for j in 0..d {
            let mut acc = C64::ZERO;
            for l in 0..d {
                acc += scratch[i * d + l] * k[j * d + l].conj();
            }
            out[i * d + j] += acc;
        }
    }
}

/// Flattened Kraus data with outcome boundaries, shared by the sampler and
/// the DP oracle.
struct FlatInstrument {
    d: usize,
    values: Vec<f64>,
    /// Kraus operators of outcome ω at indices `bounds[ω]..bounds[ω+1]`.
    kraus: Vec<Vec<C64>>,
    bounds: Vec<usize>,
}

impl FlatInstrument {
    fn new(instr: &Instrument) -> Self {
        let mut kraus = Vec::new();
        let mut bounds = vec![0usize];
        for o in instr.outcomes() {
            for k in o.kraus() {
                kraus.push(flat_of(k));
            }
            bounds.push(kraus.len());
        }
        Self {
            d: instr.dim(),
            values: instr.values(),
            kraus,
            bounds,
        }
    }

    fn outcome_count(&self) -> usize {
        self.values.len()
    }
}

/// Allocation-free single-trajectory kernel. Buffers are reused across
/// steps; probabilities use Tr(KσK†) = Σ_ij (Kσ)[i,j]·conj(K[i,j]).
struct Sampler<'a> {
    flat: &'a FlatInstrument,
    sigma: Vec<C64>,
    kraus_sigma: Vec<Vec<C64>>,
    next: Vec<C64>,
    probabilities: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(flat: &'a FlatInstrument) -> Self {
        let d2 = flat.d * flat.d;
        Self {
            flat,
            sigma: vec![C64::ZERO; d2],
            kraus_sigma: vec![vec![C64::ZERO; d2]; flat.kraus.len()],
            next: vec![C64::ZERO; d2],
            probabilities: vec![0.0; flat.outcome_count()],
        }
    }

    fn reset(&mut self, rho: &[C64]) {
        self.sigma.copy_from_slice(rho);
    }

    /// Draws one outcome, updates the state, returns the outcome index.
    fn step(&mut self, rng: &mut ChaCha12Rng) -> Result<usize, f64> {
        let d = self.flat.d;
        let n_outcomes = self.flat.outcome_count();
        let mut total = 0.0;
        for omega in 0..n_outcomes {
            let mut p = 0.0;
            for ki in self.flat.bounds[omega]..self.flat.bounds[omega + 1] {
                let k = &self.flat.kraus[ki];
                let ks = &mut self.kraus_sigma[ki];
                for i in 0..d {
                    for j in 0..d {
                        let mut acc = C64::ZERO;
                        for l in 0..d {
                            acc += k[i * d + l] * self.sigma[l * d + j];
                        }
                        ks[i * d + j] = acc;
                        p += (acc * k[i * d + j].conj()).re;
                    }
                }
            }
            self.probabilities[omega] = p;
            total += p;
        }
        if total < MIN_TOTAL_PROBABILITY {
            return Err(total);
        }
        let draw = rng.random::<f64>() * total;
        let mut cumulative = 0.0;
        let mut chosen = n_outcomes - 1;
        for omega in 0..n_outcomes {
            cumulative += self.probabilities[omega];
            if draw < cumulative {
                chosen = omega;
                break;
            }
        }
        // σ ← Σ_k (Kσ)K† / p for the chosen outcome.
        let p = self.probabilities[chosen];
        self.next.iter_mut().for_each(|z| *z = C64::ZERO);
        for ki in self.flat.bounds[chosen]..self.flat.bounds[chosen + 1] {
            let k = &self.flat.kraus[ki];
            let ks = &self.kraus_sigma[ki];
            for i in 0..d {
                for j in 0..d {
                    let mut acc = C64::ZERO;
                    for l in 0..d {
                        acc += ks[i * d + l] * k[j * d + l].conj();
                    }
                    self.next[i * d + j] += acc;
                }
            }
        }
        let inv = 1.0 / p;
        for (s, v) in self.sigma.iter_mut().zip(&self.next) {
            *s = v * inv;
        }
        Ok(chosen)
    }
}

fn stream_rng(seed: u64, trial: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(trial + 1);
    rng
}

/// Samples `trials` independent trajectories of length `n`. Deterministic
/// given (seed, trial index): trajectory t uses RNG stream t+1 of the seed.
pub fn sample_trajectories(
    instr: &Instrument,
    rho: &DensityOperator,
    n: usize,
    trials: usize,
    seed: u64,
    record_states: bool,
) -> Result<Vec<Trajectory>, SimulateError> {
    let flat = FlatInstrument::new(instr);
    let mut sampler = Sampler::new(&flat);
    let rho_flat = flat_of(rho.mat());
    let tol = instr.tolerances();
    let mut out = Vec::with_capacity(trials);
    for trial in 0..trials as u64 {
        let mut rng = stream_rng(seed, trial);
        sampler.reset(&rho_flat);
        let mut indices = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut states = record_states.then(|| Vec::with_capacity(n));
        for step in 0..n {
            let chosen = sampler.step(&mut rng).map_err(|total| {
                SimulateError::ZeroProbability { trial, step, total }
            })?;
            indices.push(chosen);
            values.push(flat.values[chosen]);
            if let Some(list) = states.as_mut() {
                list.push(DensityOperator::new(
                    linalg::hermitian_part(&unflat(&sampler.sigma, flat.d)),
                    tol,
                )?);
            }
        }
        out.push(Trajectory {
            outcome_indices: indices,
            values,
            states,
            trial,
        });
    }
    Ok(out)
}

/// Streams only the per-trajectory sample means (the bulk-statistics path:
/// no per-step allocation, no trajectory storage).
pub fn sample_means(
    instr: &Instrument,
    rho: &DensityOperator,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>, SimulateError> {
    let flat = FlatInstrument::new(instr);
    let mut sampler = Sampler::new(&flat);
    let rho_flat = flat_of(rho.mat());
    let inv_n = 1.0 / n as f64;
    let mut means = Vec::with_capacity(trials);
    for trial in 0..trials as u64 {
        let mut rng = stream_rng(seed, trial);
        sampler.reset(&rho_flat);
        let mut sum = 0.0;
        for step in 0..n {
            let chosen = sampler.step(&mut rng).map_err(|total| {
                SimulateError::ZeroProbability { trial, step, total }
            })?;
            sum += flat.values[chosen];
        }
        means.push(sum * inv_n);
    }
    Ok(means)
}

/// Exact finite-n CGF log Tr Λ_θⁿ(ρ) by n map applications with per-step
/// trace rescaling (the running trace is folded into a log accumulator, so
/// |θ| up to the tilt cap never overflows).
pub fn exact_cgf(
    instr: &Instrument,
    rho: &DensityOperator,
    theta: f64,
    n: usize,
) -> Result<f64, SimulateError> {
    let map = instr.tilted_map(theta)?;
    let mut state = rho.mat().clone();
    let mut log_factor = 0.0f64;
    for _ in 0..n {
        state = map.apply_mat(&state);
        let t = linalg::trace(&state).re;
        debug_assert!(t > 0.0);
        log_factor += t.ln();
        state = linalg::scale(cr(1.0 / t), &state);
    }
    Ok(log_factor)
}

/// Mean outcome value in the stationary state: φ′(0) without building a
/// full CGF profile.
pub fn stationary_mean(instr: &Instrument) -> Result<f64, SimulateError> {
    let rho0 = perron::pf_eigendata(instr, 0.0)?.rho;
    let probabilities = instr.probabilities(rho0.mat());
    Ok(instr
        .values()
        .iter()
        .zip(&probabilities)
        .map(|(x, p)| x * p)
        .sum())
}

/// Exact law of the n-step sum: unnormalized hidden-state operators ρ_s
/// with Pr{nXⁿ = s} = Tr ρ_s, keyed by s on the 10⁻¹² lattice.
pub struct SumDistribution {
    pub n: usize,
    dim: usize,
    atoms: BTreeMap<i64, CMat>,
}

pub(crate) fn key_of(x: f64) -> i64 {
    (x * SUM_KEY_SCALE).round() as i64
}

pub(crate) fn key_to_sum(key: i64) -> f64 {
    key as f64 / SUM_KEY_SCALE
}

fn gcd(a: u64, b: u64) -> u64 {
    let (mut a, mut b) = (a, b);
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Number of distinct n-step sums is at most the number of multisets of
/// size n over the outcome set (and at most |Ω|ⁿ).
fn atom_bound(n: usize, outcomes: usize) -> u128 {
    let power = (outcomes as u128).checked_pow(n.min(200) as u32);
    let mut multisets: u128 = 1;
    for i in 0..(outcomes - 1) {
        multisets = multisets.saturating_mul((n + 1 + i) as u128);
        multisets /= (i + 1) as u128;
    }
    match power {
        Some(p) if n <= 200 => p.min(multisets),
        _ => multisets,
    }
}

impl SumDistribution {
    /// Atoms as (sum value, unnormalized state), ascending in the sum.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, &CMat)> {
        self.atoms.iter().map(|(&k, m)| (key_to_sum(k), m))
    }

    /// Atoms reduced to (sum value, probability).
    pub fn probabilities(&self) -> Vec<(f64, f64)> {
        self.atoms()
            .map(|(s, m)| (s, linalg::trace(m).re))
            .collect()
    }

    /// Σ_s Tr ρ_s; 1 up to accumulated rounding.
    pub fn total_probability(&self) -> f64 {
        self.atoms().map(|(_, m)| linalg::trace(m).re).sum()
    }

    /// Pr{Xⁿ ≥ a} (upper) or Pr{Xⁿ ≤ a} (lower), boundary inclusive.
    pub fn tail_probability(&self, a: f64, direction: Direction) -> f64 {
        let n = self.n as f64;
        self.atoms()
            .filter(|(s, _)| match direction {
                Direction::Upper => *s / n >= a,
                Direction::Lower => *s / n <= a,
            })
            .map(|(_, m)| linalg::trace(m).re)
            .sum()
    }

    /// Pr{Xⁿ > a} with a strict boundary (the spectral-projection event
    /// convention of the joint-state representation).
    pub fn strict_upper_tail(&self, a: f64) -> f64 {
        let n = self.n as f64;
        self.atoms()
            .filter(|(s, _)| *s / n > a)
            .map(|(_, m)| linalg::trace(m).re)
            .sum()
    }

    /// log Σ_s e^{θs}·Pr{nXⁿ = s}, evaluated stably; equals the exact CGF.
    pub fn log_mgf(&self, theta: f64) -> f64 {
        let terms: Vec<(f64, f64)> = self
            .probabilities()
            .into_iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(s, p)| (theta * s + p.ln(), p))
            .collect();
        let peak = terms
            .iter()
            .map(|(e, _)| *e)
            .fold(f64::NEG_INFINITY, f64::max);
        peak + terms
            .iter()
            .map(|(e, _)| (e - peak).exp())
            .sum::<f64>()
            .ln()
    }

    /// Operator-valued marginal Σ_s ρ_s (equals Λⁿ(ρ)).
    pub fn operator_marginal(&self) -> CMat {
        let mut acc: CMat = Mat::zeros(self.dim, self.dim);
        for (_, m) in self.atoms() {
            acc += m;
        }
        acc
    }
}

/// Runs the sum-distribution DP: ρ'_{s+x_ω} += C_ω(ρ_s) from ρ_0 = ρ.
pub fn exact_sum_distribution(
    instr: &Instrument,
    rho: &DensityOperator,
    n: usize,
) -> Result<SumDistribution, SimulateError> {
    assert!(n >= 1);
    let flat = FlatInstrument::new(instr);
    let d = flat.d;
    let d2 = (d * d) as u128;
    let n_outcomes = flat.outcome_count();
    let keys: Vec<i64> = flat.values.iter().map(|&x| key_of(x)).collect();
    let key_min = *keys.iter().min().unwrap();
    let key_max = *keys.iter().max().unwrap();

    // Lattice structure of the value keys: offsets measured from key_min in
    // units of their gcd.
    let step_gcd = keys
        .iter()
        .map(|&k| (k - key_min).unsigned_abs())
        .filter(|&x| x != 0)
        .fold(0u64, gcd);
    let span = if step_gcd == 0 {
        0u128
    } else {
        ((key_max - key_min) as u128) / step_gcd as u128
    };
    let dense_cols = span * n as u128 + 1;

    let dense_fits = dense_cols.saturating_mul(d2) <= DENSE_SLOT_BUDGET
        && (n as u128)
            .saturating_mul(dense_cols)
            .saturating_mul(flat.kraus.len() as u128)
            / 2
            <= OP_BUDGET;
    if dense_fits {
        return Ok(dense_dp(&flat, rho, n, key_min, step_gcd, dense_cols as usize));
    }

    let bound = atom_bound(n, n_outcomes);
    let estimated = bound.saturating_mul(d2);
    if estimated > SPARSE_ATOM_BUDGET {
        return Err(SimulateError::CapExceeded {
            estimated,
            budget: SPARSE_ATOM_BUDGET,
        });
    }
    let work = (n as u128)
        .saturating_mul(bound)
        .saturating_mul(flat.kraus.len() as u128);
    if work > OP_BUDGET {
        return Err(SimulateError::CapExceeded {
            estimated: work,
            budget: OP_BUDGET,
        });
    }
    Ok(sparse_dp(&flat, rho, n))
}

fn dense_dp(
    flat: &FlatInstrument,
    rho: &DensityOperator,
    n: usize,
    key_min: i64,
    step_gcd: u64,
    cols: usize,
) -> SumDistribution {
    let d = flat.d;
    let d2 = d * d;
    // Column offset per outcome: (key_ω − key_min)/gcd.
    let offsets: Vec<usize> = flat
        .values
        .iter()
        .map(|&x| {
            if step_gcd == 0 {
                0
            } else {
                ((key_of(x) - key_min) as u64 / step_gcd) as usize
            }
        })
        .collect();
    let span = offsets.iter().copied().max().unwrap_or(0);

    let mut current = vec![C64::ZERO; cols * d2];
    let mut next = vec![C64::ZERO; cols * d2];
    let mut scratch = vec![C64::ZERO; d2];
    current[0..d2].copy_from_slice(&flat_of(rho.mat()));
    let mut active = 1usize; // occupied columns in `current`

    for _ in 0..n {
        let new_active = active + span;
        next[0..new_active * d2].iter_mut().for_each(|z| *z = C64::ZERO);
        for col in 0..active {
            let src = &current[col * d2..(col + 1) * d2];
            if src.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                continue;
            }
            for omega in 0..flat.outcome_count() {
                let dst_col = col + offsets[omega];
                // Split-borrow: destination lives in `next`, source in
                // `current`, so the ranges never alias.
                let dst = &mut next[dst_col * d2..(dst_col + 1) * d2];
                for ki in flat.bounds[omega]..flat.bounds[omega + 1] {
                    accumulate_kraus(&flat.kraus[ki], src, &mut scratch, dst, d);
                }
            }
        }
        std::mem::swap(&mut current, &mut next);
        active = new_active;
    }

    let mut atoms = BTreeMap::new();
    for col in 0..active {
        let src = &current[col * d2..(col + 1) * d2];
        if src.iter().any(|z| z.re != 0.0 || z.im != 0.0) {
            let key = n as i64 * key_min + (col as i64) * step_gcd as i64;
            atoms.insert(key, unflat(src, d));
        }
    }
    SumDistribution { n, dim: d, atoms }
}

fn sparse_dp(flat: &FlatInstrument, rho: &DensityOperator, n: usize) -> SumDistribution {
    let d = flat.d;
    let d2 = d * d;
    let keys: Vec<i64> = flat.values.iter().map(|&x| key_of(x)).collect();
    let mut current: BTreeMap<i64, Vec<C64>> = BTreeMap::new();
    current.insert(0, flat_of(rho.mat()));
    let mut scratch = vec![C64::ZERO; d2];
    for _ in 0..n {
        let mut next: BTreeMap<i64, Vec<C64>> = BTreeMap::new();
        for (key, src) in &current {
            for omega in 0..flat.outcome_count() {
                let dst = next
                    .entry(key + keys[omega])
                    .or_insert_with(|| vec![C64::ZERO; d2]);
                for ki in flat.bounds[omega]..flat.bounds[omega + 1] {
                    accumulate_kraus(&flat.kraus[ki], src, &mut scratch, dst, d);
                }
            }
        }
        current = next;
    }
    let atoms = current
        .into_iter()
        .map(|(k, v)| (k, unflat(&v, d)))
        .collect();
    SumDistribution { n, dim: d, atoms }
}

/// Exact tail probability of the sample mean from the DP oracle; boundary
/// inclusive (Pr{Xⁿ ≥ a} / Pr{Xⁿ ≤ a}).
pub fn exact_tail(
    instr: &Instrument,
    rho: &DensityOperator,
    n: usize,
    a: f64,
    direction: Direction,
) -> Result<f64, SimulateError> {
    Ok(exact_sum_distribution(instr, rho, n)?.tail_probability(a, direction))
}

/// The scaled-CGF diagnostic: exact_cgf at θ = δ/√n minus the linear part
/// δ√n·φ′(0); converges to (δ²/2)·φ″(0) as n grows.
pub fn scaled_cgf_check(
    instr: &Instrument,
    rho: &DensityOperator,
    delta: f64,
    n: usize,
) -> Result<f64, SimulateError> {
    let sqrt_n = (n as f64).sqrt();
    let theta = delta / sqrt_n;
    let value = exact_cgf(instr, rho, theta, n)?;
    Ok(value - delta * sqrt_n * stationary_mean(instr)?)
}

/// Kolmogorov–Smirnov distance between the empirical law of
/// √n(Xⁿ − φ′(0)) over `trials` trajectories and the centered Gaussian with
/// variance φ″(0).
pub fn clt_check(
    instr: &Instrument,
    rho: &DensityOperator,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<f64, SimulateError> {
    let profile = CgfProfile::new(instr.clone())?;
    // Affine-CGF gate: a finite-difference second derivative has a noise
    // floor (~1e-6) that would mask exact degeneracy, so flatness is
    // detected from the derivative spread instead.
    let spread = profile.derivative_spread()?;
    if spread.abs() < 1e-9 {
        return Err(SimulateError::ZeroVariance {
            variance: spread.max(0.0),
        });
    }
    let variance = match variance::asymptotic_variance(instr) {
        Ok(v) => v,
        Err(VarianceError::NotPrimitive { .. }) => profile.phi_double_prime(0.0)?,
        Err(e) => return Err(e.into()),
    };
    if variance <= 1e-10 {
        return Err(SimulateError::ZeroVariance { variance });
    }
    let mean = stationary_mean(instr)?;
    let sqrt_n = (n as f64).sqrt();
    let mut scaled: Vec<f64> = sample_means(instr, rho, n, trials, seed)?
        .into_iter()
        .map(|m| sqrt_n * (m - mean))
        .collect();
    scaled.sort_by(f64::total_cmp);
    let sigma = variance.sqrt();
    let m = scaled.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, z) in scaled.iter().enumerate() {
        let cdf = normal_cdf(*z / sigma);
        ks = ks
            .max(((i + 1) as f64 / m - cdf).abs())
            .max((cdf - i as f64 / m).abs());
    }
    Ok(ks)
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::{iid_instrument, outcome_from_single_kraus, Outcome};
    use crate::tol::Tolerances;

    const TOL: Tolerances = Tolerances::DEFAULT;

    fn coin() -> Instrument {
        iid_instrument(&[0.5, 0.5], &[0.0, 1.0], &["0", "1"], &TOL).unwrap()
    }

    fn shift() -> Instrument {
        let outcomes = (0..3usize)
            .map(|i| {
                let k = Mat::from_fn(3, 3, |r, c_| {
                    if r == i && c_ == (i + 2) % 3 {
                        cr(1.0)
                    } else {
                        C64::ZERO
                    }
                });
                outcome_from_single_kraus(i.to_string(), i as f64, k)
            })
            .collect();
        Instrument::new(3, outcomes, None, &TOL).unwrap()
    }

    fn rotation_qubit() -> Instrument {
        let (q, a, b) = (0.6f64, 1.2f64, 0.7f64);
        let rx = Mat::from_fn(2, 2, |i, j| {
            let (cth, sth) = ((a / 2.0).cos(), (a / 2.0).sin());
            match (i, j) {
                (0, 0) | (1, 1) => cr(cth),
                _ => C64::new(0.0, -sth),
            }
        });
        let rz = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => C64::from_polar(1.0, -b / 2.0),
            (1, 1) => C64::from_polar(1.0, b / 2.0),
            _ => C64::ZERO,
        });
        Instrument::new(
            2,
            vec![
                Outcome::new("u0", 1.0, vec![linalg::scale(cr(q.sqrt()), &rx)]),
                Outcome::new("u1", -1.0, vec![linalg::scale(cr((1.0 - q).sqrt()), &rz)]),
            ],
            None,
            &TOL,
        )
        .unwrap()
    }

    #[test]
    fn shift_trajectory_is_periodic() {
        let instr = shift();
        let start = DensityOperator::basis_state(3, 0);
        let trajectories = sample_trajectories(&instr, &start, 9, 2, 42, false).unwrap();
        for t in &trajectories {
            assert_eq!(t.values, vec![1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 1.0, 2.0, 0.0]);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_streams_differ() {
        let instr = coin();
        let rho = instr.initial_state().clone();
        let a = sample_trajectories(&instr, &rho, 50, 3, 7, false).unwrap();
        let b = sample_trajectories(&instr, &rho, 50, 3, 7, false).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.outcome_indices, y.outcome_indices);
        }
        assert_ne!(a[0].outcome_indices, a[1].outcome_indices);
    }

    #[test]
    fn coin_frequencies_match() {
        let instr = coin();
        let rho = instr.initial_state().clone();
        let means = sample_means(&instr, &rho, 1, 10_000, 13).unwrap();
        let ones = means.iter().filter(|&&m| m > 0.5).count() as f64;
        // 3σ band for Binomial(10⁴, ½).
        assert!((ones - 5000.0).abs() < 3.0 * 50.0, "ones {ones}");
    }

    #[test]
    fn exact_cgf_matches_closed_form() {
        let instr = coin();
        let rho = instr.initial_state().clone();
        assert_eq!(exact_cgf(&instr, &rho, 0.7, 0).unwrap(), 0.0);
        for theta in [-1.0, 0.0, 0.5, 2.0] {
            for n in [1usize, 4, 11] {
                let got = exact_cgf(&instr, &rho, theta, n).unwrap();
                let want = n as f64 * (0.5 + 0.5 * theta.exp()).ln();
                assert!((got - want).abs() < 1e-10, "theta {theta} n {n}");
            }
        }
    }

    #[test]
    fn exact_cgf_at_stationary_tilted_state() {
        let instr = rotation_qubit();
        let theta = 0.9;
        let data = perron::pf_eigendata(&instr, theta).unwrap();
        let profile = CgfProfile::new(instr.clone()).unwrap();
        let n = 7;
        let got = exact_cgf(&instr, &data.rho, theta, n).unwrap();
        assert!((got - n as f64 * profile.phi(theta).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn coin_sum_distribution_is_binomial() {
        let instr = coin();
        let rho = instr.initial_state().clone();
        let one = exact_sum_distribution(&instr, &rho, 1).unwrap();
        let atoms = one.probabilities();
        assert_eq!(atoms.len(), 2);
        assert!((atoms[0].1 - 0.5).abs() < 1e-15 && (atoms[1].1 - 0.5).abs() < 1e-15);

        let ten = exact_sum_distribution(&instr, &rho, 10).unwrap();
        let tail = ten.tail_probability(0.75, Direction::Upper);
        assert!((tail - 56.0 / 1024.0).abs() < 1e-15);
        assert!((ten.total_probability() - 1.0).abs() < 1e-12);
        // No atom sits on the boundary 7.5, so the tails partition the mass.
        let low = ten.tail_probability(0.75, Direction::Lower);
        assert!((low - (1024.0 - 56.0) / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn shift_sum_is_deterministic() {
        let instr = shift();
        let rho = instr.initial_state().clone();
        let dist = exact_sum_distribution(&instr, &rho, 3).unwrap();
        let atoms = dist.probabilities();
        assert_eq!(atoms.len(), 1);
        assert!((atoms[0].0 - 3.0).abs() < 1e-9);
        assert!((atoms[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sum_distribution_marginal_and_mgf_consistency() {
        let instr = rotation_qubit();
        let rho = DensityOperator::basis_state(2, 0);
        for n in [1usize, 4, 8] {
            let dist = exact_sum_distribution(&instr, &rho, n).unwrap();
            let marginal = dist.operator_marginal();
            let direct = instr
                .total_map()
                .apply_iterated(rho.mat(), n)
                .unwrap();
            assert!(linalg::max_abs_diff(&marginal, &direct) < 1e-10, "n {n}");
            for theta in [-1.0, -0.5, 0.5, 1.0] {
                let via_atoms = dist.log_mgf(theta);
                let via_maps = exact_cgf(&instr, &rho, theta, n).unwrap();
                assert!((via_atoms - via_maps).abs() < 1e-8, "n {n} theta {theta}");
            }
            // Unnormalized states stay PSD.
            for (_, m) in dist.atoms() {
                let (lo, _) = linalg::herm_eig_range(&linalg::hermitian_part(m)).unwrap();
                assert!(lo > -1e-12);
            }
        }
    }

    #[test]
    fn dense_path_handles_large_n() {
        let instr = coin();
        let rho = instr.initial_state().clone();
        let n = 2000usize;
        let dist = exact_sum_distribution(&instr, &rho, n).unwrap();
        // Extreme binomial atoms underflow to exact zero and are dropped;
        // everything representable must still be there and sum to one.
        let atoms = dist.probabilities();
        assert!(atoms.len() <= n + 1 && atoms.len() > n / 2);
        assert!((dist.total_probability() - 1.0).abs() < 1e-9);
        let central = atoms
            .iter()
            .find(|(s, _)| (*s - 1000.0).abs() < 1e-6)
            .unwrap()
            .1;
        let want = (libm::lgamma(2001.0)
            - 2.0 * libm::lgamma(1001.0)
            - n as f64 * std::f64::consts::LN_2)
            .exp();
        assert!((central - want).abs() < 1e-12 * want.max(1.0));
    }

    #[test]
    fn sparse_path_handles_irrational_values() {
        let instr = iid_instrument(
            &[0.25, 0.5, 0.25],
            &[0.0, 1.0, std::f64::consts::SQRT_2],
            &["a", "b", "c"],
            &TOL,
        )
        .unwrap();
        let rho = instr.initial_state().clone();
        let dist = exact_sum_distribution(&instr, &rho, 5).unwrap();
        assert!((dist.total_probability() - 1.0).abs() < 1e-12);
        assert!(dist.probabilities().len() <= 21);
    }

    #[test]
    fn infeasible_sizes_are_rejected() {
        let instr = iid_instrument(
            &[0.25, 0.5, 0.25],
            &[0.0, 1.0, std::f64::consts::SQRT_2],
            &["a", "b", "c"],
            &TOL,
        )
        .unwrap();
        let rho = instr.initial_state().clone();
        assert!(matches!(
            exact_sum_distribution(&instr, &rho, 20_000),
            Err(SimulateError::CapExceeded { .. })
        ));
    }

    #[test]
    fn scaled_cgf_approaches_half_variance() {
        let instr = coin();
        let rho = instr.initial_state().clone();
        let value = scaled_cgf_check(&instr, &rho, 1.0, 10_000).unwrap();
        assert!((value - 0.125).abs() < 5e-3, "value {value}");
    }

    #[test]
    fn clt_check_small_run() {
        let instr = coin();
        let rho = instr.initial_state().clone();
        // Budget covers the discretization error of Binomial(400) plus
        // sampling noise at 4000 trials; a mis-scaled variance would land
        // well above it.
        let ks = clt_check(&instr, &rho, 400, 4000, 5).unwrap();
        assert!(ks < 0.06, "ks {ks}");
    }

    #[test]
    fn clt_check_rejects_degenerate_process() {
        let instr = shift();
        let rho = instr.initial_state().clone();
        assert!(matches!(
            clt_check(&instr, &rho, 100, 100, 1),
            Err(SimulateError::ZeroVariance { .. })
        ));
    }

    #[test]
    fn trajectory_states_are_valid() {
        let instr = rotation_qubit();
        let rho = DensityOperator::basis_state(2, 0);
        let t = sample_trajectories(&instr, &rho, 20, 1, 3, true).unwrap();
        let states = t[0].states.as_ref().unwrap();
        assert_eq!(states.len(), 20);
        for s in states {
            assert!((linalg::trace(s.mat()).re - 1.0).abs() < 1e-9);
        }
    }
}
