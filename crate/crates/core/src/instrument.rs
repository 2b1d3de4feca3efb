//! Instruments: finite families of CP maps with outcome values.
//!
//! An instrument is a finite outcome set Ω with a completely positive map
//! `C_ω` (in Kraus form, hence CP by construction) and a real value `x_ω`
//! per outcome, such that the total map `Λ = Σ_ω C_ω` is trace-preserving.
//! Measuring a hidden state σ yields outcome ω with probability `Tr C_ω(σ)`
//! and leaves the hidden system in `C_ω(σ)/Tr C_ω(σ)`.
//!
//! The spectral objects of the observed process all derive from the tilted
//! map `Λ_θ = Σ_ω e^{θ x_ω} C_ω`, built here by scaling each Kraus operator
//! with `e^{θ x_ω / 2}` so complete positivity is preserved by construction,
//! and the value-weighted map `C_X = Σ_ω x_ω C_ω`.

use crate::linalg::{self, cr, CMat};
use crate::operator::DensityOperator;
use crate::superop::{SuperOpError, SuperOperator};
use crate::tol::Tolerances;
use faer::Mat;
use thiserror::Error;

/// Largest |θ·x_ω| accepted when tilting; beyond this `e^{θx}` overflows the
/// double-precision range once squared through the map matrix.
pub const TILT_EXPONENT_LIMIT: f64 = 700.0;

/// Errors from instrument construction and use.
#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error("instrument has no outcomes")]
    NoOutcomes,
    #[error("outcome {index} ({label:?}) has no Kraus operators")]
    EmptyKrausList { index: usize, label: String },
    #[error("outcome labels are not distinct: {label:?} appears twice")]
    DuplicateLabel { label: String },
    #[error("outcome {index} ({label:?}) has non-finite value")]
    NonFiniteValue { index: usize, label: String },
    #[error("total map is not trace-preserving: residual {residual:.3e} exceeds {tol:.1e}")]
    NotTracePreserving { residual: f64, tol: f64 },
    #[error("initial state dimension {state} does not match instrument dimension {dim}")]
    StateDimMismatch { state: usize, dim: usize },
    #[error("tilt overflow: |theta * x| = {magnitude:.3e} exceeds {limit}")]
    TiltOverflow { magnitude: f64, limit: f64 },
    #[error(transparent)]
    SuperOp(#[from] SuperOpError),
    #[error(transparent)]
    Operator(#[from] crate::operator::OperatorError),
}

/// One measurement outcome: a label, a value, and the Kraus operators of its
/// CP map.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub label: String,
    pub value: f64,
    kraus: Vec<CMat>,
}

impl Outcome {
    pub fn new(label: impl Into<String>, value: f64, kraus: Vec<CMat>) -> Self {
        Self {
            label: label.into(),
            value,
            kraus,
        }
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }
}

/// Result of one validation check, with the measured residual.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub residual: f64,
    pub detail: String,
}

/// Structured validation report; never aborts on failure.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// A validated instrument, immutable after construction.
#[derive(Clone, Debug)]
pub struct Instrument {
    dim: usize,
    outcomes: Vec<Outcome>,
    initial_state: DensityOperator,
    tol: Tolerances,
}

impl Instrument {
    /// Validates and builds an instrument. `initial_state` defaults to the
    /// maximally mixed state I/d.
    pub fn new(
        dim: usize,
        outcomes: Vec<Outcome>,
        initial_state: Option<DensityOperator>,
        tol: &Tolerances,
    ) -> Result<Self, InstrumentError> {
        let report = validation_report(dim, &outcomes, tol);
        for check in &report.checks {
            if !check.passed {
                return Err(match check.name {
                    "has-outcomes" => InstrumentError::NoOutcomes,
                    "kraus-nonempty" => InstrumentError::EmptyKrausList {
                        index: check.detail.parse().unwrap_or(0),
                        label: String::new(),
                    },
                    "labels-distinct" => InstrumentError::DuplicateLabel {
                        label: check.detail.clone(),
                    },
                    "values-finite" => InstrumentError::NonFiniteValue {
                        index: check.detail.parse().unwrap_or(0),
                        label: String::new(),
                    },
                    "kraus-shapes" => InstrumentError::SuperOp(SuperOpError::KrausShape {
                        index: 0,
                        rows: 0,
                        cols: 0,
                        dout: dim,
                        din: dim,
                    }),
                    _ => InstrumentError::NotTracePreserving {
                        residual: check.residual,
                        tol: tol.trace,
                    },
                });
            }
        }
        let initial_state = match initial_state {
            Some(s) => {
                if s.dim() != dim {
                    return Err(InstrumentError::StateDimMismatch {
                        state: s.dim(),
                        dim,
                    });
                }
                s
            }
            None => DensityOperator::maximally_mixed(dim),
        };
        Ok(Self {
            dim,
            outcomes,
            initial_state,
            tol: *tol,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn initial_state(&self) -> &DensityOperator {
        &self.initial_state
    }

    /// Same instrument with a different initial state.
    pub fn with_initial_state(&self, state: DensityOperator) -> Result<Self, InstrumentError> {
        if state.dim() != self.dim {
            return Err(InstrumentError::StateDimMismatch {
                state: state.dim(),
                dim: self.dim,
            });
        }
        let mut out = self.clone();
        out.initial_state = state;
        Ok(out)
    }

    /// Same instrument with all outcome values negated (mirror process).
    pub fn with_negated_values(&self) -> Self {
        let mut out = self.clone();
        for o in &mut out.outcomes {
            o.value = -o.value;
        }
        out
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// Outcome values in outcome order.
    pub fn values(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.value).collect()
    }

    /// Largest |x_ω|.
    pub fn max_abs_value(&self) -> f64 {
        self.outcomes
            .iter()
            .map(|o| o.value.abs())
            .fold(0.0, f64::max)
    }

    /// The CP map `C_ω` of one outcome.
    pub fn outcome_map(&self, index: usize) -> SuperOperator {
        SuperOperator::from_kraus(self.dim, self.dim, self.outcomes[index].kraus.clone())
            .expect("validated at construction")
    }

    /// The total map `Λ = Σ_ω C_ω` (trace-preserving).
    pub fn total_map(&self) -> SuperOperator {
        self.scaled_map(|_| 1.0)
    }

    /// The tilted map `Λ_θ = Σ_ω e^{θ x_ω} C_ω`. At θ = 0 this is exactly
    /// `total_map` (the scale factors are exactly 1).
    pub fn tilted_map(&self, theta: f64) -> Result<SuperOperator, InstrumentError> {
        self.check_tilt(theta)?;
        Ok(self.scaled_map(|x| (0.5 * theta * x).exp()))
    }

    /// The value-weighted map `C_X = Σ_ω x_ω C_ω` (not CP for signed values;
    /// matrix-backed only).
    pub fn weighted_map(&self) -> SuperOperator {
        self.weighted_matrix_map(|x| x)
    }

    /// The θ-derivative of the tilted map, `Λ'_θ = Σ_ω x_ω e^{θ x_ω} C_ω`.
    pub fn weighted_tilted_map(&self, theta: f64) -> Result<SuperOperator, InstrumentError> {
        self.check_tilt(theta)?;
        Ok(self.weighted_matrix_map(|x| x * (theta * x).exp()))
    }

    fn check_tilt(&self, theta: f64) -> Result<(), InstrumentError> {
        let magnitude = theta.abs() * self.max_abs_value();
        if magnitude > TILT_EXPONENT_LIMIT {
            return Err(InstrumentError::TiltOverflow {
                magnitude,
                limit: TILT_EXPONENT_LIMIT,
            });
        }
        Ok(())
    }

    /// Kraus-backed map with each outcome's Kraus list scaled by
    /// `factor(x_ω)` (must be ≥ 0 to stay a Kraus scaling).
    fn scaled_map(&self, factor: impl Fn(f64) -> f64) -> SuperOperator {
        let mut kraus = Vec::new();
        for o in &self.outcomes {
            let f = factor(o.value);
            debug_assert!(f >= 0.0);
            for k in &o.kraus {
                kraus.push(if f == 1.0 {
                    k.clone()
                } else {
                    linalg::scale(cr(f), k)
                });
            }
        }
        SuperOperator::from_kraus(self.dim, self.dim, kraus).expect("validated at construction")
    }

    /// Matrix-backed linear combination `Σ_ω weight(x_ω)·C_ω` for signed
    /// weights.
    fn weighted_matrix_map(&self, weight: impl Fn(f64) -> f64) -> SuperOperator {
        let d2 = self.dim * self.dim;
        let mut matrix = Mat::zeros(d2, d2);
        for o in &self.outcomes {
            let w = weight(o.value);
            if w == 0.0 {
                continue;
            }
            for k in &o.kraus {
                let conj_k = Mat::from_fn(self.dim, self.dim, |i, j| k[(i, j)].conj());
                matrix += linalg::scale(cr(w), &linalg::kron(&conj_k, k));
            }
        }
        SuperOperator::from_matrix_unchecked(self.dim, self.dim, matrix)
    }

    /// Outcome probabilities `Tr C_ω(σ)` for a hidden state σ.
    pub fn probabilities(&self, sigma: &CMat) -> Vec<f64> {
        self.outcomes
            .iter()
            .map(|o| {
                let mut p = 0.0;
                for k in &o.kraus {
                    // Tr(KσK†) = Σ_ij (Kσ)[i,j]·conj(K[i,j]).
                    let ks = k * sigma;
                    for j in 0..self.dim {
                        for i in 0..self.dim {
                            p += (ks[(i, j)] * k[(i, j)].conj()).re;
                        }
                    }
                }
                p
            })
            .collect()
    }

    /// Applies one outcome map through its Kraus list.
    pub fn apply_outcome(&self, index: usize, sigma: &CMat) -> CMat {
        let mut out = Mat::zeros(self.dim, self.dim);
        for k in &self.outcomes[index].kraus {
            out += k * sigma * linalg::dagger(k);
        }
        out
    }

    /// Per-invariant validation with measured residuals.
    pub fn validation_report(&self) -> ValidationReport {
        validation_report(self.dim, &self.outcomes, &self.tol)
    }
}

/// Validation routine shared by `Instrument::new` (which fails on the first
/// failed check) and `validation_report` (which reports all of them).
pub fn validation_report(dim: usize, outcomes: &[Outcome], tol: &Tolerances) -> ValidationReport {
    let mut checks = Vec::new();

    let has_outcomes = !outcomes.is_empty();
    checks.push(CheckResult {
        name: "has-outcomes",
        passed: has_outcomes,
        residual: 0.0,
        detail: if has_outcomes {
            format!("{} outcomes", outcomes.len())
        } else {
            "no outcomes".to_string()
        },
    });
    if !has_outcomes {
        return ValidationReport { checks };
    }

    let mut labels: Vec<&str> = outcomes.iter().map(|o| o.label.as_str()).collect();
    labels.sort_unstable();
    let dup = labels.windows(2).find(|w| w[0] == w[1]).map(|w| w[0]);
    checks.push(CheckResult {
        name: "labels-distinct",
        passed: dup.is_none(),
        residual: 0.0,
        detail: dup.unwrap_or("").to_string(),
    });

    let bad_value = outcomes.iter().position(|o| !o.value.is_finite());
    checks.push(CheckResult {
        name: "values-finite",
        passed: bad_value.is_none(),
        residual: 0.0,
        detail: bad_value.map(|i| i.to_string()).unwrap_or_default(),
    });

    let empty = outcomes.iter().position(|o| o.kraus.is_empty());
    checks.push(CheckResult {
        name: "kraus-nonempty",
        passed: empty.is_none(),
        residual: 0.0,
        detail: empty.map(|i| i.to_string()).unwrap_or_default(),
    });

    let shape_ok = outcomes
        .iter()
        .all(|o| o.kraus.iter().all(|k| k.nrows() == dim && k.ncols() == dim));
    checks.push(CheckResult {
        name: "kraus-shapes",
        passed: shape_ok,
        residual: 0.0,
        detail: format!("dimension {dim}"),
    });

    if shape_ok && empty.is_none() {
        // Trace preservation: Σ_ω Σ_k K†K = I, reported in Frobenius norm.
        let mut sum = Mat::zeros(dim, dim);
        for o in outcomes {
            for k in &o.kraus {
                sum += linalg::dagger(k) * k;
            }
        }
        let diff = &sum - linalg::eye(dim);
        let residual = diff.norm_l2();
        checks.push(CheckResult {
            name: "trace-preserving",
            passed: residual <= tol.trace * (dim as f64).sqrt().max(1.0),
            residual,
            detail: "Frobenius norm of sum(K†K) − I".to_string(),
        });
    }

    ValidationReport { checks }
}

/// Convenience: a single-Kraus outcome.
pub fn outcome_from_single_kraus(label: impl Into<String>, value: f64, k: CMat) -> Outcome {
    Outcome::new(label, value, vec![k])
}

/// Convenience: d=1 instrument from a probability vector and values
/// (the i.i.d. reduction).
pub fn iid_instrument(
    probs: &[f64],
    values: &[f64],
    labels: &[&str],
    tol: &Tolerances,
) -> Result<Instrument, InstrumentError> {
    assert_eq!(probs.len(), values.len());
    assert_eq!(probs.len(), labels.len());
    let outcomes = probs
        .iter()
        .zip(values)
        .zip(labels)
        .map(|((&p, &x), &l)| {
            Outcome::new(l, x, vec![Mat::from_fn(1, 1, |_, _| cr(p.sqrt()))])
        })
        .collect();
    Instrument::new(1, outcomes, None, tol)
}
