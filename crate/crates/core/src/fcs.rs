//! Joint-register form of an instrument, in the style of full counting
//! statistics: a single step map Γ from the hidden system into output ⊗ hidden
//! together with a Hermitian observable on the output register.
//!
//! The two representations describe the same process. Converting an
//! instrument into this form keeps every outcome as its own output basis
//! vector; converting back merges outcomes whose observable eigenvalues
//! coincide, so the round trip preserves exactly what the running sum can
//! see: the set of values, the per-value probabilities, and the law of the
//! time-averaged observable. Joint indices pack as `ω·d_H + i` (output
//! register first).

use crate::instrument::{Instrument, InstrumentError, Outcome};
use crate::linalg::{self, c, CMat, C64, LinalgError};
use crate::operator::{DensityOperator, HermitianOperator, OperatorError};
use crate::simulate::{key_of, key_to_sum};
use crate::superop::{SuperOpError, SuperOperator};
use crate::tol::Tolerances;
use faer::Mat;
use std::collections::BTreeMap;
use thiserror::Error;

/// Kraus elements whose largest entry falls below this fraction of the
/// family-wide largest entry are dropped when converting back to an
/// instrument; they are exact zeros up to eigensolver rounding and only
/// bloat the outcome lists.
const NEGLIGIBLE_KRAUS: f64 = 1e-13;

/// Cap on the number of outcome strings `joint_distribution` will enumerate.
const ENUMERATION_CAP: u128 = 1_000_000;

/// Errors from building or converting joint-register models.
#[derive(Debug, Error)]
pub enum FcsError {
    #[error("hidden dimension must be positive")]
    ZeroHiddenDim,
    #[error("gamma maps dimension {din} into {dout}; the output dimension must be a positive multiple of the hidden dimension")]
    GammaShape { din: usize, dout: usize },
    #[error("gamma must be supplied in Kraus form")]
    MissingKraus,
    #[error("gamma is not trace-preserving: residual {residual:.3e} exceeds {tol:.1e}")]
    NotTracePreserving { residual: f64, tol: f64 },
    #[error("observable acts on dimension {observable}, expected the output dimension {output}")]
    ObservableDim { observable: usize, output: usize },
    #[error("observable entry {index} is not finite")]
    NonFiniteObservable { index: usize },
    #[error("observable is not diagonal on the output basis (off-diagonal mass {off_diagonal:.3e})")]
    NotDiagonal { off_diagonal: f64 },
    #[error("state has dimension {state}, expected the hidden dimension {hidden}")]
    StateDimMismatch { state: usize, hidden: usize },
    #[error("{strings} outcome strings exceed the enumeration cap {cap}")]
    EnumerationCap { strings: u128, cap: u128 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    SuperOp(#[from] SuperOpError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
}

/// A hidden-Markov process in joint-register form: the step map
/// `Γ: L(H) → L(C^{d_out} ⊗ H)` plus the observable `A` read off the output
/// register after each step.
#[derive(Clone)]
pub struct FcsModel {
    hidden_dim: usize,
    output_dim: usize,
    gamma: SuperOperator,
    observable: HermitianOperator,
    tol: Tolerances,
}

impl FcsModel {
    /// Validates and builds a model. `gamma` must be Kraus-backed (which
    /// certifies complete positivity), map `d_H` into `d_out·d_H`, and be
    /// trace-preserving within `tol.trace·√d_H`; the observable must act on
    /// the output register.
    pub fn new(
        gamma: SuperOperator,
        observable: HermitianOperator,
        tol: &Tolerances,
    ) -> Result<Self, FcsError> {
        let hidden_dim = gamma.dim_in();
        if hidden_dim == 0 {
            return Err(FcsError::ZeroHiddenDim);
        }
        let joint = gamma.dim_out();
        if joint == 0 || joint % hidden_dim != 0 {
            return Err(FcsError::GammaShape {
                din: hidden_dim,
                dout: joint,
            });
        }
        let output_dim = joint / hidden_dim;
        let kraus = gamma.kraus().ok_or(FcsError::MissingKraus)?;
        let mut tp = CMat::zeros(hidden_dim, hidden_dim);
        for k in kraus {
            tp += linalg::dagger(k) * k;
        }
        let residual = (&tp - linalg::eye(hidden_dim)).norm_l2();
        let bound = tol.trace * (hidden_dim as f64).sqrt().max(1.0);
        if residual > bound {
            return Err(FcsError::NotTracePreserving {
                residual,
                tol: bound,
            });
        }
        if observable.dim() != output_dim {
            return Err(FcsError::ObservableDim {
                observable: observable.dim(),
                output: output_dim,
            });
        }
        Ok(Self {
            hidden_dim,
            output_dim,
            gamma,
            observable,
            tol: *tol,
        })
    }

    /// Builds a model from raw parts: Kraus operators of Γ (each
    /// `(d_out·d_H) × d_H`) and the observable's eigenvalue on each output
    /// basis vector. This is the shape the serialized form carries.
    pub fn from_parts(
        hidden_dim: usize,
        output_dim: usize,
        kraus: Vec<CMat>,
        observable: Vec<f64>,
        tol: &Tolerances,
    ) -> Result<Self, FcsError> {
        if observable.len() != output_dim {
            return Err(FcsError::ObservableDim {
                observable: observable.len(),
                output: output_dim,
            });
        }
        if let Some(index) = observable.iter().position(|v| !v.is_finite()) {
            return Err(FcsError::NonFiniteObservable { index });
        }
        let gamma = SuperOperator::from_kraus(hidden_dim, output_dim * hidden_dim, kraus)?;
        let a = Mat::from_fn(output_dim, output_dim, |i, j| {
            if i == j {
                c(observable[i], 0.0)
            } else {
                C64::ZERO
            }
        });
        Self::new(gamma, HermitianOperator::from_hermitian_part(&a), tol)
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// The step map `Γ: L(H) → L(C^{d_out} ⊗ H)`, Kraus-backed.
    pub fn gamma(&self) -> &SuperOperator {
        &self.gamma
    }

    /// The observable on the output register.
    pub fn observable(&self) -> &HermitianOperator {
        &self.observable
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// The observable's diagonal, for serialization. Errs when the observable
    /// carries off-diagonal mass (then the diagonal alone would misrepresent
    /// it; rotate to the eigenbasis first).
    pub fn diagonal_observable(&self) -> Result<Vec<f64>, FcsError> {
        let m = self.observable.mat();
        let d = self.output_dim;
        let mut off: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for i in 0..d {
            for j in 0..d {
                let a = m[(i, j)].norm();
                scale = scale.max(a);
                if i != j {
                    off = off.max(a);
                }
            }
        }
        if off > self.tol.hermitian_entry * scale {
            return Err(FcsError::NotDiagonal { off_diagonal: off });
        }
        Ok((0..d).map(|i| m[(i, i)].re).collect())
    }

    fn check_state(&self, rho: &DensityOperator) -> Result<(), FcsError> {
        if rho.dim() != self.hidden_dim {
            return Err(FcsError::StateDimMismatch {
                state: rho.dim(),
                hidden: self.hidden_dim,
            });
        }
        Ok(())
    }
}

/// Converts an instrument into joint-register form: one output basis vector
/// per outcome (`d_out = |Ω|`), Kraus operators `|ω⟩ ⊗ K` stacked per
/// outcome, and the diagonal observable carrying the outcome values.
pub fn to_fcs(instr: &Instrument) -> FcsModel {
    let dh = instr.dim();
    let outcomes = instr.outcomes();
    let dout = outcomes.len();
    let mut kraus = Vec::new();
    for (w, out) in outcomes.iter().enumerate() {
        for k in out.kraus() {
            let mut g = CMat::zeros(dout * dh, dh);
            for i in 0..dh {
                for j in 0..dh {
                    g[(w * dh + i, j)] = k[(i, j)];
                }
            }
            kraus.push(g);
        }
    }
    let values = instr.values();
    let a = Mat::from_fn(dout, dout, |i, j| {
        if i == j {
            c(values[i], 0.0)
        } else {
            C64::ZERO
        }
    });
    // Validity is inherited from the instrument: Σ G†G = Σ_ω Σ_r K†K = I,
    // and the shapes are consistent by construction.
    FcsModel {
        hidden_dim: dh,
        output_dim: dout,
        gamma: SuperOperator::from_kraus(dh, dout * dh, kraus)
            .expect("per-outcome Kraus stacks have consistent shapes"),
        observable: HermitianOperator::from_hermitian_part(&a),
        tol: *instr.tolerances(),
    }
}

/// Converts a joint-register model back into an instrument. Outcomes are the
/// distinct eigenvalues of the observable (merged within
/// `tol.eig_equality` relative to the eigenvalue scale); the outcome map for
/// eigenvalue `x` compresses Γ through the matching spectral subspace. The
/// instrument starts from the maximally mixed state.
pub fn from_fcs(model: &FcsModel) -> Result<Instrument, FcsError> {
    let dh = model.hidden_dim;
    let dout = model.output_dim;
    let e = linalg::herm_eig(model.observable.mat())?;
    let scale = e
        .values
        .iter()
        .fold(1.0f64, |acc, &v| acc.max(v.abs()));
    let merge = model.tol.eig_equality * scale;

    // Walk the ascending eigenvalues and group values that coincide within
    // the merge band; each group keeps the member columns of its subspace.
    let mut clusters: Vec<(f64, Vec<usize>)> = Vec::new();
    for (col, &v) in e.values.iter().enumerate() {
        match clusters.last_mut() {
            Some((sum, members)) if (v - *sum / members.len() as f64).abs() <= merge => {
                *sum += v;
                members.push(col);
            }
            _ => clusters.push((v, vec![col])),
        }
    }

    let gk = model
        .gamma
        .kraus()
        .expect("FcsModel keeps gamma in Kraus form");
    let mut raw: Vec<(f64, Vec<CMat>)> = Vec::with_capacity(clusters.len());
    let mut largest: f64 = 0.0;
    for (sum, members) in &clusters {
        let value = sum / members.len() as f64;
        let mut kraus = Vec::new();
        for &col in members {
            for g in gk {
                // B = (⟨v| ⊗ I) G compresses the output register onto the
                // eigenvector v sitting in column `col`.
                let b = Mat::from_fn(dh, dh, |i, j| {
                    let mut s = C64::ZERO;
                    for row in 0..dout {
                        s += e.vectors[(row, col)].conj() * g[(row * dh + i, j)];
                    }
                    s
                });
                largest = largest.max(max_entry(&b));
                kraus.push(b);
            }
        }
        raw.push((value, kraus));
    }

    let floor = NEGLIGIBLE_KRAUS * largest;
    let mut outcomes = Vec::with_capacity(raw.len());
    for (index, (value, kraus)) in raw.into_iter().enumerate() {
        let mut kept: Vec<CMat> = kraus
            .into_iter()
            .filter(|b| max_entry(b) > floor)
            .collect();
        if kept.is_empty() {
            // The spectral subspace is never populated by Γ; keep the outcome
            // with a zero map so the eigenvalue stays visible.
            kept.push(CMat::zeros(dh, dh));
        }
        outcomes.push(Outcome::new(format!("e{index}"), value, kept));
    }
    Ok(Instrument::new(dh, outcomes, None, &model.tol)?)
}

/// Selection map for one output basis vector: Kraus elements
/// `B_m = (⟨k| ⊗ I) G_m`, read directly off the row block `k`.
fn basis_selection(gk: &[CMat], k: usize, dh: usize) -> Vec<CMat> {
    gk.iter()
        .map(|g| Mat::from_fn(dh, dh, |i, j| g[(k * dh + i, j)]))
        .collect()
}

fn apply_kraus_family(kraus: &[CMat], sigma: &CMat) -> CMat {
    let mut out = CMat::zeros(sigma.nrows(), sigma.ncols());
    for b in kraus {
        out += b * sigma * linalg::dagger(b);
    }
    out
}

fn max_entry(m: &CMat) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            best = best.max(m[(i, j)].norm());
        }
    }
    best
}

/// Exact `Pr{Xⁿ > a}` (strict, the spectral-projection event convention)
/// computed on the joint-register side: the n-step chain state is built
/// blockwise over output eigenbasis strings, collapsing strings with equal
/// value sums. Cost grows with the number of distinct sums, so this is meant
/// for short chains.
pub fn lpt_tail_probability(
    model: &FcsModel,
    rho: &DensityOperator,
    n: usize,
    a: f64,
) -> Result<f64, FcsError> {
    assert!(n >= 1, "chain length must be at least 1");
    model.check_state(rho)?;
    let dh = model.hidden_dim;
    let e = linalg::herm_eig(model.observable.mat())?;
    let gk = model
        .gamma
        .kraus()
        .expect("FcsModel keeps gamma in Kraus form");
    // Per-slot selection maps in the observable eigenbasis, one per
    // eigenvector, carrying that eigenvector's eigenvalue.
    let slots: Vec<(i64, Vec<CMat>)> = (0..model.output_dim)
        .map(|col| {
            let b: Vec<CMat> = gk
                .iter()
                .map(|g| {
                    Mat::from_fn(dh, dh, |i, j| {
                        let mut s = C64::ZERO;
                        for row in 0..model.output_dim {
                            s += e.vectors[(row, col)].conj() * g[(row * dh + i, j)];
                        }
                        s
                    })
                })
                .collect();
            (key_of(e.values[col]), b)
        })
        .collect();

    let mut layer: BTreeMap<i64, CMat> = BTreeMap::new();
    layer.insert(0, rho.mat().clone());
    for _ in 0..n {
        let mut next: BTreeMap<i64, CMat> = BTreeMap::new();
        for (key, block) in &layer {
            for (value_key, kraus) in &slots {
                let out = apply_kraus_family(kraus, block);
                let dst = next
                    .entry(key + value_key)
                    .or_insert_with(|| CMat::zeros(dh, dh));
                *dst += out;
            }
        }
        layer = next;
    }
    Ok(layer
        .iter()
        .filter(|(key, _)| key_to_sum(**key) / n as f64 > a)
        .map(|(_, block)| linalg::trace(block).re)
        .sum())
}

/// Joint law of the first n output-register measurements (computational
/// basis): every outcome string with its probability, in lexicographic
/// order. Exponential in n; meant for short chains.
pub fn joint_distribution(
    model: &FcsModel,
    rho: &DensityOperator,
    n: usize,
) -> Result<Vec<(Vec<usize>, f64)>, FcsError> {
    model.check_state(rho)?;
    let strings = (model.output_dim as u128)
        .checked_pow(n as u32)
        .unwrap_or(u128::MAX);
    if strings > ENUMERATION_CAP {
        return Err(FcsError::EnumerationCap {
            strings,
            cap: ENUMERATION_CAP,
        });
    }
    let dh = model.hidden_dim;
    let gk = model
        .gamma
        .kraus()
        .expect("FcsModel keeps gamma in Kraus form");
    let slots: Vec<Vec<CMat>> = (0..model.output_dim)
        .map(|k| basis_selection(gk, k, dh))
        .collect();

    let mut results = Vec::with_capacity(strings as usize);
    // Depth-first over strings, reusing the partial chain states on the way
    // down so each prefix is applied once.
    let mut stack: Vec<(Vec<usize>, CMat)> = vec![(Vec::new(), rho.mat().clone())];
    while let Some((prefix, block)) = stack.pop() {
        if prefix.len() == n {
            results.push((prefix, linalg::trace(&block).re));
            continue;
        }
        // Push in reverse so strings pop in lexicographic order.
        for k in (0..model.output_dim).rev() {
            let mut next = prefix.clone();
            next.push(k);
            stack.push((next, apply_kraus_family(&slots[k], &block)));
        }
    }
    Ok(results)
}
