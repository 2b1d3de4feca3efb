//! Perron–Frobenius eigendata and irreducibility/primitivity classification.
//!
//! For a completely positive map Λ with spectral radius r, irreducibility is
//! decided through the eigenvector criterion: Λ and its adjoint must both
//! have a strictly positive-definite eigenvector at r, and r must have
//! geometric multiplicity one. Primitivity applies the same criterion to the
//! two-fold tensor power Λ⊗Λ at r². A randomized positivity-improving
//! cross-check — applying (ι + Λ)^{d²−1} to random pure states — corroborates
//! or refutes the verdict without being the decision rule.
//!
//! Eigendata normalization: the right eigenvector ρ_θ is a density operator
//! (trace one); the left eigenvector A_θ is rescaled so its minimum
//! eigenvalue is exactly one, making both correction exponents
//! log Tr A_θρ ≥ 0 and log Tr A_θρ − log‖A_θ‖ ≤ 0 by construction.

use crate::instrument::{Instrument, InstrumentError};
use crate::linalg::{self, eig, CMat, C64};
use crate::operator::{random_pure_state, DensityOperator, HermitianOperator};
use crate::superop::SuperOperator;
use crate::tol::Tolerances;
use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Errors from eigendata extraction and classification.
#[derive(Debug, Error)]
pub enum PerronError {
    #[error("map is not irreducible: eigenvector positivity margin {margin:.3e} (side: {side})")]
    NotIrreducible { margin: f64, side: &'static str },
    #[error("degenerate peripheral eigenvalue: multiplicity {multiplicity} at spectral radius {radius:.6e}")]
    DegeneratePeripheral { multiplicity: usize, radius: f64 },
    #[error("no real peripheral eigenvalue found near spectral radius {radius:.6e}")]
    NoPerronEigenvalue { radius: f64 },
    #[error("indeterminate positivity margin {margin:.3e} within tolerance band {band:.1e} ({context})")]
    IndeterminateMargin {
        margin: f64,
        band: f64,
        context: &'static str,
    },
    #[error("map is not completely positive: Choi minimum eigenvalue {min_eig:.3e}")]
    NotCompletelyPositive { min_eig: f64 },
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Operator(#[from] crate::operator::OperatorError),
    #[error(transparent)]
    SuperOp(#[from] crate::superop::SuperOpError),
}

/// Perron–Frobenius eigendata of a tilted map at one tilt θ.
#[derive(Clone, Debug)]
pub struct PerronFrobeniusData {
    pub theta: f64,
    /// Perron–Frobenius eigenvalue λ_θ (= spectral radius).
    pub lambda: f64,
    /// Right eigenvector ρ_θ, normalized to trace one.
    pub rho: DensityOperator,
    /// Left eigenvector A_θ, rescaled so min-eig(A_θ) = 1.
    pub a_op: HermitianOperator,
    /// Operator norm ‖A_θ‖ (largest eigenvalue; ≥ 1).
    pub a_norm: f64,
    /// 1 − |second-largest eigenvalue modulus|/λ; 1 when the spectrum is a
    /// single point. Diagnostic only.
    pub spectral_gap: f64,
}

/// Positivity and multiplicity analysis of one map at its spectral radius.
#[derive(Clone, Debug)]
pub struct LevelDiagnostics {
    pub spectral_radius: f64,
    /// All eigenvalues of modulus within the clustering tolerance of r.
    pub peripheral_eigenvalues: Vec<C64>,
    /// Geometric multiplicity of the eigenvalue r itself.
    pub fixed_space_dim: usize,
    /// min-eig/max-eig of the hermitized right eigenvector at r.
    pub right_margin: f64,
    /// Same for the adjoint map's eigenvector.
    pub left_margin: f64,
}

/// Classification verdict with the evidence it rests on.
#[derive(Clone, Debug)]
pub struct Classification {
    pub irreducible: bool,
    pub primitive: bool,
    /// Analysis of the map itself.
    pub base: LevelDiagnostics,
    /// Analysis of the two-fold tensor power at r².
    pub doubled: LevelDiagnostics,
}

/// Report from the randomized positivity-improving cross-check.
#[derive(Clone, Debug)]
pub struct CrosscheckReport {
    pub power: usize,
    pub trials: usize,
    /// Smallest relative output eigenvalue (min-eig/max-eig) over all trials.
    pub min_margin: f64,
    /// True when some trial produced an output that is not strictly
    /// positive, refuting irreducibility of the checked map.
    pub refuted: bool,
}

struct LevelAnalysis {
    radius: f64,
    peripheral: Vec<C64>,
    cluster_dim: usize,
    right: CMat,
    right_margin: f64,
    left: CMat,
    left_margin: f64,
}

impl LevelAnalysis {
    fn diagnostics(&self) -> LevelDiagnostics {
        LevelDiagnostics {
            spectral_radius: self.radius,
            peripheral_eigenvalues: self.peripheral.clone(),
            fixed_space_dim: self.cluster_dim,
            right_margin: self.right_margin,
            left_margin: self.left_margin,
        }
    }

    fn strictly_positive(&self, band: f64) -> Result<bool, PerronError> {
        for (margin, context) in [
            (self.right_margin, "right eigenvector"),
            (self.left_margin, "left eigenvector"),
        ] {
            if margin > 0.0 && margin <= band {
                return Err(PerronError::IndeterminateMargin {
                    margin,
                    band,
                    context,
                });
            }
        }
        Ok(self.right_margin > band && self.left_margin > band)
    }
}

/// Hermitizes a candidate eigenvector: of the Hermitian and anti-Hermitian
/// parts, keeps the larger one and fixes its sign so the trace is positive.
fn hermitize(x: &CMat) -> CMat {
    let h = linalg::hermitian_part(x);
    let g = linalg::antihermitian_part(x);
    let mut pick = if h.norm_l2() >= g.norm_l2() { h } else { g };
    let tr = linalg::trace(&pick).re;
    if tr < 0.0 {
        pick = linalg::scale(linalg::cr(-1.0), &pick);
    }
    pick
}

/// min-eig/max-|eig| of a Hermitian matrix; ≤ 0 when indefinite.
fn positivity_margin(h: &CMat) -> Result<f64, PerronError> {
    let (lo, hi) = linalg::herm_eig_range(h)?;
    let scale = hi.abs().max(lo.abs());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(lo / scale)
}

/// Eigenvector of `m` for the eigenvalue cluster at the real point `radius`,
/// with the cluster's geometric multiplicity.
fn cluster_eigenvector(
    m: &CMat,
    radius: f64,
    tol: &Tolerances,
) -> Result<(CMat, usize), PerronError> {
    let decomposition = eig(m)?;
    let width = tol.eig_equality * radius.max(f64::MIN_POSITIVE);
    let cluster: Vec<usize> = (0..decomposition.values.len())
        .filter(|&i| (decomposition.values[i] - linalg::cr(radius)).norm() <= width)
        .collect();
    if cluster.is_empty() {
        return Err(PerronError::NoPerronEigenvalue { radius });
    }
    let span = Mat::from_fn(m.nrows(), cluster.len(), |i, j| {
        decomposition.vectors[(i, cluster[j])]
    });
    let dim = if cluster.len() == 1 {
        1
    } else {
        linalg::numerical_rank(&span, tol.eig_equality)?
    };
    // Representative: the cluster member whose eigenvalue is closest to r.
    let best = cluster
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let da = (decomposition.values[a] - linalg::cr(radius)).norm();
            let db = (decomposition.values[b] - linalg::cr(radius)).norm();
            da.total_cmp(&db)
        })
        .unwrap();
    let vec_dim = (m.nrows() as f64).sqrt().round() as usize;
    let col = faer::Col::from_fn(m.nrows(), |i| decomposition.vectors[(i, best)]);
    Ok((linalg::unvec(&col, vec_dim, vec_dim), dim))
}

/// Full analysis of one map at its spectral radius: peripheral spectrum,
/// multiplicity of r, hermitized eigenvectors and their margins.
fn analyze_level(matrix: &CMat, tol: &Tolerances) -> Result<LevelAnalysis, PerronError> {
    let decomposition = eig(matrix)?;
    let radius = decomposition
        .values
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    if radius < 1e-300 {
        return Err(PerronError::NoPerronEigenvalue { radius });
    }
    let peripheral: Vec<C64> = decomposition
        .values
        .iter()
        .copied()
        .filter(|v| v.norm() >= radius * (1.0 - tol.eig_equality))
        .collect();
    let (right_raw, cluster_dim) = cluster_eigenvector(matrix, radius, tol)?;
    let right = hermitize(&right_raw);
    let right_margin = positivity_margin(&right)?;
    let (left_raw, _) = cluster_eigenvector(&linalg::dagger(matrix), radius, tol)?;
    let left = hermitize(&left_raw);
    let left_margin = positivity_margin(&left)?;
    Ok(LevelAnalysis {
        radius,
        peripheral,
        cluster_dim,
        right,
        right_margin,
        left,
        left_margin,
    })
}

fn ensure_cp(m: &SuperOperator, tol: &Tolerances) -> Result<(), PerronError> {
    if m.kraus().is_some() {
        return Ok(());
    }
    let choi = m.choi();
    let (lo, hi) = linalg::herm_eig_range(&linalg::hermitian_part(&choi))?;
    if lo < -tol.psd * hi.abs().max(1.0) {
        return Err(PerronError::NotCompletelyPositive { min_eig: lo });
    }
    Ok(())
}

/// Classifies a completely positive map as irreducible and/or primitive via
/// the eigenvector criterion on the map and on its two-fold tensor power.
pub fn classify(m: &SuperOperator, tol: &Tolerances) -> Result<Classification, PerronError> {
    ensure_cp(m, tol)?;
    let band = tol.positivity_band;

    let base = analyze_level(m.matrix(), tol)?;
    let base_positive = base.strictly_positive(band)?;
    let irreducible = base_positive && base.cluster_dim == 1;

    let squared = m.tensor(m);
    let doubled = analyze_level(squared.matrix(), tol)?;
    let doubled_positive = if irreducible {
        doubled.strictly_positive(band)?
    } else {
        // Verdict already fixed; margins stay as diagnostics even inside
        // the indeterminate band.
        doubled.right_margin > band && doubled.left_margin > band
    };
    let primitive = irreducible && doubled_positive && doubled.cluster_dim == 1;

    Ok(Classification {
        irreducible,
        primitive,
        base: base.diagnostics(),
        doubled: doubled.diagnostics(),
    })
}

/// Perron–Frobenius eigendata of the tilted map Λ_θ with the trace-one /
/// min-eigenvalue-one normalizations. At θ = 0 the eigenvalue and left
/// eigenvector are pinned to their exact values (1 and I): the total map is
/// trace-preserving, so its adjoint fixes the identity exactly.
pub fn pf_eigendata(instr: &Instrument, theta: f64) -> Result<PerronFrobeniusData, PerronError> {
    let tol = *instr.tolerances();
    let map = instr.tilted_map(theta)?;
    let level = analyze_level(map.matrix(), &tol)?;
    if level.cluster_dim > 1 {
        return Err(PerronError::DegeneratePeripheral {
            multiplicity: level.cluster_dim,
            radius: level.radius,
        });
    }
    if level.right_margin <= tol.positivity_band {
        return Err(PerronError::NotIrreducible {
            margin: level.right_margin,
            side: "right",
        });
    }
    if level.left_margin <= tol.positivity_band {
        return Err(PerronError::NotIrreducible {
            margin: level.left_margin,
            side: "left",
        });
    }

    let d = instr.dim();
    let tr = linalg::trace(&level.right).re;
    let rho_mat = linalg::scale(linalg::cr(1.0 / tr), &level.right);
    let rho = DensityOperator::new(rho_mat, &tol)?;

    let (lambda, a_op, a_norm) = if theta == 0.0 {
        (1.0, HermitianOperator::identity(d), 1.0)
    } else {
        let (lo, hi) = linalg::herm_eig_range(&level.left)?;
        let a_mat = linalg::scale(linalg::cr(1.0 / lo), &level.left);
        (
            level.radius,
            HermitianOperator::from_hermitian_part(&a_mat),
            hi / lo,
        )
    };

    // Largest modulus strictly below the peripheral cluster.
    let sub = eig(map.matrix())?
        .values
        .iter()
        .map(|v| v.norm())
        .filter(|&x| x < level.radius * (1.0 - tol.eig_equality))
        .fold(0.0, f64::max);
    let spectral_gap = 1.0 - sub / level.radius;

    Ok(PerronFrobeniusData {
        theta,
        lambda,
        rho,
        a_op,
        a_norm,
        spectral_gap,
    })
}

/// Applies (ι + Λ)^{d²−1} to random pure states; any output that is not
/// strictly positive refutes irreducibility of Λ.
pub fn crosscheck_positivity_improving(
    m: &SuperOperator,
    trials: usize,
    seed: u64,
) -> Result<CrosscheckReport, PerronError> {
    let d = m.dim().expect("square map");
    let power = d * d - 1;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut min_margin = f64::INFINITY;
    for _ in 0..trials {
        let sigma = random_pure_state(d, &mut rng);
        let margin = positivity_improving_margin(m, sigma.mat(), power)?;
        min_margin = min_margin.min(margin);
    }
    Ok(CrosscheckReport {
        power,
        trials,
        min_margin,
        refuted: min_margin <= 1e-10,
    })
}

/// Relative minimum eigenvalue of (ι + Λ)^power applied to one state.
pub fn positivity_improving_margin(
    m: &SuperOperator,
    sigma: &CMat,
    power: usize,
) -> Result<f64, PerronError> {
    let d2 = m.matrix().nrows();
    let step = linalg::eye(d2) + m.matrix();
    let mut v = linalg::vec_of(sigma);
    for _ in 0..power {
        v = &step * &v;
    }
    let d = (d2 as f64).sqrt().round() as usize;
    let out = linalg::hermitian_part(&linalg::unvec(&v, d, d));
    positivity_margin(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::{outcome_from_single_kraus, Instrument, Outcome};
    use crate::linalg::{cr, max_abs_diff};

    const TOL: Tolerances = Tolerances::DEFAULT;

    fn shift_instrument() -> Instrument {
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

    fn dephasing_instrument() -> Instrument {
        let k0 = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 0 { cr(1.0) } else { C64::ZERO });
        let k1 = Mat::from_fn(2, 2, |i, j| if i == 1 && j == 1 { cr(1.0) } else { C64::ZERO });
        Instrument::new(
            2,
            vec![
                outcome_from_single_kraus("p0", 0.0, k0),
                outcome_from_single_kraus("p1", 1.0, k1),
            ],
            None,
            &TOL,
        )
        .unwrap()
    }

    fn rotation_mixture_instrument() -> Instrument {
        // Two unitary conjugations about different axes; primitive.
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
    fn shift_is_irreducible_not_primitive() {
        let class = classify(&shift_instrument().total_map(), &TOL).unwrap();
        assert!(class.irreducible);
        assert!(!class.primitive);
        assert_eq!(class.base.peripheral_eigenvalues.len(), 3);
        assert_eq!(class.base.fixed_space_dim, 1);
        assert!(class.doubled.fixed_space_dim > 1);
    }

    #[test]
    fn dephasing_is_reducible() {
        let class = classify(&dephasing_instrument().total_map(), &TOL).unwrap();
        assert!(!class.irreducible);
        assert!(!class.primitive);
        assert_eq!(class.base.fixed_space_dim, 2);
    }

    #[test]
    fn rotation_mixture_is_primitive() {
        let class = classify(&rotation_mixture_instrument().total_map(), &TOL).unwrap();
        assert!(class.irreducible);
        assert!(class.primitive);
    }

    #[test]
    fn scalar_map_is_primitive() {
        let instr =
            crate::instrument::iid_instrument(&[0.5, 0.5], &[0.0, 1.0], &["0", "1"], &TOL).unwrap();
        let class = classify(&instr.total_map(), &TOL).unwrap();
        assert!(class.irreducible && class.primitive);
    }

    #[test]
    fn adjoint_classification_agrees() {
        for instr in [shift_instrument(), rotation_mixture_instrument()] {
            let m = instr.total_map();
            let a = classify(&m, &TOL).unwrap();
            let b = classify(&m.adjoint(), &TOL).unwrap();
            assert_eq!(a.irreducible, b.irreducible);
            assert_eq!(a.primitive, b.primitive);
        }
    }

    #[test]
    fn positive_reweighting_preserves_classification() {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let shift = shift_instrument();
        for _ in 0..5 {
            let weights: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.1).collect();
            let mut m = shift.outcome_map(0).scale(weights[0]);
            for i in 1..3 {
                m = m.add(&shift.outcome_map(i).scale(weights[i])).unwrap();
            }
            let class = classify(&m, &TOL).unwrap();
            assert!(class.irreducible);
            assert!(!class.primitive);
        }
    }

    #[test]
    fn eigendata_at_zero_is_pinned() {
        let data = pf_eigendata(&shift_instrument(), 0.0).unwrap();
        assert_eq!(data.lambda, 1.0);
        assert_eq!(data.a_norm, 1.0);
        assert_eq!(
            max_abs_diff(data.a_op.mat(), &linalg::eye(3)),
            0.0
        );
        // Stationary state of the shift is I/3.
        assert!(max_abs_diff(data.rho.mat(), &linalg::scale(cr(1.0 / 3.0), &linalg::eye(3))) < 1e-9);
    }

    #[test]
    fn shift_tilted_eigenvalue_is_exponential_mean() {
        let data = pf_eigendata(&shift_instrument(), 1.0).unwrap();
        assert!((data.lambda - std::f64::consts::E).abs() < 1e-8);
        // Eigenvector residual: Λ_θ(ρ_θ) = λρ_θ.
        let map = shift_instrument().tilted_map(1.0).unwrap();
        let applied = map.apply_mat(data.rho.mat());
        let scaled = linalg::scale(cr(data.lambda), data.rho.mat());
        assert!(max_abs_diff(&applied, &scaled) < 1e-8);
    }

    #[test]
    fn eigendata_invariants_on_primitive_map() {
        let instr = rotation_mixture_instrument();
        let data = pf_eigendata(&instr, 0.7).unwrap();
        let map = instr.tilted_map(0.7).unwrap();
        // Right residual.
        let applied = map.apply_mat(data.rho.mat());
        assert!(max_abs_diff(&applied, &linalg::scale(cr(data.lambda), data.rho.mat())) < 1e-8);
        // Left residual through the adjoint.
        let back = map.adjoint().apply_mat(data.a_op.mat());
        assert!(max_abs_diff(&back, &linalg::scale(cr(data.lambda), data.a_op.mat())) < 1e-8);
        // Normalizations.
        let eigs = data.a_op.eigenvalues().unwrap();
        assert!((eigs[0] - 1.0).abs() < 1e-10);
        assert!((data.a_norm - eigs[eigs.len() - 1]).abs() < 1e-10);
        assert!(data.rho.min_eigenvalue().unwrap() > 0.0);
    }

    #[test]
    fn eigendata_rejects_reducible_map() {
        let result = pf_eigendata(&dephasing_instrument(), 0.3);
        assert!(matches!(
            result,
            Err(PerronError::DegeneratePeripheral { .. }) | Err(PerronError::NotIrreducible { .. })
        ));
    }

    #[test]
    fn crosscheck_corroborates_shift_irreducibility() {
        let report =
            crosscheck_positivity_improving(&shift_instrument().total_map(), 50, 11).unwrap();
        assert!(!report.refuted, "min margin {}", report.min_margin);
        assert_eq!(report.power, 8);
    }

    #[test]
    fn crosscheck_refutes_shift_primitivity_on_doubled_map() {
        let m = shift_instrument().total_map();
        let squared = m.tensor(&m);
        // |0⟩⟨0| ⊗ |0⟩⟨0| on the doubled space stays rank-deficient.
        let basis = DensityOperator::basis_state(9, 0);
        let margin = positivity_improving_margin(&squared, basis.mat(), 80).unwrap();
        assert!(margin <= 1e-10, "margin {margin}");
    }

    #[test]
    fn crosscheck_refutes_identity_map() {
        let ident = SuperOperator::identity(2);
        let report = crosscheck_positivity_improving(&ident, 10, 3).unwrap();
        assert!(report.refuted);
    }

    #[test]
    fn shift_orbit_is_periodic_not_convergent() {
        let m = shift_instrument().total_map();
        let start = DensityOperator::basis_state(3, 0);
        let once = m.apply_mat(start.mat());
        let thrice = m.apply_iterated(start.mat(), 3).unwrap();
        assert!(max_abs_diff(&thrice, start.mat()) < 1e-12);
        assert!(max_abs_diff(&once, start.mat()) > 0.5);
    }
}
