//! Structural invariants on randomized two-outcome qubit instruments:
//! probability normalization, tail complementarity, the finite-n CGF
//! sandwich, and the joint-register round trip. Spectrally disconnected
//! draws (the rotation angle can land arbitrarily close to zero) are
//! discarded rather than forced.

use faer::Mat;
use proptest::prelude::*;
use qhmm_core::cgf::CgfProfile;
use qhmm_core::fcs::{from_fcs, to_fcs};
use qhmm_core::instrument::{Instrument, Outcome};
use qhmm_core::linalg::{c, cr, CMat, C64};
use qhmm_core::operator::DensityOperator;
use qhmm_core::simulate::{exact_cgf, exact_sum_distribution};
use qhmm_core::{Direction, Tolerances};

/// Rz(β)·Rx(α) — a generic single-qubit unitary up to global phase.
fn rotation(alpha: f64, beta: f64) -> CMat {
    let (ca, sa) = ((alpha / 2.0).cos(), (alpha / 2.0).sin());
    let rx = Mat::from_fn(2, 2, |i, j| if i == j { cr(ca) } else { c(0.0, -sa) });
    let rz = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => C64::from_polar(1.0, -beta / 2.0),
        (1, 1) => C64::from_polar(1.0, beta / 2.0),
        _ => C64::ZERO,
    });
    &rz * &rx
}

/// Rotate, then apply a two-outcome diagonal weak measurement. The Kraus
/// completeness sum telescopes to the identity for every parameter choice,
/// so each draw is a valid instrument by construction.
fn random_instrument(w0: f64, w1: f64, alpha: f64, beta: f64, x0: f64, x1: f64) -> Instrument {
    let u = rotation(alpha, beta);
    let d = |a: f64, b: f64| {
        Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => cr(a.sqrt()),
            (1, 1) => cr(b.sqrt()),
            _ => C64::ZERO,
        })
    };
    let k0 = &d(w0, w1) * &u;
    let k1 = &d(1.0 - w0, 1.0 - w1) * &u;
    let outcomes = vec![
        Outcome::new("a", x0, vec![k0]),
        Outcome::new("b", x1, vec![k1]),
    ];
    Instrument::new(2, outcomes, None, &Tolerances::DEFAULT).expect("construction is complete")
}

fn bloch_state(polar: f64, azim: f64) -> DensityOperator {
    DensityOperator::from_ket(&[
        cr((polar / 2.0).cos()),
        C64::from_polar((polar / 2.0).sin(), azim),
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn probabilities_form_a_distribution(
        w0 in 0.05f64..0.95, w1 in 0.05f64..0.95,
        alpha in 0.1f64..3.0, beta in 0.0f64..3.0,
        x0 in -2.0f64..2.0, x1 in -2.0f64..2.0,
        polar in 0.0f64..3.1, azim in 0.0f64..6.2,
    ) {
        let instr = random_instrument(w0, w1, alpha, beta, x0, x1);
        let rho = bloch_state(polar, azim);
        let probs = instr.probabilities(rho.mat());
        let total: f64 = probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "total {total}");
        prop_assert!(probs.iter().all(|&p| p >= -1e-15), "{probs:?}");
    }

    #[test]
    fn strict_upper_and_inclusive_lower_tails_partition_unity(
        w0 in 0.05f64..0.95, w1 in 0.05f64..0.95,
        alpha in 0.1f64..3.0, beta in 0.0f64..3.0,
        x0 in -2.0f64..2.0, x1 in -2.0f64..2.0,
    ) {
        let instr = random_instrument(w0, w1, alpha, beta, x0, x1);
        let n = 4usize;
        let dist = exact_sum_distribution(&instr, instr.initial_state(), n).unwrap();
        // Mean-axis positions of the atoms: the tails take mean levels.
        let means: Vec<f64> = dist
            .probabilities()
            .iter()
            .map(|&(s, _)| s / n as f64)
            .collect();
        let mut levels = vec![means[0] - 0.3, means[means.len() - 1] + 0.3];
        levels.extend(means.iter().copied());
        for w in means.windows(2) {
            levels.push(0.5 * (w[0] + w[1]));
        }
        for a in levels {
            let split = dist.strict_upper_tail(a) + dist.tail_probability(a, Direction::Lower);
            prop_assert!((split - 1.0).abs() < 1e-11, "a {a}: split {split}");
        }
    }

    #[test]
    fn sandwich_brackets_exact_cgf(
        w0 in 0.05f64..0.95, w1 in 0.05f64..0.95,
        alpha in 0.1f64..3.0, beta in 0.0f64..3.0,
        x0 in -2.0f64..2.0, x1 in -2.0f64..2.0,
        theta in -1.0f64..1.0,
    ) {
        let instr = random_instrument(w0, w1, alpha, beta, x0, x1);
        let Ok(profile) = CgfProfile::new(instr.clone()) else { return Ok(()); };
        for n in [1usize, 3, 5] {
            let Ok((lo, hi)) = profile.finite_n_cgf_bounds(theta, n) else { return Ok(()); };
            let exact = exact_cgf(&instr, instr.initial_state(), theta, n).unwrap();
            prop_assert!(
                lo - 1e-9 <= exact && exact <= hi + 1e-9,
                "theta {theta} n {n}: {lo} ≤ {exact} ≤ {hi}"
            );
        }
    }

    #[test]
    fn joint_register_round_trip_preserves_tails(
        w0 in 0.05f64..0.95, w1 in 0.05f64..0.95,
        alpha in 0.1f64..3.0, beta in 0.0f64..3.0,
        x0 in -2.0f64..2.0, x1 in -2.0f64..2.0,
    ) {
        let instr = random_instrument(w0, w1, alpha, beta, x0, x1);
        let back = from_fcs(&to_fcs(&instr)).unwrap();
        let rho = instr.initial_state().clone();
        let n = 3usize;
        let original = exact_sum_distribution(&instr, &rho, n).unwrap();
        let returned = exact_sum_distribution(&back, &rho, n).unwrap();
        let means: Vec<f64> = original
            .probabilities()
            .iter()
            .map(|&(s, _)| s / n as f64)
            .collect();
        let mut levels = vec![means[0] - 0.3, means[means.len() - 1] + 0.3];
        levels.extend(means.iter().copied());
        for w in means.windows(2) {
            levels.push(0.5 * (w[0] + w[1]));
        }
        for a in levels {
            for dir in [Direction::Upper, Direction::Lower] {
                let p0 = original.tail_probability(a, dir);
                let p1 = returned.tail_probability(a, dir);
                prop_assert!((p0 - p1).abs() < 1e-10, "a {a} {dir:?}: {p0} vs {p1}");
            }
        }
    }
}
