//! Canonical instruments used across the test suite and exposed by the CLI
//! under `fixture:<name>` pseudo-paths.
//!
//! The six fixtures span the classification landscape:
//!
//! | name                    | d | irreducible | primitive | notes                              |
//! |-------------------------|---|-------------|-----------|------------------------------------|
//! | `iid-coin`              | 1 | yes         | yes       | fair coin, values {0, 1}           |
//! | `shift-d3`              | 3 | yes         | no        | deterministic cycle, affine CGF    |
//! | `classical-chain`       | 2 | yes         | yes       | 2-state chain, jump indicator      |
//! | `qubit-unitary-mixture` | 2 | yes         | yes       | unital; i.i.d. outcome law, ±1     |
//! | `block-diagonal`        | 2 | no          | no        | projective dephasing, two sectors  |
//! | `measured-qubit`        | 2 | yes         | yes       | rotation + weak measurement;       |
//! |                         |   |             |           | genuinely nonzero correction terms |

use crate::instrument::{iid_instrument, outcome_from_single_kraus, Instrument, Outcome};
use crate::linalg::{self, cr, CMat, C64};
use crate::tol::Tolerances;
use faer::Mat;

const TOL: Tolerances = Tolerances::DEFAULT;

/// Names of every bundled fixture, in canonical order.
pub const NAMES: [&str; 6] = [
    "iid-coin",
    "shift-d3",
    "classical-chain",
    "qubit-unitary-mixture",
    "block-diagonal",
    "measured-qubit",
];

/// Looks a fixture up by its canonical name.
pub fn by_name(name: &str) -> Option<Instrument> {
    match name {
        "iid-coin" => Some(iid_coin()),
        "shift-d3" => Some(shift_d3()),
        "classical-chain" => Some(classical_chain()),
        "qubit-unitary-mixture" => Some(qubit_unitary_mixture()),
        "block-diagonal" => Some(block_diagonal()),
        "measured-qubit" => Some(measured_qubit()),
        _ => None,
    }
}

/// All fixtures with their names, in canonical order.
pub fn all() -> Vec<(&'static str, Instrument)> {
    NAMES
        .iter()
        .map(|&n| (n, by_name(n).expect("listed fixture exists")))
        .collect()
}

/// Fair coin: dimension-1 instrument, values {0, 1}.
pub fn iid_coin() -> Instrument {
    iid_instrument(&[0.5, 0.5], &[0.0, 1.0], &["0", "1"], &TOL)
        .expect("coin fixture is valid")
}

/// Deterministic cyclic shift on three sites: outcome i has the single
/// Kraus operator |i⟩⟨(i+2) mod 3| and value i. Irreducible but not
/// primitive; the observed sum grows by exactly 0+1+2 per period, so the
/// CGF is the line φ(θ) = θ.
pub fn shift_d3() -> Instrument {
    let outcomes = (0..3usize)
        .map(|i| {
            let k = Mat::from_fn(3, 3, |r, col| {
                if r == i && col == (i + 2) % 3 {
                    cr(1.0)
                } else {
                    C64::ZERO
                }
            });
            outcome_from_single_kraus(i.to_string(), i as f64, k)
        })
        .collect();
    Instrument::new(3, outcomes, None, &TOL).expect("shift fixture is valid")
}

/// Two-state classical Markov chain with column-stochastic transition
/// matrix [[0.9, 0.2], [0.1, 0.8]], observed through the jump indicator:
/// outcome (i→j) has Kraus √T[j,i]·|j⟩⟨i| and value 1 iff i ≠ j.
pub fn classical_chain() -> Instrument {
    let t: [[f64; 2]; 2] = [[0.9, 0.2], [0.1, 0.8]]; // t[j][i] = P(i → j)
    let mut outcomes = Vec::with_capacity(4);
    for i in 0..2usize {
        for j in 0..2usize {
            let k = Mat::from_fn(2, 2, |r, col| {
                if r == j && col == i {
                    cr(t[j][i].sqrt())
                } else {
                    C64::ZERO
                }
            });
            let value = if i == j { 0.0 } else { 1.0 };
            outcomes.push(outcome_from_single_kraus(format!("{i}to{j}"), value, k));
        }
    }
    Instrument::new(2, outcomes, None, &TOL).expect("chain fixture is valid")
}

fn rx(angle: f64) -> CMat {
    let (c_, s_) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    Mat::from_fn(2, 2, |i, j| {
        if i == j {
            cr(c_)
        } else {
            C64::new(0.0, -s_)
        }
    })
}

fn rz(angle: f64) -> CMat {
    Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => C64::from_polar(1.0, -angle / 2.0),
        (1, 1) => C64::from_polar(1.0, angle / 2.0),
        _ => C64::ZERO,
    })
}

/// Random unitary channel: apply Rx(1.2) with probability 0.6 (value +1)
/// or Rz(0.7) with probability 0.4 (value −1) and record which. Unital, so
/// the outcome law is i.i.d. ±1 with mean 0.2 and both correction
/// exponents vanish identically; the hidden state still mixes.
pub fn qubit_unitary_mixture() -> Instrument {
    let q: f64 = 0.6;
    let outcomes = vec![
        Outcome::new("u0", 1.0, vec![linalg::scale(cr(q.sqrt()), &rx(1.2))]),
        Outcome::new(
            "u1",
            -1.0,
            vec![linalg::scale(cr((1.0 - q).sqrt()), &rz(0.7))],
        ),
    ];
    Instrument::new(2, outcomes, None, &TOL).expect("mixture fixture is valid")
}

/// Projective measurement in the computational basis: the two sectors never
/// communicate, so the total map is not irreducible (its fixed space is
/// two-dimensional).
pub fn block_diagonal() -> Instrument {
    let outcomes = (0..2usize)
        .map(|i| {
            let k = Mat::from_fn(2, 2, |r, col| {
                if r == i && col == i {
                    cr(1.0)
                } else {
                    C64::ZERO
                }
            });
            outcome_from_single_kraus(format!("p{i}"), i as f64, k)
        })
        .collect();
    Instrument::new(2, outcomes, None, &TOL).expect("dephasing fixture is valid")
}

/// Rotation followed by a weak two-outcome measurement:
/// K_ω = M_ω · Rx(0.9) with M₀ = diag(√0.8, √0.3), M₁ = diag(√0.2, √0.7),
/// values {0, 1}. Primitive, and — unlike the unital fixtures — its left
/// eigenvector is genuinely non-flat, so the finite-n correction exponents
/// are nonzero.
pub fn measured_qubit() -> Instrument {
    let u = rx(0.9);
    let weights: [[f64; 2]; 2] = [[0.8, 0.3], [0.2, 0.7]];
    let outcomes = (0..2usize)
        .map(|w| {
            let m = Mat::from_fn(2, 2, |i, j| {
                if i == j {
                    cr(weights[w][i].sqrt())
                } else {
                    C64::ZERO
                }
            });
            Outcome::new(format!("m{w}"), w as f64, vec![&m * &u])
        })
        .collect();
    Instrument::new(2, outcomes, None, &TOL).expect("measured fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perron;

    #[test]
    fn every_fixture_validates() {
        for (name, instr) in all() {
            let report = instr.validation_report();
            assert!(report.passed(), "fixture {name}: {:?}", report.checks);
        }
    }

    #[test]
    fn classification_matches_the_table() {
        let expect = [
            ("iid-coin", true, true),
            ("shift-d3", true, false),
            ("classical-chain", true, true),
            ("qubit-unitary-mixture", true, true),
            ("block-diagonal", false, false),
            ("measured-qubit", true, true),
        ];
        for (name, irreducible, primitive) in expect {
            let instr = by_name(name).unwrap();
            let c = perron::classify(&instr.total_map(), instr.tolerances()).unwrap();
            assert_eq!(c.irreducible, irreducible, "{name} irreducible");
            assert_eq!(c.primitive, primitive, "{name} primitive");
        }
    }

    #[test]
    fn lookup_covers_exactly_the_canonical_names() {
        assert_eq!(all().len(), NAMES.len());
        assert!(by_name("no-such-fixture").is_none());
        for name in NAMES {
            assert!(by_name(name).is_some(), "{name}");
        }
    }

    #[test]
    fn measured_qubit_has_nonzero_corrections() {
        let profile = crate::cgf::CgfProfile::new(measured_qubit()).unwrap();
        let (upper, lower) = profile.deltas(0.8).unwrap();
        assert!(upper > 1e-4, "upper correction {upper}");
        assert!(lower < -1e-4, "lower correction {lower}");
    }

    #[test]
    fn unitary_mixture_corrections_vanish() {
        let profile = crate::cgf::CgfProfile::new(qubit_unitary_mixture()).unwrap();
        for theta in [-1.5, -0.3, 0.4, 2.0] {
            let (upper, lower) = profile.deltas(theta).unwrap();
            assert!(upper.abs() < 1e-9 && lower.abs() < 1e-9, "theta {theta}");
        }
    }
}
