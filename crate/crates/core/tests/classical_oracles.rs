//! The spectral pipeline against independent classical oracles: closed-form
//! 2×2 Perron roots, Bernoulli and two-point CGFs, the classical
//! fundamental-matrix variance, and lgamma-based binomial tails. None of
//! the expected values below are produced by the code under test.

mod common;

use common::{classical_chain_variance_oracle, log_binomial_upper_tail};
use qhmm_core::cgf::CgfProfile;
use qhmm_core::simulate::{exact_tail, stationary_mean};
use qhmm_core::variance::asymptotic_variance;
use qhmm_core::{fixtures, Direction};

const THETAS: [f64; 6] = [-2.0, -1.0, -0.3, 0.4, 1.1, 2.0];

fn profile(name: &str) -> CgfProfile {
    CgfProfile::new(fixtures::by_name(name).unwrap()).unwrap()
}

#[test]
fn tilted_root_matches_two_state_closed_form() {
    // Tilting the bundled chain scales only the off-diagonal (jump)
    // entries, so the tilted matrix is [[0.9, 0.2e^θ], [0.1e^θ, 0.8]] with
    // top root (1.7 + √(0.01 + 0.08·e^{2θ}))/2.
    let p = profile("classical-chain");
    for theta in THETAS {
        let root = 0.5 * (1.7 + (0.01 + 0.08 * (2.0 * theta).exp()).sqrt());
        let phi = p.phi(theta).unwrap();
        assert!(
            (phi - root.ln()).abs() < 1e-12,
            "theta {theta}: {phi} vs {}",
            root.ln()
        );
    }
}

#[test]
fn coin_cgf_matches_bernoulli_closed_form() {
    let p = profile("iid-coin");
    for theta in THETAS {
        let expected = ((1.0 + theta.exp()) / 2.0).ln();
        assert!((p.phi(theta).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn unitary_mixture_cgf_matches_two_point_law() {
    // The mixture channel is unital, so the outcome sequence is i.i.d.
    // ±1 with weights 0.6/0.4 and the CGF has the scalar closed form.
    let p = profile("qubit-unitary-mixture");
    for theta in THETAS {
        let expected = (0.6 * theta.exp() + 0.4 * (-theta).exp()).ln();
        assert!(
            (p.phi(theta).unwrap() - expected).abs() < 1e-12,
            "theta {theta}"
        );
    }
}

#[test]
fn shift_cgf_is_the_identity_line() {
    // One full period of the three-site shift adds exactly 0 + 1 + 2, so
    // the top tilted eigenvalue is e^θ for every θ.
    let p = profile("shift-d3");
    for theta in THETAS {
        assert!((p.phi(theta).unwrap() - theta).abs() < 1e-12, "theta {theta}");
    }
}

#[test]
fn chain_variance_matches_poisson_equation_oracle() {
    let oracle = classical_chain_variance_oracle();
    // The bundled chain's variance in closed form: 88/675.
    assert!((oracle - 88.0 / 675.0).abs() < 1e-15);
    let v = asymptotic_variance(&fixtures::by_name("classical-chain").unwrap()).unwrap();
    assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
}

#[test]
fn chain_mean_is_the_edge_weighted_stationary_flow() {
    // π = (2/3, 1/3); jumps occur with probability 0.1 from state 0 and
    // 0.2 from state 1, so the mean jump indicator is 2/15.
    let mean = stationary_mean(&fixtures::by_name("classical-chain").unwrap()).unwrap();
    assert!((mean - 2.0 / 15.0).abs() < 1e-12, "{mean}");
}

#[test]
fn coin_rate_function_matches_binary_relative_entropy() {
    let p = profile("iid-coin");
    for a in [0.6f64, 0.75, 0.9] {
        let expected = a * (2.0 * a).ln() + (1.0 - a) * (2.0 * (1.0 - a)).ln();
        let rate = p.rate_function(a).unwrap();
        assert!((rate - expected).abs() < 1e-9, "a {a}: {rate} vs {expected}");
    }
}

#[test]
fn binomial_tail_matches_dp_oracle() {
    let coin = fixtures::by_name("iid-coin").unwrap();
    let rho = coin.initial_state().clone();
    for n in [5usize, 10, 20] {
        for a in [0.56, 0.71, 0.87] {
            let m = (n as f64 * a).ceil() as u64;
            let expected = log_binomial_upper_tail(n as u64, m);
            let p = exact_tail(&coin, &rho, n, a, Direction::Upper).unwrap();
            assert!(
                (p.ln() - expected).abs() < 1e-12,
                "n {n} a {a}: {} vs {expected}",
                p.ln()
            );
        }
    }
}

#[test]
fn deep_binomial_tail_matches_dp_at_scale() {
    // Far into the tail (log p ≈ −68) the dynamic program and the lgamma
    // sum must still agree to near round-off.
    let coin = fixtures::by_name("iid-coin").unwrap();
    let rho = coin.initial_state().clone();
    let n = 1000usize;
    let a = 0.6778;
    let m = (n as f64 * a).ceil() as u64;
    let expected = log_binomial_upper_tail(n as u64, m);
    let p = exact_tail(&coin, &rho, n, a, Direction::Upper).unwrap();
    assert!(
        (p.ln() - expected).abs() < 1e-9,
        "{} vs {expected}",
        p.ln()
    );
}
