//! Oracles shared by the integration suites. Everything here is computed
//! from first principles — closed forms, scalar recursions, `lgamma` —
//! without touching the spectral pipeline under test.

#![allow(dead_code)]

/// log Pr{S ≥ m} for S ~ Binomial(n, 1/2), summed from the top term so the
/// result stays accurate far into the tail (where the probability itself
/// underflows long before its logarithm is interesting).
pub fn log_binomial_upper_tail(n: u64, m: u64) -> f64 {
    assert!(m <= n);
    let nf = n as f64;
    let log_term = |k: u64| {
        libm::lgamma(nf + 1.0)
            - libm::lgamma(k as f64 + 1.0)
            - libm::lgamma((n - k) as f64 + 1.0)
            - nf * std::f64::consts::LN_2
    };
    let top = log_term(m);
    let mut acc = 0.0f64;
    for k in m..=n {
        let t = log_term(k) - top;
        if t < -745.0 {
            break;
        }
        acc += t.exp();
    }
    top + acc.ln()
}

/// Asymptotic variance of the jump indicator on the bundled two-state
/// chain, via the classical fundamental matrix (I − P + 1π)⁻¹ and the
/// Poisson equation — plain 2×2 arithmetic, no superoperators.
///
/// For an additive functional Σ f(X_{k−1}, X_k) of a stationary chain the
/// CLT variance is Var(f-step) + 2·E[f(X₀,X₁)·h(X₁)] where h solves
/// (I − P)h = g − μ1 with g(i) = E[f | X₀ = i].
pub fn classical_chain_variance_oracle() -> f64 {
    // Row-stochastic transitions p[i][j] = P(i → j) of the bundled chain.
    let p = [[0.9, 0.1], [0.2, 0.8]];
    let f = |i: usize, j: usize| if i == j { 0.0 } else { 1.0 };
    // Stationary law from flow balance π₀·p₀₁ = π₁·p₁₀.
    let pi = [
        p[1][0] / (p[0][1] + p[1][0]),
        p[0][1] / (p[0][1] + p[1][0]),
    ];
    let g: Vec<f64> = (0..2)
        .map(|i| (0..2).map(|j| p[i][j] * f(i, j)).sum())
        .collect();
    let mu: f64 = (0..2).map(|i| pi[i] * g[i]).sum();
    // Z = (I − P + Π)⁻¹ with Π the rank-one projector onto π, inverted by
    // the 2×2 adjugate.
    let m = [
        [1.0 - p[0][0] + pi[0], -p[0][1] + pi[1]],
        [-p[1][0] + pi[0], 1.0 - p[1][1] + pi[1]],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let z = [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ];
    let h: Vec<f64> = (0..2)
        .map(|i| (0..2).map(|j| z[i][j] * (g[j] - mu)).sum())
        .collect();
    let second_moment: f64 = (0..2)
        .map(|i| {
            pi[i]
                * (0..2)
                    .map(|j| p[i][j] * f(i, j) * f(i, j))
                    .sum::<f64>()
        })
        .sum();
    let cross: f64 = (0..2)
        .map(|i| {
            pi[i]
                * (0..2)
                    .map(|j| p[i][j] * f(i, j) * h[j])
                    .sum::<f64>()
        })
        .sum();
    second_moment - mu * mu + 2.0 * cross
}
