//! Browser bindings for the demo page: a JSON-in/JSON-out façade over the
//! core numerics.
//!
//! Every exported operation takes a model *source* — either `fixture:<name>`
//! or instrument JSON text — and returns a JSON string, so the page needs
//! nothing beyond `JSON.parse`. Errors come back as thrown strings. The
//! functions are plain Rust under the bindings and the crate also compiles
//! natively, which keeps them under `cargo test` without a browser:
//! build the web package with
//! `wasm-pack build crates/wasm --target web --out-dir ../../www/pkg`.

use qhmm_core::bounds;
use qhmm_core::cgf::CgfProfile;
use qhmm_core::fixtures;
use qhmm_core::instrument::Instrument;
use qhmm_core::io::InstrumentFile;
use qhmm_core::perron;
use qhmm_core::simulate::{self, SimulateError};
use qhmm_core::tol::Tolerances;
use qhmm_core::variance;
use qhmm_core::Direction;
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

/// Ceiling on CGF grid sizes requested by the page.
const MAX_CURVE_STEPS: usize = 4096;

/// Ceiling on the trajectory length in the tail-exponent sweep.
const MAX_TAIL_LENGTH: usize = 512;

fn resolve(source: &str) -> Result<Instrument, String> {
    let tol = Tolerances::default();
    if let Some(name) = source.trim().strip_prefix("fixture:") {
        return fixtures::by_name(name).ok_or_else(|| format!("unknown fixture {name:?}"));
    }
    let file: InstrumentFile =
        serde_json::from_str(source).map_err(|e| format!("instrument JSON: {e}"))?;
    file.into_instrument(&tol).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report serializes")
}

#[derive(Serialize)]
struct FixtureEntry {
    name: &'static str,
    dim: usize,
    values: Vec<f64>,
    /// The source string the other operations accept.
    source: String,
}

/// The bundled models.
#[wasm_bindgen]
pub fn fixtures_list() -> String {
    let rows: Vec<FixtureEntry> = fixtures::all()
        .into_iter()
        .map(|(name, instr)| FixtureEntry {
            name,
            dim: instr.dim(),
            values: instr.values(),
            source: format!("fixture:{name}"),
        })
        .collect();
    to_json(&rows)
}

#[derive(Serialize)]
struct Summary {
    dim: usize,
    outcome_count: usize,
    values: Vec<f64>,
    irreducible: bool,
    primitive: bool,
    spectral_radius: f64,
    /// Stationary mean; absent when no unique stationary state exists.
    mean: Option<f64>,
    /// Asymptotic variance of the sample mean; absent when not primitive.
    asymptotic_variance: Option<f64>,
}

/// Classification verdict plus first-moment data for the summary card.
#[wasm_bindgen]
pub fn model_summary(source: &str) -> Result<String, String> {
    let instr = resolve(source)?;
    let class =
        perron::classify(&instr.total_map(), instr.tolerances()).map_err(|e| e.to_string())?;
    let mean = simulate::stationary_mean(&instr).ok();
    let asymptotic_variance = variance::asymptotic_variance(&instr).ok();
    Ok(to_json(&Summary {
        dim: instr.dim(),
        outcome_count: instr.outcomes().len(),
        values: instr.values(),
        irreducible: class.irreducible,
        primitive: class.primitive,
        spectral_radius: class.base.spectral_radius,
        mean,
        asymptotic_variance,
    }))
}

#[derive(Serialize)]
struct CurvePoint {
    theta: f64,
    phi: f64,
    phi_prime: f64,
    delta_upper: f64,
    delta_lower: f64,
}

/// CGF curve over an inclusive tilt grid.
#[wasm_bindgen]
pub fn cgf_curve(source: &str, start: f64, end: f64, steps: usize) -> Result<String, String> {
    if !start.is_finite() || !end.is_finite() {
        return Err("grid endpoints must be finite".to_string());
    }
    if !(2..=MAX_CURVE_STEPS).contains(&steps) {
        return Err(format!("steps must lie in 2..={MAX_CURVE_STEPS}"));
    }
    let instr = resolve(source)?;
    let profile = CgfProfile::new(instr).map_err(|e| e.to_string())?;
    let mut points = Vec::with_capacity(steps);
    for i in 0..steps {
        let theta = start + (end - start) * i as f64 / (steps - 1) as f64;
        let phi = profile.phi(theta).map_err(|e| e.to_string())?;
        let phi_prime = profile.phi_prime(theta).map_err(|e| e.to_string())?;
        let (delta_upper, delta_lower) = profile.deltas(theta).map_err(|e| e.to_string())?;
        points.push(CurvePoint {
            theta,
            phi,
            phi_prime,
            delta_upper,
            delta_lower,
        });
    }
    Ok(to_json(&points))
}

#[derive(Serialize)]
struct TailRow {
    n: usize,
    exponent_lower_bound: f64,
    exponent_upper_bound: Option<f64>,
    feasible: bool,
    oracle_minus_log_probability: Option<f64>,
}

#[derive(Serialize)]
struct TailCurve {
    a: f64,
    direction: String,
    mean: f64,
    /// Asymptotic slope of −(1/n)·log Pr.
    ldp_rate: f64,
    rows: Vec<TailRow>,
}

/// Tail-bound exponents for n = 1..=n_max at one mean level, with the exact
/// oracle wherever the sum law stays enumerable.
#[wasm_bindgen]
pub fn tail_exponents(
    source: &str,
    a: f64,
    n_max: usize,
    direction: &str,
) -> Result<String, String> {
    if !a.is_finite() {
        return Err("level a must be finite".to_string());
    }
    if n_max < 1 || n_max > MAX_TAIL_LENGTH {
        return Err(format!("n_max must lie in 1..={MAX_TAIL_LENGTH}"));
    }
    let direction = match direction {
        "upper" => Direction::Upper,
        "lower" => Direction::Lower,
        other => return Err(format!("direction {other:?} is not upper|lower")),
    };
    let instr = resolve(source)?;
    let profile = CgfProfile::new(instr).map_err(|e| e.to_string())?;
    let mean = profile.phi_prime(0.0).map_err(|e| e.to_string())?;
    let ldp_rate =
        bounds::ldp_rate(&profile, (a - mean).abs(), direction).map_err(|e| e.to_string())?;

    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let report =
            bounds::tail_bound_report(&profile, a, n, direction).map_err(|e| e.to_string())?;
        let initial = profile.instrument().initial_state();
        let oracle = match simulate::exact_tail(profile.instrument(), initial, n, a, direction) {
            Ok(p) => Some(-p.ln()),
            Err(SimulateError::CapExceeded { .. }) => None,
            Err(e) => return Err(e.to_string()),
        };
        rows.push(TailRow {
            n,
            exponent_lower_bound: report.exponent_lower_bound,
            exponent_upper_bound: report.exponent_upper_bound,
            feasible: report.upper_feasible,
            oracle_minus_log_probability: oracle,
        });
    }
    Ok(to_json(&TailCurve {
        a,
        direction: match direction {
            Direction::Upper => "upper".to_string(),
            Direction::Lower => "lower".to_string(),
        },
        mean,
        ldp_rate,
        rows,
    }))
}
