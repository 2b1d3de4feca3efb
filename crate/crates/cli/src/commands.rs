//! One function per subcommand. Each builds its artifact completely in
//! memory, then hands it to the sink in a single write, so failures can
//! never emit a partial table.

use crate::output::{json, num, Csv, Sink};
use crate::{Common, Failure, FcsMode};
use faer::Mat;
use qhmm_core::bounds;
use qhmm_core::cgf::CgfProfile;
use qhmm_core::fcs;
use qhmm_core::fixtures;
use qhmm_core::instrument::{validation_report, Instrument, Outcome, ValidationReport};
use qhmm_core::io::{self, FcsFile, InstrumentFile};
use qhmm_core::linalg::{c, CMat};
use qhmm_core::perron;
use qhmm_core::simulate::{self, SimulateError};
use qhmm_core::tol::Tolerances;
use qhmm_core::variance;
use qhmm_core::Direction;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Longest n for which the exact sum-law oracle is attempted by `bounds`.
/// The dynamic program over sum atoms is exact but its lattice can grow
/// with n; beyond the cap (or when the enumeration overflows its internal
/// budget) the oracle column is left empty rather than guessed at.
const ORACLE_N_CAP: u64 = 4096;

/// Hard ceiling on grid sizes, so a typo in `--theta` cannot balloon into
/// gigabytes of CSV.
const MAX_GRID_STEPS: usize = 1_000_000;

/// Tolerances with any command-line overrides applied.
fn tolerances(common: &Common) -> Tolerances {
    let mut tol = Tolerances::default();
    if let Some(band) = common.positivity_band {
        tol.positivity_band = band;
    }
    if let Some(radius) = common.eig_equality {
        tol.eig_equality = radius;
    }
    tol
}

/// Resolves `--instrument`: `fixture:<name>` or a JSON file path.
fn load_instrument(common: &Common) -> Result<Instrument, Failure> {
    let tol = tolerances(common);
    if let Some(name) = common.instrument.strip_prefix("fixture:") {
        let instr = fixtures::by_name(name).ok_or_else(|| {
            Failure::invalid(format!(
                "unknown fixture {name:?}; `qhmm fixtures` lists the bundled models"
            ))
        })?;
        if common.positivity_band.is_none() && common.eig_equality.is_none() {
            return Ok(instr);
        }
        // Rebuild so the overridden tolerances travel with the instrument.
        let outcomes = instr
            .outcomes()
            .iter()
            .map(|o| Outcome::new(o.label.clone(), o.value, o.kraus().to_vec()))
            .collect();
        Instrument::new(
            instr.dim(),
            outcomes,
            Some(instr.initial_state().clone()),
            &tol,
        )
        .map_err(Failure::invalid)
    } else {
        io::load_instrument(Path::new(&common.instrument), &tol).map_err(Failure::invalid)
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct FixtureRow {
    name: &'static str,
    dim: usize,
    outcomes: usize,
    values: Vec<f64>,
    irreducible: bool,
    primitive: bool,
}

/// `fixtures`: the bundled models with their classification verdicts.
pub fn fixtures(output: Option<PathBuf>) -> Result<u8, Failure> {
    let sink = Sink::new(output);
    let tol = Tolerances::default();
    let mut rows = Vec::new();
    for (name, instr) in fixtures::all() {
        let class = perron::classify(&instr.total_map(), &tol).map_err(Failure::precondition)?;
        rows.push(FixtureRow {
            name,
            dim: instr.dim(),
            outcomes: instr.outcomes().len(),
            values: instr.values(),
            irreducible: class.irreducible,
            primitive: class.primitive,
        });
    }
    sink.write(&json(&rows))?;
    Ok(0)
}

/// `export`: the resolved instrument as instrument JSON.
pub fn export(common: &Common) -> Result<u8, Failure> {
    let sink = Sink::new(common.output.clone());
    let instr = load_instrument(common)?;
    sink.write(&io::instrument_to_json(&instr))?;
    Ok(0)
}

#[derive(Serialize)]
struct CheckJson {
    name: &'static str,
    passed: bool,
    residual: f64,
    detail: String,
}

#[derive(Serialize)]
struct ValidateJson {
    passed: bool,
    dim: usize,
    outcome_count: usize,
    checks: Vec<CheckJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    construction_error: Option<String>,
}

fn checks_json(report: &ValidationReport) -> Vec<CheckJson> {
    report
        .checks
        .iter()
        .map(|check| CheckJson {
            name: check.name,
            passed: check.passed,
            residual: check.residual,
            detail: check.detail.clone(),
        })
        .collect()
}

/// Parses one serialized matrix without enforcing a shape, so dimension
/// problems surface as failed checks in the report instead of aborting it.
/// Ragged rows still abort: they do not form a matrix at all.
fn loose_matrix(rows: &[Vec<[f64; 2]>]) -> Result<CMat, Failure> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Failure::invalid("ragged matrix rows"));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| {
        c(rows[i][j][0], rows[i][j][1])
    }))
}

/// `validate`: every construction check, reported even when some fail.
/// Exit 0 when all pass, 3 otherwise (the report is written either way).
pub fn validate(common: &Common) -> Result<u8, Failure> {
    let sink = Sink::new(common.output.clone());
    let tol = tolerances(common);

    let report_json = if common.instrument.starts_with("fixture:") {
        let instr = load_instrument(common)?;
        let report = instr.validation_report();
        ValidateJson {
            passed: report.passed(),
            dim: instr.dim(),
            outcome_count: instr.outcomes().len(),
            checks: checks_json(&report),
            construction_error: None,
        }
    } else {
        let path = Path::new(&common.instrument);
        let text = read_file(path)?;
        let parse = |t: &str| -> Result<InstrumentFile, Failure> {
            serde_json::from_str(t).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
        };
        let file = parse(&text)?;
        let outcomes = file
            .outcomes
            .iter()
            .map(|o| {
                let kraus = o
                    .kraus
                    .iter()
                    .map(|k| loose_matrix(k))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Outcome::new(o.label.clone(), o.value, kraus))
            })
            .collect::<Result<Vec<_>, Failure>>()?;
        let report = validation_report(file.dim, &outcomes, &tol);
        // Full construction additionally validates the initial state.
        let construction_error = parse(&text)?
            .into_instrument(&tol)
            .err()
            .map(|e| e.to_string());
        ValidateJson {
            passed: report.passed() && construction_error.is_none(),
            dim: file.dim,
            outcome_count: file.outcomes.len(),
            checks: checks_json(&report),
            construction_error,
        }
    };

    let passed = report_json.passed;
    sink.write(&json(&report_json))?;
    if passed {
        Ok(0)
    } else {
        eprintln!("validation failed; see the report for the failing checks");
        Ok(3)
    }
}

#[derive(Serialize)]
struct LevelJson {
    spectral_radius: f64,
    fixed_space_dim: usize,
    peripheral_eigenvalues: Vec<[f64; 2]>,
    right_margin: f64,
    left_margin: f64,
}

impl LevelJson {
    fn from(diag: &perron::LevelDiagnostics) -> Self {
        let mut peripheral: Vec<[f64; 2]> = diag
            .peripheral_eigenvalues
            .iter()
            .map(|z| [z.re, z.im])
            .collect();
        peripheral.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        LevelJson {
            spectral_radius: diag.spectral_radius,
            fixed_space_dim: diag.fixed_space_dim,
            peripheral_eigenvalues: peripheral,
            right_margin: diag.right_margin,
            left_margin: diag.left_margin,
        }
    }
}

#[derive(Serialize)]
struct ClassifyJson {
    irreducible: bool,
    primitive: bool,
    base: LevelJson,
    doubled: LevelJson,
}

/// `classify`: irreducibility and primitivity with the spectral evidence.
pub fn classify(common: &Common) -> Result<u8, Failure> {
    let sink = Sink::new(common.output.clone());
    let instr = load_instrument(common)?;
    let class =
        perron::classify(&instr.total_map(), instr.tolerances()).map_err(Failure::precondition)?;
    sink.write(&json(&ClassifyJson {
        irreducible: class.irreducible,
        primitive: class.primitive,
        base: LevelJson::from(&class.base),
        doubled: LevelJson::from(&class.doubled),
    }))?;
    Ok(0)
}

/// Parses a start:end:steps grid with inclusive endpoints.
fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, end, steps] = parts.as_slice() else {
        return Err(Failure::invalid(format!(
            "grid {spec:?} is not of the form start:end:steps"
        )));
    };
    let start: f64 = start
        .parse()
        .map_err(|e| Failure::invalid(format!("grid start: {e}")))?;
    let end: f64 = end
        .parse()
        .map_err(|e| Failure::invalid(format!("grid end: {e}")))?;
    let steps: usize = steps
        .parse()
        .map_err(|e| Failure::invalid(format!("grid steps: {e}")))?;
    if !start.is_finite() || !end.is_finite() {
        return Err(Failure::invalid("grid endpoints must be finite"));
    }
    if steps == 0 {
        return Err(Failure::invalid("grid needs at least one step"));
    }
    if steps > MAX_GRID_STEPS {
        return Err(Failure::invalid(format!(
            "grid of {steps} steps exceeds the {MAX_GRID_STEPS}-step ceiling"
        )));
    }
    if steps == 1 {
        return Ok(vec![start]);
    }
    Ok((0..steps)
        .map(|i| start + (end - start) * i as f64 / (steps - 1) as f64)
        .collect())
}

/// `cgf`: φ, φ′ and the finite-n correction exponents over a tilt grid.
pub fn cgf(common: &Common, theta_spec: &str) -> Result<u8, Failure> {
    let sink = Sink::new(common.output.clone());
    let grid = parse_grid(theta_spec)?;
    let instr = load_instrument(common)?;
    let profile = CgfProfile::new(instr).map_err(Failure::precondition)?;
    let mut table = Csv::new("theta,phi,phi_prime,delta_upper,delta_lower");
    for &theta in &grid {
        let phi = profile.phi(theta).map_err(Failure::precondition)?;
        let slope = profile.phi_prime(theta).map_err(Failure::precondition)?;
        let (delta_upper, delta_lower) = profile.deltas(theta).map_err(Failure::precondition)?;
        table.row(&[
            num(theta),
            num(phi),
            num(slope),
            num(delta_upper),
            num(delta_lower),
        ]);
    }
    sink.write(&table.finish())?;
    Ok(0)
}

/// `bounds`: one row per requested length; exits 4 when any upper exponent
/// is infeasible at its length (the full table is still written).
pub fn bounds(
    common: &Common,
    a: f64,
    lengths: &[u64],
    direction: Direction,
) -> Result<u8, Failure> {
    let sink = Sink::new(common.output.clone());
    if !a.is_finite() {
        return Err(Failure::invalid("--a must be finite"));
    }
    if lengths.is_empty() {
        return Err(Failure::invalid("--n needs at least one length"));
    }
    if lengths.contains(&0) {
        return Err(Failure::invalid("--n lengths must be at least 1"));
    }
    let instr = load_instrument(common)?;
    let profile = CgfProfile::new(instr).map_err(Failure::precondition)?;

    let mut table = Csv::new(
        "n,exponent_lower_bound,exponent_upper_bound,oracle_minus_log_probability,feasible",
    );
    let mut all_feasible = true;
    let mut min_feasible: Option<u64> = None;
    for &n in lengths {
        let report = bounds::tail_bound_report(&profile, a, n as usize, direction)
            .map_err(Failure::precondition)?;
        let oracle = if n <= ORACLE_N_CAP {
            let initial = profile.instrument().initial_state();
            match simulate::exact_tail(profile.instrument(), initial, n as usize, a, direction) {
                Ok(p) => Some(-p.ln()),
                Err(SimulateError::CapExceeded { .. }) => None,
                Err(e) => return Err(Failure::precondition(e)),
            }
        } else {
            None
        };
        if !report.upper_feasible {
            all_feasible = false;
            min_feasible = min_feasible.or(report.min_feasible_n);
        }
        table.row(&[
            n.to_string(),
            num(report.exponent_lower_bound),
            report.exponent_upper_bound.map(num).unwrap_or_default(),
            oracle.map(num).unwrap_or_default(),
            report.upper_feasible.to_string(),
        ]);
    }
    sink.write(&table.finish())?;
    if all_feasible {
        Ok(0)
    } else {
        match min_feasible {
            Some(m) => eprintln!(
                "upper exponent infeasible at one or more requested lengths \
                 (first feasible length found: {m}); see the feasible column"
            ),
            None => eprintln!(
                "upper exponent infeasible at one or more requested lengths; \
                 see the feasible column"
            ),
        }
        Ok(4)
    }
}

#[derive(Serialize)]
struct RatesJson {
    delta: f64,
    t: f64,
    mean: f64,
    upper_level: f64,
    upper_rate: f64,
    lower_level: f64,
    lower_rate: f64,
    mdp_rate: f64,
}

/// `rates`: large-deviation rates at mean ± delta and the moderate-deviation
/// rate delta²/(2φ″(0)).
pub fn rates(common: &Common, delta: f64, t: f64) -> Result<u8, Failure> {
    let sink = Sink::new(common.output.clone());
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Failure::invalid("--delta must be finite and > 0"));
    }
    if !(t > 0.0 && t < 0.5) {
        return Err(Failure::invalid("--t must lie strictly between 0 and 1/2"));
    }
    let instr = load_instrument(common)?;
    let profile = CgfProfile::new(instr).map_err(Failure::precondition)?;
    let mean = profile.phi_prime(0.0).map_err(Failure::precondition)?;
    let upper_rate =
        bounds::ldp_rate(&profile, delta, Direction::Upper).map_err(Failure::precondition)?;
    let lower_rate =
        bounds::ldp_rate(&profile, delta, Direction::Lower).map_err(Failure::precondition)?;
    let mdp_rate = bounds::mdp_rate(&profile, delta).map_err(Failure::precondition)?;
    sink.write(&json(&RatesJson {
        delta,
        t,
        mean,
        upper_level: mean + delta,
        upper_rate,
        lower_level: mean - delta,
        lower_rate,
        mdp_rate,
    }))?;
    Ok(0)
}

#[derive(Serialize)]
struct VarianceJson {
    mean: f64,
    stationary_variance: f64,
    fundamental_correction: f64,
    asymptotic_variance: f64,
    phi_double_prime: f64,
    finite_difference_check: f64,
    second_eigenvalue_modulus: f64,
    conditioning_warning: bool,
}

/// `variance`: the asymptotic variance split into its per-step part and the
/// fundamental-matrix correction, cross-checked two independent ways.
pub fn variance(common: &Common) -> Result<u8, Failure> {
    let sink = Sink::new(common.output.clone());
    let instr = load_instrument(common)?;
    let data = variance::fundamental_data(&instr).map_err(Failure::precondition)?;

    let probabilities = instr.probabilities(data.rho0.mat());
    let mut step_mean = 0.0;
    let mut second_moment = 0.0;
    for (outcome, p) in instr.outcomes().iter().zip(&probabilities) {
        step_mean += outcome.value * p;
        second_moment += outcome.value * outcome.value * p;
    }
    let stationary_variance = second_moment - step_mean * step_mean;

    let asymptotic = variance::asymptotic_variance(&instr).map_err(Failure::precondition)?;
    let profile = CgfProfile::new(instr).map_err(Failure::precondition)?;
    let mean = profile.phi_prime(0.0).map_err(Failure::precondition)?;
    let phi_double_prime = profile.phi_double_prime(0.0).map_err(Failure::precondition)?;

    // Independent cross-check: a Richardson-extrapolated second difference
    // of φ at 0 (φ(0) = 0 exactly, by the eigendata normalization).
    let second_difference = |h: f64| -> Result<f64, Failure> {
        let plus = profile.phi(h).map_err(Failure::precondition)?;
        let minus = profile.phi(-h).map_err(Failure::precondition)?;
        Ok((plus + minus) / (h * h))
    };
    let h = 1e-3;
    let finite_difference_check = (4.0 * second_difference(h / 2.0)? - second_difference(h)?) / 3.0;

    sink.write(&json(&VarianceJson {
        mean,
        stationary_variance,
        fundamental_correction: asymptotic - stationary_variance,
        asymptotic_variance: asymptotic,
        phi_double_prime,
        finite_difference_check,
        second_eigenvalue_modulus: data.second_eigenvalue_modulus,
        conditioning_warning: data.conditioning_warning,
    }))?;
    Ok(0)
}

#[derive(Serialize)]
struct KsJson {
    n: u64,
    trials: u64,
    seed: u64,
    ks_statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

/// `simulate`: per-trajectory sample means as CSV, plus a one-line JSON
/// summary comparing the standardized means against the limiting Gaussian.
/// The summary goes to stdout when the table is written to a file and to
/// stderr otherwise, so the CSV stream stays clean. A model with degenerate
/// fluctuations gets `"ks_statistic": null` and a note instead of an error.
pub fn simulate(common: &Common, n: u64, trials: u64, seed: u64) -> Result<u8, Failure> {
    let sink = Sink::new(common.output.clone());
    if n == 0 {
        return Err(Failure::invalid("--n must be at least 1"));
    }
    if trials == 0 {
        return Err(Failure::invalid("--trials must be at least 1"));
    }
    let instr = load_instrument(common)?;
    let means = simulate::sample_means(
        &instr,
        instr.initial_state(),
        n as usize,
        trials as usize,
        seed,
    )
    .map_err(Failure::precondition)?;

    let mut table = Csv::new("trial,sample_mean");
    for (trial, mean) in means.iter().enumerate() {
        table.row(&[trial.to_string(), num(*mean)]);
    }

    let summary = match simulate::clt_check(
        &instr,
        instr.initial_state(),
        n as usize,
        trials as usize,
        seed,
    ) {
        Ok(ks) => KsJson {
            n,
            trials,
            seed,
            ks_statistic: Some(ks),
            note: None,
        },
        Err(e) => KsJson {
            n,
            trials,
            seed,
            ks_statistic: None,
            note: Some(e.to_string()),
        },
    };
    let summary_line = serde_json::to_string(&summary).expect("summary serializes") + "\n";

    let to_file = sink.is_file();
    sink.write(&table.finish())?;
    if to_file {
        print!("{summary_line}");
    } else {
        eprint!("{summary_line}");
    }
    Ok(0)
}

/// `oracle`: the exact law of the n-step sum from the dynamic program.
pub fn oracle(common: &Common, n: u64) -> Result<u8, Failure> {
    let sink = Sink::new(common.output.clone());
    if n == 0 {
        return Err(Failure::invalid("--n must be at least 1"));
    }
    let instr = load_instrument(common)?;
    let dist = simulate::exact_sum_distribution(&instr, instr.initial_state(), n as usize)
        .map_err(Failure::precondition)?;
    let mut table = Csv::new("sum,mean,probability");
    for (sum, probability) in dist.probabilities() {
        table.row(&[num(sum), num(sum / n as f64), num(probability)]);
    }
    sink.write(&table.finish())?;
    Ok(0)
}

/// `fcs export|import`: conversion between the instrument schema and the
/// joint-register model of the same process.
pub fn fcs(common: &Common, mode: FcsMode) -> Result<u8, Failure> {
    let sink = Sink::new(common.output.clone());
    match mode {
        FcsMode::Export => {
            let instr = load_instrument(common)?;
            let model = fcs::to_fcs(&instr);
            let file = FcsFile::from_model(&model).map_err(Failure::precondition)?;
            let mut text =
                serde_json::to_string_pretty(&file).expect("joint-register file serializes");
            text.push('\n');
            sink.write(&text)?;
        }
        FcsMode::Import => {
            if common.instrument.starts_with("fixture:") {
                return Err(Failure::invalid(
                    "`fcs import` reads an FCS JSON file; fixtures are instruments already",
                ));
            }
            let tol = tolerances(common);
            let path = Path::new(&common.instrument);
            let text = read_file(path)?;
            let file: FcsFile = serde_json::from_str(&text)
                .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
            let model = file.into_model(&tol).map_err(Failure::invalid)?;
            let instr = fcs::from_fcs(&model).map_err(Failure::invalid)?;
            sink.write(&io::instrument_to_json(&instr))?;
        }
    }
    Ok(0)
}
