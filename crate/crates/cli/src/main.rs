//! `qhmm` — command-line surface over the hidden-process numerics.
//!
//! One instrument goes in (a JSON file or a bundled `fixture:<name>`), one
//! artifact comes out: a JSON report or a CSV table, on stdout by default or
//! written atomically with `--output`. Artifacts are deterministic — the same
//! invocation (and seed) produces byte-identical files, so diffing re-runs is
//! a meaningful check.
//!
//! Exit codes are part of the contract:
//!
//! * `0` — success;
//! * `2` — invalid input: unreadable or ill-formed files, bad flags or grids
//!   (also clap's own usage errors);
//! * `3` — precondition violated: the input parsed but the requested analysis
//!   does not apply, e.g. `variance` on a non-primitive model or a tail level
//!   on the wrong side of the mean;
//! * `4` — `bounds` produced at least one row whose upper exponent is
//!   infeasible at the requested length (the table is still written in full;
//!   the `feasible` column marks the rows).

mod commands;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qhmm_core::Direction;
use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

/// A failure tagged with the exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    /// Exit 2: the input itself is unusable.
    pub fn invalid(message: impl Display) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }

    /// Exit 3: the input is well-formed but the analysis does not apply.
    pub fn precondition(message: impl Display) -> Self {
        Failure {
            code: 3,
            message: message.to_string(),
        }
    }
}

/// Fully parsed invocation: instrument source, command parameters, output
/// routing and tolerance overrides.
#[derive(Parser)]
#[command(
    name = "qhmm",
    version,
    about = "Statistics of measured hidden quantum Markov processes: \
             classification, CGF geometry, tail bounds, deviation rates, \
             variance, simulation and exact oracles"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every instrument-consuming subcommand.
#[derive(Args)]
pub struct Common {
    /// Instrument source: a JSON file path, or fixture:<name> for a bundled
    /// model (list them with `qhmm fixtures`).
    #[arg(long, value_name = "PATH|fixture:NAME")]
    pub instrument: String,

    /// Write the artifact to this file (write-then-rename, never partial);
    /// stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,

    /// Override the strict-positivity band used when classifying
    /// eigenvector margins.
    #[arg(long, value_name = "EPS")]
    pub positivity_band: Option<f64>,

    /// Override the relative clustering radius for eigenvalues at the
    /// spectral circle.
    #[arg(long, value_name = "EPS")]
    pub eig_equality: Option<f64>,
}

/// Tail side, mirroring the library's event convention.
#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    /// Event {sample mean ≥ a}.
    Upper,
    /// Event {sample mean ≤ a}.
    Lower,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Direction {
        match d {
            DirectionArg::Upper => Direction::Upper,
            DirectionArg::Lower => Direction::Lower,
        }
    }
}

/// Conversion direction for the joint-register model format.
#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum FcsMode {
    /// Instrument JSON → FCS JSON.
    Export,
    /// FCS JSON → instrument JSON (--instrument names the FCS file).
    Import,
}

#[derive(Subcommand)]
pub enum Command {
    /// List the bundled fixtures with their classification (JSON).
    Fixtures {
        /// Write the listing to this file; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },

    /// Write the resolved instrument back out as instrument JSON (handy for
    /// turning a bundled fixture into an editable file).
    Export(Common),

    /// Run every construction check and report all of them (JSON).
    Validate(Common),

    /// Irreducibility/primitivity verdict with spectral diagnostics (JSON).
    Classify(Common),

    /// CGF curve over a tilt grid
    /// (CSV: theta, phi, phi_prime, delta_upper, delta_lower).
    Cgf {
        #[command(flatten)]
        common: Common,

        /// Tilt grid start:end:steps, endpoints inclusive (steps=1 emits
        /// the single point start).
        #[arg(long, value_name = "A:B:STEPS", allow_hyphen_values = true)]
        theta: String,
    },

    /// Finite-n tail exponents at a mean level, with the exact oracle where
    /// the sum law is enumerable (CSV: n, exponent_lower_bound,
    /// exponent_upper_bound, oracle_minus_log_probability, feasible).
    Bounds {
        #[command(flatten)]
        common: Common,

        /// Mean-level threshold of the tail event.
        #[arg(long, allow_negative_numbers = true)]
        a: f64,

        /// Comma-separated trajectory lengths, each ≥ 1.
        #[arg(long, value_name = "N1,N2,...", value_delimiter = ',', required = true)]
        n: Vec<u64>,

        /// Tail side: upper for {mean ≥ a}, lower for {mean ≤ a}.
        #[arg(long, value_enum, default_value_t = DirectionArg::Upper)]
        direction: DirectionArg,
    },

    /// Large- and moderate-deviation rates at a deviation delta from the
    /// stationary mean (JSON).
    Rates {
        #[command(flatten)]
        common: Common,

        /// Deviation from the stationary mean; must be > 0.
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,

        /// Moderate-deviation scaling exponent, 0 < t < 1/2. The reported
        /// mdp_rate governs thresholds receding like delta·n^(-t).
        #[arg(long, default_value_t = 0.25)]
        t: f64,
    },

    /// Asymptotic variance report with a finite-difference cross-check (JSON).
    Variance(Common),

    /// Monte Carlo sample means (CSV: trial, sample_mean) plus a CLT
    /// Kolmogorov–Smirnov summary as one JSON line on the other stream
    /// (stdout when the table goes to a file, stderr otherwise).
    Simulate {
        #[command(flatten)]
        common: Common,

        /// Trajectory length, ≥ 1.
        #[arg(long)]
        n: u64,

        /// Number of independent trajectories, ≥ 1.
        #[arg(long)]
        trials: u64,

        /// RNG seed; trajectory t draws from stream t+1 of this seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },

    /// Exact law of the n-step sum (CSV: sum, mean, probability).
    Oracle {
        #[command(flatten)]
        common: Common,

        /// Trajectory length, ≥ 1.
        #[arg(long)]
        n: u64,
    },

    /// Convert between instrument JSON and the joint-register (FCS) JSON.
    Fcs {
        #[command(flatten)]
        common: Common,

        #[arg(value_enum)]
        mode: FcsMode,
    },
}

/// Applies the QHMM_THREADS cap before any linear algebra runs. Unset or 1
/// pins the backend to sequential execution (reproducible by construction
/// and the right choice for the small matrices handled here); k ≥ 2 allows
/// a pool of k threads.
fn apply_thread_cap() -> Result<(), Failure> {
    let raw = match std::env::var("QHMM_THREADS") {
        Err(std::env::VarError::NotPresent) => {
            faer::set_global_parallelism(faer::Par::Seq);
            return Ok(());
        }
        Err(e) => return Err(Failure::invalid(format!("QHMM_THREADS: {e}"))),
        Ok(raw) => raw,
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|e| Failure::invalid(format!("QHMM_THREADS must be a positive integer: {e}")))?;
    if threads == 0 {
        return Err(Failure::invalid("QHMM_THREADS must be at least 1"));
    }
    faer::set_global_parallelism(if threads == 1 {
        faer::Par::Seq
    } else {
        faer::Par::rayon(threads)
    });
    Ok(())
}

fn run(config: RunConfig) -> Result<u8, Failure> {
    match config.command {
        Command::Fixtures { output } => commands::fixtures(output),
        Command::Export(common) => commands::export(&common),
        Command::Validate(common) => commands::validate(&common),
        Command::Classify(common) => commands::classify(&common),
        Command::Cgf { common, theta } => commands::cgf(&common, &theta),
        Command::Bounds {
            common,
            a,
            n,
            direction,
        } => commands::bounds(&common, a, &n, direction.into()),
        Command::Rates { common, delta, t } => commands::rates(&common, delta, t),
        Command::Variance(common) => commands::variance(&common),
        Command::Simulate {
            common,
            n,
            trials,
            seed,
        } => commands::simulate(&common, n, trials, seed),
        Command::Oracle { common, n } => commands::oracle(&common, n),
        Command::Fcs { common, mode } => commands::fcs(&common, mode),
    }
}

fn main() -> ExitCode {
    let config = RunConfig::parse();
    let outcome = apply_thread_cap().and_then(|()| run(config));
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
