//! On-disk formats: instrument JSON, FCS JSON, atomic file writes.
//!
//! Complex numbers are `[re, im]` pairs and all matrices are row-major
//! nested arrays, so files are readable and diffable without tooling.
//! The instrument schema is the single persisted format; FCS models are
//! converted on the fly (`fcs export` / `fcs import`), not separately
//! maintained.

use crate::fcs::{FcsError, FcsModel};
use crate::instrument::{Instrument, InstrumentError, Outcome};
use crate::linalg::{c, CMat};
use crate::operator::{DensityOperator, OperatorError};
use crate::tol::Tolerances;
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Errors from reading or writing model files.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("matrix has {rows}x{cols} entries, expected {want_rows}x{want_cols}")]
    MatrixShape {
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Fcs(#[from] FcsError),
}

type RowsJson = Vec<Vec<[f64; 2]>>;

/// Serialized form of one outcome.
#[derive(Serialize, Deserialize)]
pub struct OutcomeFile {
    pub label: String,
    pub value: f64,
    pub kraus: Vec<RowsJson>,
}

/// Serialized instrument: `{"dim", "outcomes", "initial_state"?}`.
#[derive(Serialize, Deserialize)]
pub struct InstrumentFile {
    pub dim: usize,
    pub outcomes: Vec<OutcomeFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<RowsJson>,
}

/// Serialized FCS model: the joint transition map Γ on output⊗hidden plus
/// the diagonal observable on the output register.
#[derive(Serialize, Deserialize)]
pub struct FcsFile {
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// Kraus operators of Γ, each (output_dim·hidden_dim) × hidden_dim.
    pub gamma_kraus: Vec<RowsJson>,
    /// Observable eigenvalue per output basis vector.
    pub observable: Vec<f64>,
}

/// Row-major nested-array form of a matrix.
pub fn mat_to_rows(m: &CMat) -> RowsJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Parses a row-major nested array, enforcing the expected shape.
pub fn rows_to_mat(rows: &RowsJson, want_rows: usize, want_cols: usize) -> Result<CMat, IoError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if nrows != want_rows || ncols != want_cols || rows.iter().any(|r| r.len() != ncols) {
        return Err(IoError::MatrixShape {
            rows: nrows,
            cols: ncols,
            want_rows,
            want_cols,
        });
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| {
        c(rows[i][j][0], rows[i][j][1])
    }))
}

impl InstrumentFile {
    pub fn from_instrument(instr: &Instrument) -> Self {
        Self {
            dim: instr.dim(),
            outcomes: instr
                .outcomes()
                .iter()
                .map(|o| OutcomeFile {
                    label: o.label.clone(),
                    value: o.value,
                    kraus: o.kraus().iter().map(mat_to_rows).collect(),
                })
                .collect(),
            initial_state: Some(mat_to_rows(instr.initial_state().mat())),
        }
    }

    pub fn into_instrument(self, tol: &Tolerances) -> Result<Instrument, IoError> {
        let d = self.dim;
        let outcomes = self
            .outcomes
            .into_iter()
            .map(|o| {
                let kraus = o
                    .kraus
                    .iter()
                    .map(|k| rows_to_mat(k, d, d))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Outcome::new(o.label, o.value, kraus))
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        let initial_state = self
            .initial_state
            .map(|rows| {
                let m = rows_to_mat(&rows, d, d)?;
                Ok::<_, IoError>(DensityOperator::new(m, tol)?)
            })
            .transpose()?;
        Ok(Instrument::new(d, outcomes, initial_state, tol)?)
    }
}

impl FcsFile {
    /// Serializes a model whose observable is diagonal on the output basis
    /// (the form produced by `fcs::to_fcs`); a rotated observable is rejected
    /// rather than silently truncated to its diagonal.
    pub fn from_model(model: &FcsModel) -> Result<Self, IoError> {
        Ok(Self {
            hidden_dim: model.hidden_dim(),
            output_dim: model.output_dim(),
            gamma_kraus: model
                .gamma()
                .kraus()
                .expect("FcsModel keeps gamma in Kraus form")
                .iter()
                .map(mat_to_rows)
                .collect(),
            observable: model.diagonal_observable()?,
        })
    }

    pub fn into_model(self, tol: &Tolerances) -> Result<FcsModel, IoError> {
        let dh = self.hidden_dim;
        let dj = self.output_dim * dh;
        let kraus = self
            .gamma_kraus
            .iter()
            .map(|k| rows_to_mat(k, dj, dh))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FcsModel::from_parts(dh, self.output_dim, kraus, self.observable, tol)?)
    }
}

/// Loads an instrument from a JSON file.
pub fn load_instrument(path: &Path, tol: &Tolerances) -> Result<Instrument, IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: InstrumentFile = serde_json::from_str(&text)?;
    file.into_instrument(tol)
}

/// JSON text for an instrument (pretty, LF line endings, trailing newline).
pub fn instrument_to_json(instr: &Instrument) -> String {
    let mut s = serde_json::to_string_pretty(&InstrumentFile::from_instrument(instr))
        .expect("instrument file model serializes");
    s.push('\n');
    s
}

/// Writes bytes atomically: write a sibling temp file, then rename over the
/// target, so failures never leave a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let base = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = dir.join(format!(".{base}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    match std::fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e.into())
        }
    }
}
