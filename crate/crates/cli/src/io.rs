//! Data CSV and model JSON files.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use trgmm_core::model::{backward_transform, forward_transform, Dataset, GmmParams, PenaltyOverrides};
use trgmm_core::report::{FitReport, Solver};
use trgmm_core::spd::{SpdMatrix, ThetaPoint};

use crate::error::{CliError, CliResult};

/// Reads a headed numeric CSV, one observation per row.
pub fn read_data_csv(path: &Path) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let width = reader.headers().map_err(|e| CliError::io(path, e))?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        if record.len() != width {
            return Err(CliError::io(path, format!("line {}: expected {width} fields", i + 2)));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::io(path, format!("line {}: '{field}' is not a number", i + 2)))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 || width == 0 {
        return Err(CliError::io(path, "no observations"));
    }
    Dataset::new(DMatrix::from_row_slice(rows, width, &values)).map_err(|e| CliError::io(path, e))
}

pub fn write_data_csv(path: &Path, points: &DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header: Vec<String> = (1..=points.ncols()).map(|j| format!("x{j}")).collect();
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for row in points.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes rows of already formatted fields under `header`.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir.to_path_buf())
}

/// Per-column z-score constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Normalization {
    pub fn fit(data: &Dataset) -> CliResult<Self> {
        if data.len() < 2 {
            return Err(CliError::Usage("normalization needs at least two observations".into()));
        }
        let mean = data.mean();
        let cov = data.covariance(1);
        let sds: Vec<f64> = (0..data.dim()).map(|j| cov[(j, j)].sqrt()).collect();
        if sds.iter().any(|s| !(*s > 0.0)) {
            return Err(CliError::Usage("cannot normalize a constant column".into()));
        }
        Ok(Self {
            means: mean.iter().cloned().collect(),
            sds,
        })
    }

    pub fn apply(&self, data: &Dataset) -> CliResult<Dataset> {
        if self.means.len() != data.dim() {
            return Err(CliError::Usage(format!(
                "model expects {} columns, data has {}",
                self.means.len(),
                data.dim()
            )));
        }
        let pts = data.points();
        let scaled = DMatrix::from_fn(pts.nrows(), pts.ncols(), |i, j| (pts[(i, j)] - self.means[j]) / self.sds[j]);
        Ok(Dataset::new(scaled)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub solver: Solver,
    pub iterations: usize,
    /// Absent in deterministic mode.
    pub time_s: Option<f64>,
    pub termination: String,
    #[serde(default)]
    pub penalty: PenaltyOverrides,
}

/// Mixture parameters together with the augmented blocks and free weight
/// coordinates (`K - 1` entries; the last coordinate is pinned at zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub eta: Vec<f64>,
    pub s_blocks: Vec<Vec<Vec<f64>>>,
    pub normalization: Option<Normalization>,
    pub meta: Option<ModelMeta>,
}

fn invalid(e: trgmm_core::Error) -> CliError {
    CliError::Usage(format!("invalid model: {e}"))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>]) -> CliResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Usage("model matrices must be square and nonempty".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn from_theta(theta: &ThetaPoint, params: &GmmParams) -> Self {
        Self {
            weights: params.weights().iter().cloned().collect(),
            means: params.means().iter().map(|m| m.iter().cloned().collect()).collect(),
            covariances: params.covariances().iter().map(|c| rows_of(c.matrix())).collect(),
            eta: theta.eta().iter().cloned().collect(),
            s_blocks: theta.s_blocks().iter().map(|s| rows_of(s.matrix())).collect(),
            normalization: None,
            meta: None,
        }
    }

    pub fn from_params(params: &GmmParams) -> CliResult<Self> {
        Ok(Self::from_theta(&forward_transform(params)?, params))
    }

    pub fn from_fit(fit: &FitReport, normalization: Option<Normalization>, meta: ModelMeta) -> Self {
        Self {
            normalization,
            meta: Some(meta),
            ..Self::from_theta(&fit.theta, &fit.params)
        }
    }

    /// Manifold point stored in the file.
    pub fn theta(&self) -> CliResult<ThetaPoint> {
        let blocks = self
            .s_blocks
            .iter()
            .map(|b| SpdMatrix::new(matrix_of(b)?).map_err(invalid))
            .collect::<CliResult<Vec<_>>>()?;
        ThetaPoint::new(blocks, DVector::from_column_slice(&self.eta)).map_err(invalid)
    }

    pub fn params(&self) -> CliResult<GmmParams> {
        let covs = self
            .covariances
            .iter()
            .map(|c| SpdMatrix::new(matrix_of(c)?).map_err(invalid))
            .collect::<CliResult<Vec<_>>>()?;
        let means = self.means.iter().map(|m| DVector::from_column_slice(m)).collect();
        GmmParams::new(DVector::from_column_slice(&self.weights), means, covs).map_err(invalid)
    }

    /// Parameters recovered from the stored blocks.
    pub fn params_from_blocks(&self) -> CliResult<GmmParams> {
        backward_transform(&self.theta()?).map_err(invalid)
    }
}
