//! Portable on-disk formats for models and training reports.
//!
//! Models are versioned JSON with row-major metric entries and
//! full-precision decimal floats, so files diff cleanly across platforms
//! and identical runs produce identical bytes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distance::{ModelParams, Region};
use crate::geometry::Ball;
use crate::metrics::MetricMatrix;
use crate::trainer::{TrainConfig, TrainReport};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub dim: usize,
    pub num_regions: usize,
    /// Row-major d×d entries.
    pub background_metric: Vec<f64>,
    pub regions: Vec<RegionFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionFile {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Row-major d×d entries.
    pub metric: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReportFile {
    pub format_version: u32,
    pub config: TrainConfig,
    pub epochs_run: usize,
    pub objective_history: Vec<f64>,
}

fn matrix_to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            out.push(m[(r, c)]);
        }
    }
    out
}

fn matrix_from_row_major(entries: &[f64], dim: usize) -> Result<DMatrix<f64>, String> {
    if entries.len() != dim * dim {
        return Err(format!(
            "expected {} metric entries for dim {dim}, found {}",
            dim * dim,
            entries.len()
        ));
    }
    Ok(DMatrix::from_fn(dim, dim, |r, c| entries[r * dim + c]))
}

impl ModelFile {
    pub fn from_model(model: &ModelParams) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            dim: model.dim(),
            num_regions: model.num_regions(),
            background_metric: matrix_to_row_major(model.background_metric.as_matrix()),
            regions: model
                .regions
                .iter()
                .map(|r| RegionFile {
                    center: r.ball.center.iter().cloned().collect(),
                    radius: r.ball.radius,
                    metric: matrix_to_row_major(r.metric.as_matrix()),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<ModelParams, String> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            ));
        }
        if self.regions.len() != self.num_regions {
            return Err(format!(
                "model declares {} regions but carries {}",
                self.num_regions,
                self.regions.len()
            ));
        }
        let background_metric =
            MetricMatrix::new(matrix_from_row_major(&self.background_metric, self.dim)?);
        let mut regions = Vec::with_capacity(self.regions.len());
        for (s, r) in self.regions.into_iter().enumerate() {
            if r.center.len() != self.dim {
                return Err(format!("region {s} center has wrong dimension"));
            }
            if !(r.radius > 0.0) {
                return Err(format!("region {s} has non-positive radius {}", r.radius));
            }
            regions.push(Region {
                ball: Ball::new(DVector::from_vec(r.center), r.radius),
                metric: MetricMatrix::new(matrix_from_row_major(&r.metric, self.dim)?),
            });
        }
        Ok(ModelParams {
            background_metric,
            regions,
        })
    }
}

pub fn model_to_json(model: &ModelParams) -> String {
    let mut text = serde_json::to_string_pretty(&ModelFile::from_model(model))
        .expect("model serialization cannot fail");
    text.push('\n');
    text
}

pub fn model_from_json(text: &str) -> Result<ModelParams, String> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    file.into_model()
}

pub fn report_to_json(report: &TrainReport, config: &TrainConfig) -> String {
    let file = TrainReportFile {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        epochs_run: report.epochs_run,
        objective_history: report.objective_history.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("report serialization cannot fail");
    text.push('\n');
    text
}
