//! Plot-ready CSV reports with a fixed schema.

use std::path::Path;

use crate::{CliError, Result};

pub const REPORT_HEADER: &str = "param,predictor,estimator,metric,true_value,rmse,mean,std,trials";

/// One record per (configuration, estimator, metric). Optional fields
/// are emitted as empty cells where a column does not apply (e.g. no
/// true value for a trained-model row).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// Swept parameter: an alpha value or an MCAR sample size.
    pub param: String,
    /// Predictor name, `ALL` for rows pooled across predictors, `MF`
    /// for trained-model rows.
    pub predictor: String,
    pub estimator: String,
    pub metric: String,
    pub true_value: Option<f64>,
    /// Root mean squared deviation of the estimates from the true value.
    pub rmse: Option<f64>,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<ReportRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.param,
                row.predictor,
                row.estimator,
                row.metric,
                opt_cell(row.true_value),
                opt_cell(row.rmse),
                cell(row.mean),
                cell(row.std),
                row.trials,
            ));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| CliError::io(path, e))
    }

    pub fn find(&self, predictor: &str, estimator: &str, metric: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.predictor == predictor && r.estimator == estimator && r.metric == metric)
    }
}

/// Full round-trip precision; reports feed further tooling, not eyes.
fn cell(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(cell).unwrap_or_default()
}

/// Mean, sample standard deviation (0 for a single value), and, when a
/// target is given, root mean squared deviation from it.
pub fn summarize(values: &[f64], target: Option<f64>) -> (f64, f64, Option<f64>) {
    assert!(!values.is_empty(), "summary of an empty sample");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let rmse = target.map(|t| (values.iter().map(|v| (v - t) * (v - t)).sum::<f64>() / n).sqrt());
    (mean, std, rmse)
}
