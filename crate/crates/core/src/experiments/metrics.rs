use serde::{Deserialize, Serialize};

use crate::error::ExperimentError;

/// `1 − SSE/SST` for one output.
pub fn r_squared(predictions: &[f64], actuals: &[f64]) -> Result<f64, ExperimentError> {
    if predictions.len() != actuals.len() || actuals.len() < 2 {
        return Err(ExperimentError::UndefinedMetric(format!(
            "R² needs two or more paired values, got {} predictions and {} actuals",
            predictions.len(),
            actuals.len()
        )));
    }
    let mean = actuals.iter().sum::<f64>() / actuals.len() as f64;
    let sst: f64 = actuals.iter().map(|a| (a - mean) * (a - mean)).sum();
    if sst == 0.0 {
        return Err(ExperimentError::UndefinedMetric("actual values are all identical (SST = 0)".into()));
    }
    let sse: f64 = predictions.iter().zip(actuals).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(1.0 - sse / sst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSquared {
    /// Indexed by output; `None` for outputs that were not predicted.
    pub per_output: Vec<Option<f64>>,
    /// Unweighted mean over the scored outputs.
    pub mean: f64,
}

/// Column-wise R² over rows of predictions and actuals. Columns whose
/// predictions are `None` are skipped.
pub fn r_squared_columns(predictions: &[Vec<Option<f64>>], actuals: &[Vec<f64>]) -> Result<RSquared, ExperimentError> {
    let width = actuals.first().map_or(0, Vec::len);
    let mut per_output = Vec::with_capacity(width);
    for j in 0..width {
        let p: Option<Vec<f64>> = predictions.iter().map(|row| row.get(j).copied().flatten()).collect();
        per_output.push(match p {
            Some(p) => Some(r_squared(&p, &actuals.iter().map(|r| r[j]).collect::<Vec<_>>())?),
            None => None,
        });
    }
    let scored: Vec<f64> = per_output.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(ExperimentError::UndefinedMetric("no output was predicted".into()));
    }
    let mean = scored.iter().sum::<f64>() / scored.len() as f64;
    Ok(RSquared { per_output, mean })
}
