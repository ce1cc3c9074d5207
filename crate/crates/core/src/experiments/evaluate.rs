use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::ModelKind;
use super::model::TrainedModel;
use super::run::evaluate_model;
use crate::dataset::FrfDataset;
use crate::error::ExperimentError;
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: ModelKind,
    pub mean_r2: f64,
    pub per_element: Vec<Option<f64>>,
    pub config_hash: String,
    pub seed: u64,
}

/// One row per model with its held-out R², best first.
pub fn evaluate_all(models: &[TrainedModel], ds: &FrfDataset, exec: Execution) -> Result<Vec<SummaryRow>, ExperimentError> {
    let mut rows = Vec::with_capacity(models.len());
    for m in models {
        let r2 = evaluate_model(m, ds, exec)?;
        rows.push(SummaryRow {
            model: m.kind,
            mean_r2: r2.mean,
            per_element: r2.per_output,
            config_hash: m.config_hash.clone(),
            seed: m.seed,
        });
    }
    rows.sort_by(|a, b| b.mean_r2.total_cmp(&a.mean_r2).then(a.model.name().cmp(b.model.name())));
    Ok(rows)
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut s = format!("{:<8}{:>10}\n", "Model", "R2");
    for r in rows {
        let _ = writeln!(s, "{:<8}{:>10.4}", r.model.name(), r.mean_r2);
    }
    s
}

/// Writes `summary.json` and `summary.csv` (model, mean_r2, r2_e1..r2_e4).
pub fn write_summary(rows: &[SummaryRow], dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(rows)? + "\n")?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["model", "mean_r2", "r2_e1", "r2_e2", "r2_e3", "r2_e4", "config_hash", "seed"])?;
    for r in rows {
        let mut rec = vec![r.model.name().to_string(), r.mean_r2.to_string()];
        rec.extend((0..4).map(|e| r.per_element.get(e).copied().flatten().map(|v| v.to_string()).unwrap_or_default()));
        rec.push(r.config_hash.clone());
        rec.push(r.seed.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
