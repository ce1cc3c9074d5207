//! Gradient saliency: which FRF features a predicted diameter is least
//! sensitive to, ranked by `|1 / g|`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::ModelKind;
use super::model::TrainedModel;
use crate::dataset::FrfDataset;
use crate::error::ExperimentError;
use crate::fem::NUM_ELEMENTS;

/// Gradients smaller than this in magnitude count as zero.
pub const GRADIENT_EPSILON: f64 = 1e-12;
pub const DEFAULT_TOP_K: usize = 10;
/// Quantile of `|g|` over the selected features used as the category
/// threshold.
pub const CATEGORY_QUANTILE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Increase,
    Decrease,
    Maintain,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Increase => "increase",
            Category::Decrease => "decrease",
            Category::Maintain => "maintain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SalientFeature {
    pub index: usize,
    pub raw_grad: f64,
    pub score: f64,
    pub category: Category,
}

/// Linear-interpolated quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Top-`k` features by `|1/g|` (ties by lower index). Gradients below
/// [`GRADIENT_EPSILON`] score `1/ε` and are always `maintain`; the rest are
/// `increase`/`decrease` when `g` exceeds `±θ`, θ being the
/// [`CATEGORY_QUANTILE`] of `|g|` over the selected set.
pub fn rank_features(grad: &[f64], k: usize) -> Result<(Vec<SalientFeature>, f64), ExperimentError> {
    if k == 0 || k > grad.len() {
        return Err(ExperimentError::Config(format!("top-k {k} must be in 1..={}", grad.len())));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(ExperimentError::Nn(crate::error::NnError::NonFinite("saliency gradient")));
    }
    let score = |g: f64| 1.0 / g.abs().max(GRADIENT_EPSILON);
    let mut order: Vec<usize> = (0..grad.len()).collect();
    order.sort_by(|&a, &b| score(grad[b]).total_cmp(&score(grad[a])).then(a.cmp(&b)));
    order.truncate(k);
    let mut mags: Vec<f64> = order.iter().map(|&i| grad[i].abs()).collect();
    mags.sort_by(f64::total_cmp);
    let theta = quantile(&mags, CATEGORY_QUANTILE);
    let features = order
        .into_iter()
        .map(|i| {
            let g = grad[i];
            let category = if g.abs() < GRADIENT_EPSILON {
                Category::Maintain
            } else if g > theta {
                Category::Increase
            } else if g < -theta {
                Category::Decrease
            } else {
                Category::Maintain
            };
            SalientFeature { index: i, raw_grad: g, score: score(g), category }
        })
        .collect();
    Ok((features, theta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSaliency {
    pub element: usize,
    pub threshold: f64,
    pub features: Vec<SalientFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyReport {
    pub model: ModelKind,
    pub config_hash: String,
    pub seed: u64,
    pub sample_id: usize,
    pub top_k: usize,
    pub actual: Vec<f64>,
    pub predicted: Vec<Option<f64>>,
    pub elements: Vec<ElementSaliency>,
}

/// Saliency of every element the model predicts for one dataset sample.
pub fn saliency(model: &TrainedModel, ds: &FrfDataset, sample_id: usize, k: usize) -> Result<SaliencyReport, ExperimentError> {
    if sample_id >= ds.len() {
        return Err(ExperimentError::Config(format!(
            "sample id {sample_id} out of range (dataset has {} samples)",
            ds.len()
        )));
    }
    let raw = ds.row_f64(sample_id);
    let predicted = model.predict(&raw)?;
    let mut elements = Vec::new();
    for e in model.elements() {
        let g = model.input_gradient(&raw, e)?;
        let (features, threshold) = rank_features(&g, k)?;
        elements.push(ElementSaliency { element: e, threshold, features });
    }
    Ok(SaliencyReport {
        model: model.kind,
        config_hash: model.config_hash.clone(),
        seed: model.seed,
        sample_id,
        top_k: k,
        actual: ds.targets[sample_id].to_vec(),
        predicted,
        elements,
    })
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |d| format!("{d:.4}"))
}

impl SaliencyReport {
    /// Actual vs predicted diameters, one column per element.
    pub fn table_block(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<10}", "Diameter");
        for e in 0..NUM_ELEMENTS {
            let _ = write!(s, "{:>10}", format!("E{}", e + 1));
        }
        s.push('\n');
        let _ = write!(s, "{:<10}", "Actual");
        for e in 0..NUM_ELEMENTS {
            let _ = write!(s, "{:>10}", fmt_cell(self.actual.get(e).copied()));
        }
        s.push('\n');
        let _ = write!(s, "{:<10}", "Predicted");
        for e in 0..NUM_ELEMENTS {
            let _ = write!(s, "{:>10}", fmt_cell(self.predicted.get(e).copied().flatten()));
        }
        s.push('\n');
        s
    }

    /// Writes `saliency.csv` (element, rank, index, raw_grad, score,
    /// category), `diameters.txt` (the actual/predicted block) and
    /// `saliency.json`.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("saliency.csv"))?;
        w.write_record(["element", "rank", "index", "raw_grad", "score", "category"])?;
        for el in &self.elements {
            for (r, f) in el.features.iter().enumerate() {
                w.write_record([
                    format!("E{}", el.element + 1),
                    (r + 1).to_string(),
                    f.index.to_string(),
                    format!("{:e}", f.raw_grad),
                    format!("{:e}", f.score),
                    f.category.name().to_string(),
                ])?;
            }
        }
        w.flush()?;
        let header = format!(
            "# model {} sample {} config {} seed {}\n",
            self.model.name(),
            self.sample_id,
            self.config_hash,
            self.seed
        );
        fs::write(dir.join("diameters.txt"), header + &self.table_block())?;
        fs::write(dir.join("saliency.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
