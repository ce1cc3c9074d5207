use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{cnn_architecture, cnn_grid, lstm_architecture, InputLayout, ModelKind, LSTM_STEPS};
use super::metrics::{r_squared_columns, RSquared};
use super::model::{Member, MemberBody, TrainedModel};
use super::split::{split_indices, Split, SplitSpec};
use super::train::{train_network, Samples, TrainConfig, TrainingHistory};
use crate::dataset::FrfDataset;
use crate::error::{ExperimentError, NnError};
use crate::fem::NUM_ELEMENTS;
use crate::nn::{Network, Tensor};
use crate::par::{ordered_map, ordered_map_slice, Execution};
use crate::pbp::{fit_with, FitTrace, PbpConfig, PbpNetwork};
use crate::preprocess::{FeaturePipeline, InputTransform, Standardizer};

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub seed: u64,
    pub split: SplitSpec,
    pub transform: InputTransform,
    pub standardize_features: bool,
    /// Optimiser and stopping rule for the CNN and LSTM.
    pub train: TrainConfig,
    pub pbp: PbpConfig,
    /// Elements to model (CNN and PBP train one network per element).
    pub elements: Vec<usize>,
    /// Overrides the automatic CNN input grid.
    pub cnn_grid: Option<(usize, usize)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_model(ModelKind::Cnn, 0)
    }
}

impl ExperimentConfig {
    /// Defaults per model: 70:30 train/test with a 70:30 train/validation
    /// cut for the CNN and LSTM, 50:50 with no validation set for PBP.
    pub fn for_model(model: ModelKind, seed: u64) -> Self {
        let split = match model {
            ModelKind::Pbp => SplitSpec::half(seed),
            _ => SplitSpec { seed, ..SplitSpec::default() },
        };
        Self {
            model,
            seed,
            split,
            transform: InputTransform::default(),
            standardize_features: true,
            train: TrainConfig::default(),
            pbp: PbpConfig::default(),
            elements: (0..NUM_ELEMENTS).collect(),
            cnn_grid: None,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.split.validate()?;
        self.train.validate()?;
        if self.elements.is_empty() {
            return Err(ExperimentError::Config("no elements selected".into()));
        }
        if let Some(&e) = self.elements.iter().find(|&&e| e >= NUM_ELEMENTS) {
            return Err(ExperimentError::Config(format!("element index {e} out of range")));
        }
        let mut sorted = self.elements.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.elements.len() {
            return Err(ExperimentError::Config("duplicate element in selection".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub elements: Vec<usize>,
    pub input_shape: Vec<usize>,
    pub num_params: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<TrainingHistory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pbp_trace: Option<FitTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub model: ModelKind,
    pub config_hash: String,
    pub seed: u64,
    pub n_samples: usize,
    pub feature_length: usize,
    pub split: SplitSizes,
    pub members: Vec<MemberReport>,
    /// Held-out R² per element and their unweighted mean.
    pub r2: RSquared,
}

impl TrainingReport {
    /// Writes `report.json` and a per-epoch CSV: `loss.csv` (member,
    /// epoch, train_loss, val_loss) for gradient-trained models or
    /// `log_z.csv` (member, epoch, mean_log_z) for PBP.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)? + "\n")?;
        if self.model == ModelKind::Pbp {
            let mut w = csv::Writer::from_path(dir.join("log_z.csv"))?;
            w.write_record(["member", "epoch", "mean_log_z"])?;
            for (i, m) in self.members.iter().enumerate() {
                for (e, z) in m.pbp_trace.iter().flat_map(|t| t.mean_log_z.iter().enumerate()) {
                    w.write_record([i.to_string(), (e + 1).to_string(), z.to_string()])?;
                }
            }
            w.flush()?;
        } else {
            let mut w = csv::Writer::from_path(dir.join("loss.csv"))?;
            w.write_record(["member", "epoch", "train_loss", "val_loss"])?;
            for (i, m) in self.members.iter().enumerate() {
                for e in m.history.iter().flat_map(|h| &h.epochs) {
                    let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
                    w.write_record([i.to_string(), e.epoch.to_string(), e.train_loss.to_string(), val])?;
                }
            }
            w.flush()?;
        }
        Ok(())
    }
}

struct NetSamples<'a> {
    ds: &'a FrfDataset,
    pipeline: &'a FeaturePipeline,
    layout: InputLayout,
    targets: Vec<Vec<f64>>,
}

impl Samples for NetSamples<'_> {
    fn input(&self, index: usize) -> Result<Tensor, NnError> {
        self.layout.to_tensor(&self.pipeline.apply(&self.ds.row_f64(index)))
    }

    fn target(&self, index: usize) -> &[f64] {
        &self.targets[index]
    }
}

fn member_seed(seed: u64, member: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(member as u64 + 1)
}

/// Scores `model` on the given samples of `ds`.
pub fn evaluate_on(model: &TrainedModel, ds: &FrfDataset, indices: &[usize], exec: Execution) -> Result<RSquared, ExperimentError> {
    let preds = ordered_map_slice(exec, indices, |&i| model.predict(&ds.row_f64(i)));
    let preds: Vec<Vec<Option<f64>>> = preds.into_iter().collect::<Result<_, _>>()?;
    let actuals: Vec<Vec<f64>> = indices.iter().map(|&i| ds.targets[i].to_vec()).collect();
    r_squared_columns(&preds, &actuals)
}

/// Held-out R² of a trained model using the split stored with it.
pub fn evaluate_model(model: &TrainedModel, ds: &FrfDataset, exec: Execution) -> Result<RSquared, ExperimentError> {
    let split = split_indices(ds.len(), &model.split)?;
    evaluate_on(model, ds, &split.test, exec)
}

/// Fits the configured model on the training part of the split and scores
/// it on the test part.
pub fn train_model(
    ds: &FrfDataset,
    cfg: &ExperimentConfig,
    config_hash: &str,
) -> Result<(TrainedModel, TrainingReport), ExperimentError> {
    cfg.validate()?;
    let split = split_indices(ds.len(), &cfg.split)?;
    let l = ds.feature_length();
    let exec = cfg.train.execution;
    let train_rows: Vec<Vec<f64>> = split.train.iter().map(|&i| ds.row_f64(i)).collect();
    let pipeline = FeaturePipeline::fit(cfg.transform, cfg.standardize_features, train_rows.iter().map(Vec::as_slice), l);
    drop(train_rows);
    let target_rows: Vec<Vec<f64>> = split.train.iter().map(|&i| ds.targets[i].to_vec()).collect();
    let target_scaler = Standardizer::fit(target_rows.iter().map(Vec::as_slice), NUM_ELEMENTS);
    let scaled: Vec<Vec<f64>> = ds.targets.iter().map(|t| target_scaler.apply(t)).collect();
    let sub_scaler = |elements: &[usize]| Standardizer {
        mean: elements.iter().map(|&e| target_scaler.mean[e]).collect(),
        std: elements.iter().map(|&e| target_scaler.std[e]).collect(),
    };

    let built: Vec<(Member, MemberReport)> = match cfg.model {
        ModelKind::Cnn | ModelKind::Lstm => {
            let groups: Vec<Vec<usize>> = match cfg.model {
                ModelKind::Cnn => cfg.elements.iter().map(|&e| vec![e]).collect(),
                _ => vec![(0..NUM_ELEMENTS).collect()],
            };
            let results = ordered_map(exec, groups.len(), |gi| -> Result<(Member, MemberReport), ExperimentError> {
                let elements = &groups[gi];
                let (layout, arch) = if cfg.model == ModelKind::Cnn {
                    let (h, w) = match cfg.cnn_grid {
                        Some(g) => g,
                        None => cnn_grid(elements[0], l)?,
                    };
                    (InputLayout::Grid { height: h, width: w }, cnn_architecture(elements[0], h, w)?)
                } else {
                    (InputLayout::Sequence { steps: LSTM_STEPS }, lstm_architecture(l)?)
                };
                let mut net = Network::new(&arch)?;
                let seed = member_seed(cfg.seed, gi);
                net.init(&mut ChaCha8Rng::seed_from_u64(seed));
                let samples = NetSamples {
                    ds,
                    pipeline: &pipeline,
                    layout,
                    targets: scaled.iter().map(|t| elements.iter().map(|&e| t[e]).collect()).collect(),
                };
                let history = train_network(&mut net, &samples, &split.train, &split.validation, &cfg.train, seed)?;
                log::info!(
                    "{} member {gi}: best epoch {} of {}",
                    cfg.model.name(),
                    history.best_epoch,
                    history.epochs.len() - 1
                );
                let report = MemberReport {
                    elements: elements.clone(),
                    input_shape: arch.input_shape.clone(),
                    num_params: net.num_params(),
                    history: Some(history),
                    pbp_trace: None,
                };
                let member = Member { elements: elements.clone(), target_scaler: sub_scaler(elements), body: MemberBody::Network { layout, net } };
                Ok((member, report))
            });
            results.into_iter().collect::<Result<_, _>>()?
        }
        ModelKind::Pbp => {
            let results = ordered_map(exec, cfg.elements.len(), |gi| -> Result<(Member, MemberReport), ExperimentError> {
                let e = cfg.elements[gi];
                let seed = member_seed(cfg.seed, gi);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut net = PbpNetwork::new(l, &cfg.pbp, &mut rng)?;
                let ys: Vec<f64> = split.train.iter().map(|&i| scaled[i][e]).collect();
                let trace = fit_with(&mut net, &ys, |j| pipeline.apply(&ds.row_f64(split.train[j])), cfg.pbp.epochs, seed)?;
                log::info!("pbp E{}: mean log Z per epoch {:?}", e + 1, trace.mean_log_z);
                let report = MemberReport {
                    elements: vec![e],
                    input_shape: vec![l],
                    num_params: net.num_weights(),
                    history: None,
                    pbp_trace: Some(trace),
                };
                Ok((Member { elements: vec![e], target_scaler: sub_scaler(&[e]), body: MemberBody::Pbp(net) }, report))
            });
            results.into_iter().collect::<Result<_, _>>()?
        }
    };
    let (members, member_reports): (Vec<Member>, Vec<MemberReport>) = built.into_iter().unzip();
    let model = TrainedModel {
        kind: cfg.model,
        feature_length: l,
        pipeline,
        members,
        split: cfg.split,
        seed: cfg.seed,
        config_hash: config_hash.to_string(),
    };
    let r2 = evaluate_on(&model, ds, &split.test, exec)?;
    let Split { train, validation, test } = &split;
    let report = TrainingReport {
        model: cfg.model,
        config_hash: config_hash.to_string(),
        seed: cfg.seed,
        n_samples: ds.len(),
        feature_length: l,
        split: SplitSizes { train: train.len(), validation: validation.len(), test: test.len() },
        members: member_reports,
        r2,
    };
    Ok((model, report))
}
