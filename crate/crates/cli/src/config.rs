//! Run configuration: a JSON file plus flag overrides, resolved into the
//! dataset spec and per-model experiment configs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use shm_core::dataset::DatasetSpec;
use shm_core::experiments::{parse_element, ExperimentConfig, ModelKind, TrainConfig};
use shm_core::pbp::PbpConfig;
use shm_core::preprocess::InputTransform;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    FullPaper,
    #[default]
    Desk,
}

impl Preset {
    pub fn spec(self) -> DatasetSpec {
        match self {
            Preset::FullPaper => DatasetSpec::full_paper(),
            Preset::Desk => DatasetSpec::desk(),
        }
    }
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub out_dir: Option<PathBuf>,
    /// Dataset location; defaults to `<out_dir>/data/<dataset hash>`.
    pub dataset_dir: Option<PathBuf>,
    pub seed: u64,
    pub model: Option<ModelKind>,
    pub element: Option<String>,
    pub sample_id: Option<usize>,
    pub top_k: Option<usize>,
    /// Replaces the preset's dataset spec entirely.
    pub dataset: Option<DatasetSpec>,
    pub loss_factor: Option<f64>,
    pub test_fraction: Option<f64>,
    pub validation_fraction: Option<f64>,
    pub transform: Option<InputTransform>,
    pub standardize_features: Option<bool>,
    pub train: Option<TrainConfig>,
    pub pbp: Option<PbpConfig>,
    pub cnn_grid: Option<(usize, usize)>,
}

/// Flag values; `None` leaves the file (or default) value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub element: Option<String>,
    pub sample_id: Option<usize>,
    pub top_k: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(format!("reading config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = flags.preset {
            cfg.preset = v;
        }
        if let Some(v) = flags.seed {
            cfg.seed = v;
        }
        if let Some(v) = &flags.out_dir {
            cfg.out_dir = Some(v.clone());
        }
        if let Some(v) = flags.model {
            cfg.model = Some(v);
        }
        if let Some(v) = &flags.element {
            cfg.element = Some(v.clone());
        }
        if let Some(v) = flags.sample_id {
            cfg.sample_id = Some(v);
        }
        if let Some(v) = flags.top_k {
            cfg.top_k = Some(v);
        }
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec, CliError> {
        let mut spec = self.dataset.clone().unwrap_or_else(|| self.preset.spec());
        if let Some(eta) = self.loss_factor {
            spec.material.loss_factor = eta;
        }
        spec.validate().map_err(|e| CliError::config(format!("dataset: {e}")))?;
        Ok(spec)
    }

    pub fn dataset_dir(&self) -> Result<PathBuf, CliError> {
        match &self.dataset_dir {
            Some(d) => Ok(d.clone()),
            None => Ok(self.out_dir().join("data").join(&sha256_hex(&self.dataset_spec()?)[..16])),
        }
    }

    pub fn element(&self) -> Result<Option<usize>, CliError> {
        self.element.as_deref().map(parse_element).transpose().map_err(CliError::from)
    }

    /// Experiment settings for `model`, with `element` restricting the
    /// per-element models when given.
    pub fn experiment(&self, model: ModelKind, element: Option<usize>) -> Result<ExperimentConfig, CliError> {
        let mut e = ExperimentConfig::for_model(model, self.seed);
        if let Some(v) = self.test_fraction {
            e.split.test_fraction = v;
        }
        if let Some(v) = self.validation_fraction {
            e.split.validation_fraction = v;
        }
        if let Some(v) = self.transform {
            e.transform = v;
        }
        if let Some(v) = self.standardize_features {
            e.standardize_features = v;
        }
        if let Some(v) = self.train {
            e.train = v;
        }
        if let Some(v) = &self.pbp {
            e.pbp = v.clone();
        }
        e.cnn_grid = self.cnn_grid;
        if let Some(el) = element {
            if model == ModelKind::Lstm {
                return Err(CliError::config("the LSTM predicts all four elements; drop --element for training"));
            }
            e.elements = vec![el];
        }
        e.validate()?;
        Ok(e)
    }

    /// Hash of everything that affects trained models except the model
    /// kind, so the three models of one configuration share a directory.
    pub fn run_hash(&self, element: Option<usize>) -> Result<String, CliError> {
        #[derive(Serialize)]
        struct Hashed<'a> {
            dataset: DatasetSpec,
            seed: u64,
            element: Option<usize>,
            test_fraction: Option<f64>,
            validation_fraction: Option<f64>,
            transform: &'a Option<InputTransform>,
            standardize_features: Option<bool>,
            train: &'a Option<TrainConfig>,
            pbp: &'a Option<PbpConfig>,
            cnn_grid: Option<(usize, usize)>,
        }
        Ok(sha256_hex(&Hashed {
            dataset: self.dataset_spec()?,
            seed: self.seed,
            element,
            test_fraction: self.test_fraction,
            validation_fraction: self.validation_fraction,
            transform: &self.transform,
            standardize_features: self.standardize_features,
            train: &self.train,
            pbp: &self.pbp,
            cnn_grid: self.cnn_grid,
        }))
    }

    pub fn run_dir(&self, model: ModelKind, element: Option<usize>) -> Result<PathBuf, CliError> {
        Ok(self.out_dir().join("runs").join(&self.run_hash(element)?[..16]).join(model.name()))
    }
}

pub fn sha256_hex<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Leaf-by-leaf differences between two JSON documents as
/// `path: left -> right` lines.
pub fn json_diff(left: &Value, right: &Value) -> Vec<String> {
    fn walk(path: String, a: &Value, b: &Value, out: &mut Vec<String>) {
        match (a, b) {
            (Value::Object(x), Value::Object(y)) => {
                let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
                keys.sort();
                keys.dedup();
                for k in keys {
                    let null = Value::Null;
                    walk(format!("{path}.{k}"), x.get(k).unwrap_or(&null), y.get(k).unwrap_or(&null), out);
                }
            }
            (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
                for (i, (p, q)) in x.iter().zip(y).enumerate() {
                    walk(format!("{path}[{i}]"), p, q, out);
                }
            }
            _ if a != b => out.push(format!("{path}: {a} -> {b}")),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(String::new(), left, right, &mut out);
    out
}
