//! Trained models: feature pipeline, target scaling and one or more member
//! networks, each predicting a subset of the element diameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::{InputLayout, ModelKind};
use super::split::SplitSpec;
use crate::checkpoint;
use crate::error::{CheckpointError, ExperimentError};
use crate::fem::NUM_ELEMENTS;
use crate::nn::{Architecture, Network, Tensor};
use crate::pbp::{GammaParams, GaussianLayer, PbpNetwork};
use crate::preprocess::{FeaturePipeline, Standardizer};

#[derive(Debug, Clone)]
pub enum MemberBody {
    Network { layout: InputLayout, net: Network },
    Pbp(PbpNetwork),
}

#[derive(Debug, Clone)]
pub struct Member {
    /// Element indices predicted by this member, in output order.
    pub elements: Vec<usize>,
    /// Scaling of this member's targets; predictions are inverted through it.
    pub target_scaler: Standardizer,
    pub body: MemberBody,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub feature_length: usize,
    pub pipeline: FeaturePipeline,
    pub members: Vec<Member>,
    pub split: SplitSpec,
    pub seed: u64,
    pub config_hash: String,
}

impl Member {
    /// Standardized outputs for already transformed features.
    fn raw_outputs(&self, x: &[f64]) -> Result<Vec<f64>, ExperimentError> {
        match &self.body {
            MemberBody::Network { layout, net } => Ok(net.forward(&layout.to_tensor(x)?)?.into_data()),
            MemberBody::Pbp(net) => Ok(vec![net.predict(x)?.mean]),
        }
    }
}

impl TrainedModel {
    fn check_len(&self, raw: &[f64]) -> Result<(), ExperimentError> {
        if raw.len() != self.feature_length {
            return Err(ExperimentError::Config(format!(
                "model expects {} features, sample has {}",
                self.feature_length,
                raw.len()
            )));
        }
        Ok(())
    }

    /// Elements this model predicts, ascending.
    pub fn elements(&self) -> Vec<usize> {
        let mut e: Vec<usize> = self.members.iter().flat_map(|m| m.elements.iter().copied()).collect();
        e.sort_unstable();
        e
    }

    /// Diameters in metres, `None` for elements no member predicts.
    pub fn predict(&self, raw: &[f64]) -> Result<Vec<Option<f64>>, ExperimentError> {
        self.check_len(raw)?;
        let x = self.pipeline.apply(raw);
        let mut out = vec![None; NUM_ELEMENTS];
        for m in &self.members {
            let y = m.target_scaler.invert(&m.raw_outputs(&x)?);
            for (&e, v) in m.elements.iter().zip(y) {
                out[e] = Some(v);
            }
        }
        Ok(out)
    }

    /// Gradient of the predicted diameter of `element` (metres) with respect
    /// to the raw feature vector.
    pub fn input_gradient(&self, raw: &[f64], element: usize) -> Result<Vec<f64>, ExperimentError> {
        self.check_len(raw)?;
        let (m, pos) = self
            .members
            .iter()
            .find_map(|m| m.elements.iter().position(|&e| e == element).map(|p| (m, p)))
            .ok_or_else(|| ExperimentError::Config(format!("model does not predict element E{}", element + 1)))?;
        let x = self.pipeline.apply(raw);
        let scale = m.target_scaler.std[pos];
        let g = match &m.body {
            MemberBody::Network { layout, net } => {
                let trace = net.forward_trace(&layout.to_tensor(&x)?)?;
                let mut up = vec![0.0; m.elements.len()];
                up[pos] = scale;
                let (_, gin) = net.backward(&trace, &Tensor::new(vec![up.len()], up)?)?;
                layout.pullback(&gin, x.len())
            }
            MemberBody::Pbp(net) => net.input_gradient(&x)?.1.iter().map(|g| g * scale).collect(),
        };
        Ok(self.pipeline.pullback(raw, &g))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CheckpointError> {
        let mut blobs: Vec<(String, &[f64])> = Vec::new();
        let mut members = Vec::with_capacity(self.members.len());
        for (i, m) in self.members.iter().enumerate() {
            let body = match &m.body {
                MemberBody::Network { layout, net } => {
                    blobs.push((format!("m{i}_params"), &net.params));
                    BodyHeader::Network { layout: *layout, architecture: net.architecture() }
                }
                MemberBody::Pbp(net) => {
                    for (j, l) in net.layers.iter().enumerate() {
                        blobs.push((format!("m{i}_l{j}_mean"), &l.mean));
                        blobs.push((format!("m{i}_l{j}_variance"), &l.variance));
                    }
                    BodyHeader::Pbp {
                        layer_sizes: net.layers.iter().map(|l| (l.inputs, l.outputs)).collect(),
                        noise: net.noise,
                        prior: net.prior,
                    }
                }
            };
            members.push(MemberHeader { elements: m.elements.clone(), target_scaler: m.target_scaler.clone(), body });
        }
        let header = ModelHeader {
            kind: self.kind,
            feature_length: self.feature_length,
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            split: self.split,
            pipeline: self.pipeline.clone(),
            members,
        };
        let refs: Vec<(&str, &[f64])> = blobs.iter().map(|(n, d)| (n.as_str(), *d)).collect();
        checkpoint::save(dir, CHECKPOINT_KIND, &header, &refs)
    }

    pub fn load(dir: &Path) -> Result<Self, ExperimentError> {
        if !dir.join(checkpoint::HEADER_FILE).exists() {
            return Err(ExperimentError::MissingCheckpoint(dir.display().to_string()));
        }
        let (h, blobs): (ModelHeader, _) = checkpoint::load(dir, CHECKPOINT_KIND)?;
        let mut blobs = blobs.into_iter();
        let mut next = |what: &str| {
            blobs
                .next()
                .map(|(_, d)| d)
                .ok_or_else(|| CheckpointError::Malformed(format!("missing blob for {what}")))
        };
        let mut members = Vec::with_capacity(h.members.len());
        for mh in h.members {
            let body = match mh.body {
                BodyHeader::Network { layout, architecture } => {
                    let mut net = Network::new(&architecture)?;
                    let p = next("network parameters")?;
                    if p.len() != net.num_params() {
                        return Err(CheckpointError::Malformed(format!(
                            "network has {} parameters, blob has {}",
                            net.num_params(),
                            p.len()
                        ))
                        .into());
                    }
                    net.params = p;
                    MemberBody::Network { layout, net }
                }
                BodyHeader::Pbp { layer_sizes, noise, prior } => {
                    let mut layers = Vec::with_capacity(layer_sizes.len());
                    for (inputs, outputs) in layer_sizes {
                        let mean = next("layer means")?;
                        let variance = next("layer variances")?;
                        layers.push(GaussianLayer::new(inputs, outputs, mean, variance)?);
                    }
                    MemberBody::Pbp(PbpNetwork::from_layers(layers, noise, prior)?)
                }
            };
            members.push(Member { elements: mh.elements, target_scaler: mh.target_scaler, body });
        }
        Ok(Self {
            kind: h.kind,
            feature_length: h.feature_length,
            pipeline: h.pipeline,
            members,
            split: h.split,
            seed: h.seed,
            config_hash: h.config_hash,
        })
    }
}

pub const CHECKPOINT_KIND: &str = "shm-model";

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum BodyHeader {
    Network { layout: InputLayout, architecture: Architecture },
    Pbp { layer_sizes: Vec<(usize, usize)>, noise: GammaParams, prior: GammaParams },
}

#[derive(Serialize, Deserialize)]
struct MemberHeader {
    elements: Vec<usize>,
    target_scaler: Standardizer,
    body: BodyHeader,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    kind: ModelKind,
    feature_length: usize,
    config_hash: String,
    seed: u64,
    split: SplitSpec,
    pipeline: FeaturePipeline,
    members: Vec<MemberHeader>,
}
