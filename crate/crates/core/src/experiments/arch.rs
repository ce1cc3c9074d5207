//! Model architectures: the per-element CNNs, the stacked LSTM and the
//! input layouts that turn a flat FRF vector into a network input.

use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, NnError};
use crate::fem::NUM_ELEMENTS;
use crate::nn::{Architecture, ConvSpec, LayerSpec, Network, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Lstm,
    Pbp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Lstm => "lstm",
            ModelKind::Pbp => "pbp",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ModelKind::Cnn),
            "lstm" => Ok(ModelKind::Lstm),
            "pbp" => Ok(ModelKind::Pbp),
            other => Err(ExperimentError::Config(format!("unknown model kind '{other}' (cnn, lstm, pbp)"))),
        }
    }
}

/// Parses `E1`..`E4` (or `1`..`4`) into a zero-based element index.
pub fn parse_element(s: &str) -> Result<usize, ExperimentError> {
    let digits = s.trim().trim_start_matches(['E', 'e']);
    match digits.parse::<usize>() {
        Ok(n) if (1..=NUM_ELEMENTS).contains(&n) => Ok(n - 1),
        _ => Err(ExperimentError::Config(format!("element '{s}' is not one of E1..E{NUM_ELEMENTS}"))),
    }
}

/// One convolution block of a CNN row: `filters` of size `extent`,
/// optionally followed by max pooling with stride equal to its extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvBlock {
    pub filters: usize,
    pub extent: usize,
    pub pool: Option<usize>,
}

const fn block(filters: usize, extent: usize, pool: usize) -> ConvBlock {
    ConvBlock { filters, extent, pool: if pool == 0 { None } else { Some(pool) } }
}

/// Per-element CNN rows.
pub const CNN_TABLE: [&[ConvBlock]; NUM_ELEMENTS] = [
    &[block(32, 3, 4), block(32, 3, 2), block(32, 3, 2), block(8, 3, 0)],
    &[block(64, 5, 4), block(32, 3, 2), block(32, 3, 0)],
    &[block(64, 5, 4), block(32, 3, 2), block(16, 3, 0)],
    &[block(16, 3, 2), block(32, 3, 2)],
];

/// The layer chain for one element on a `1 × height × width` input. The
/// first convolution is same-padded, later ones are unpadded; every
/// convolution is followed by ReLU and the chain ends with global average
/// pooling and a single-unit dense layer.
pub fn cnn_architecture(element: usize, height: usize, width: usize) -> Result<Architecture, ExperimentError> {
    let row = CNN_TABLE
        .get(element)
        .ok_or_else(|| ExperimentError::Config(format!("no CNN row for element index {element}")))?;
    let mut layers = Vec::new();
    for (i, b) in row.iter().enumerate() {
        let conv = if i == 0 { ConvSpec::same(b.filters, b.extent) } else { ConvSpec::valid(b.filters, b.extent) }?;
        layers.push(LayerSpec::Conv(conv));
        layers.push(LayerSpec::Relu);
        if let Some(p) = b.pool {
            layers.push(LayerSpec::MaxPool { extent: p, stride: p });
        }
    }
    layers.push(LayerSpec::GlobalAveragePool);
    layers.push(LayerSpec::Dense { outputs: 1 });
    let arch = Architecture { input_shape: vec![1, height, width], layers };
    Network::new(&arch).map_err(|e| {
        ExperimentError::Config(format!("E{} CNN does not fit a {height}x{width} input: {e}", element + 1))
    })?;
    Ok(arch)
}

/// Whether one spatial axis of length `n` survives the element's chain.
fn axis_fits(row: &[ConvBlock], mut n: usize) -> bool {
    for (i, b) in row.iter().enumerate() {
        if i > 0 {
            if n < b.extent {
                return false;
            }
            n = n - b.extent + 1;
        }
        if let Some(p) = b.pool {
            if n < p || n % p != 0 {
                return false;
            }
            n /= p;
        }
    }
    n >= 1
}

/// Smallest `height × width` grid (height ≤ width) that holds
/// `feature_length` values and that the element's CNN accepts. Ties in
/// area go to the squarest grid. A perfect square such as 200 × 200 for
/// 40,000 features is returned unchanged.
pub fn cnn_grid(element: usize, feature_length: usize) -> Result<(usize, usize), ExperimentError> {
    let row = CNN_TABLE
        .get(element)
        .ok_or_else(|| ExperimentError::Config(format!("no CNN row for element index {element}")))?;
    if feature_length == 0 {
        return Err(ExperimentError::Config("empty feature vector".into()));
    }
    let mut best: Option<(usize, usize)> = None;
    let mut h = 1;
    while best.is_none_or(|(bh, bw)| h * h <= bh * bw) {
        if axis_fits(row, h) {
            let w = (feature_length.div_ceil(h).max(h)..).find(|&w| axis_fits(row, w)).expect("valid widths recur");
            let better = best.is_none_or(|(bh, bw)| (h * w, w - h) < (bh * bw, bw - bh));
            if better {
                best = Some((h, w));
            }
        }
        h += 1;
    }
    let (h, w) = best.ok_or_else(|| {
        ExperimentError::Config(format!("no grid fits the E{} CNN for {feature_length} features", element + 1))
    })?;
    cnn_architecture(element, h, w)?;
    Ok((h, w))
}

/// How a flat feature vector becomes a network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputLayout {
    /// Row-major `1 × height × width`, zero-filled past the last feature.
    Grid { height: usize, width: usize },
    /// `steps × (len / steps)` sequence, one step per contiguous block.
    Sequence { steps: usize },
    Flat,
}

impl InputLayout {
    pub fn shape(&self, feature_length: usize) -> Vec<usize> {
        match *self {
            InputLayout::Grid { height, width } => vec![1, height, width],
            InputLayout::Sequence { steps } => vec![steps, feature_length / steps],
            InputLayout::Flat => vec![feature_length],
        }
    }

    pub fn to_tensor(&self, features: &[f64]) -> Result<Tensor, NnError> {
        let shape = self.shape(features.len());
        match *self {
            InputLayout::Grid { height, width } => {
                if features.len() > height * width {
                    return Err(NnError::Shape(format!("{} features exceed a {height}x{width} grid", features.len())));
                }
                let mut data = features.to_vec();
                data.resize(height * width, 0.0);
                Tensor::new(shape, data)
            }
            _ => Tensor::new(shape, features.to_vec()),
        }
    }

    /// Gradient with respect to the flat features given the gradient with
    /// respect to the network input.
    pub fn pullback(&self, grad: &Tensor, feature_length: usize) -> Vec<f64> {
        grad.data()[..feature_length].to_vec()
    }
}

pub const LSTM_STEPS: usize = 4;
pub const LSTM_HIDDEN: [usize; 3] = [32, 16, 4];

/// Three stacked LSTM layers (32, 16, 4 units) over a `(4, L/4)` sequence,
/// followed by a linear readout from the final hidden state to the four
/// standardized diameters.
pub fn lstm_architecture(feature_length: usize) -> Result<Architecture, ExperimentError> {
    if feature_length == 0 || feature_length % LSTM_STEPS != 0 {
        return Err(ExperimentError::Config(format!(
            "feature length {feature_length} is not divisible into {LSTM_STEPS} time steps"
        )));
    }
    let mut layers: Vec<LayerSpec> = LSTM_HIDDEN.iter().map(|&hidden| LayerSpec::Lstm { hidden }).collect();
    layers.push(LayerSpec::LastStep);
    layers.push(LayerSpec::Dense { outputs: NUM_ELEMENTS });
    Ok(Architecture { input_shape: vec![LSTM_STEPS, feature_length / LSTM_STEPS], layers })
}
