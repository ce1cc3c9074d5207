//! Feed-forward stack of layers over one flat parameter vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, ConvSpec};
use super::lstm::{self, LstmShape, LstmTrace};
use super::tensor::Tensor;
use crate::error::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv(ConvSpec),
    Relu,
    MaxPool { extent: usize, stride: usize },
    GlobalAveragePool,
    Dense { outputs: usize },
    /// Consumes a `T × d` sequence and emits the `T × hidden` states.
    Lstm { hidden: usize },
    /// Keeps only the final row of a `T × k` sequence.
    LastStep,
}

#[derive(Debug, Clone)]
struct Placed {
    spec: LayerSpec,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    offset: usize,
    len: usize,
}

/// Layer stack with shapes resolved at construction.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Placed>,
    pub params: Vec<f64>,
}

/// Serializable description of a [`Network`] minus its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

enum Cache {
    None,
    Pool(Vec<usize>),
    Lstm(LstmTrace),
}

/// Activations recorded by [`Network::forward_trace`].
pub struct Trace {
    /// `values[i]` is the input to layer `i`; the last entry is the output.
    values: Vec<Tensor>,
    caches: Vec<Cache>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.values.last().expect("trace holds the input")
    }
}

fn shape_err(i: usize, spec: &LayerSpec, msg: impl std::fmt::Display) -> NnError {
    NnError::Shape(format!("layer {i} ({spec:?}): {msg}"))
}

impl Network {
    pub fn new(arch: &Architecture) -> Result<Self, NnError> {
        let mut shape = arch.input_shape.clone();
        if shape.is_empty() || shape.contains(&0) {
            return Err(NnError::Shape(format!("input shape {shape:?}")));
        }
        let mut offset = 0;
        let mut placed = Vec::with_capacity(arch.layers.len());
        for (i, spec) in arch.layers.iter().enumerate() {
            let (out, len) = match (*spec, shape.as_slice()) {
                (LayerSpec::Conv(c), &[d, h, w]) => {
                    let oh = c.output_dim(h, "height").map_err(|e| shape_err(i, spec, e))?;
                    let ow = c.output_dim(w, "width").map_err(|e| shape_err(i, spec, e))?;
                    (vec![c.filters, oh, ow], c.num_weights(d) + c.filters)
                }
                (LayerSpec::MaxPool { extent, stride }, &[d, h, w]) => {
                    let oh = layers::pool_output_dim(h, extent, stride, "height").map_err(|e| shape_err(i, spec, e))?;
                    let ow = layers::pool_output_dim(w, extent, stride, "width").map_err(|e| shape_err(i, spec, e))?;
                    (vec![d, oh, ow], 0)
                }
                (LayerSpec::GlobalAveragePool, &[d, _, _]) => (vec![d], 0),
                (LayerSpec::Relu, s) => (s.to_vec(), 0),
                (LayerSpec::Dense { outputs }, &[n]) if outputs > 0 => (vec![outputs], outputs * (n + 1)),
                (LayerSpec::Lstm { hidden }, &[t, d]) if hidden > 0 => {
                    (vec![t, hidden], LstmShape { input: d, hidden }.num_params())
                }
                (LayerSpec::LastStep, &[_, k]) => (vec![k], 0),
                (_, s) => return Err(shape_err(i, spec, format!("cannot accept input of shape {s:?}"))),
            };
            placed.push(Placed { spec: *spec, input_shape: shape, output_shape: out.clone(), offset, len });
            offset += len;
            shape = out;
        }
        Ok(Self { input_shape: arch.input_shape.clone(), layers: placed, params: vec![0.0; offset] })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture { input_shape: self.input_shape.clone(), layers: self.layers.iter().map(|l| l.spec).collect() }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers.last().map_or(&self.input_shape, |l| &l.output_shape)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Output shape after every layer, in order.
    pub fn shape_trace(&self) -> Vec<Vec<usize>> {
        self.layers.iter().map(|l| l.output_shape.clone()).collect()
    }

    /// Fan-in scaled uniform initialisation. Conv layers use the He bound
    /// `sqrt(6 / fan_in)`, dense and LSTM weights the Glorot bound
    /// `sqrt(6 / (fan_in + fan_out))`. Biases start at zero except the LSTM
    /// forget gate, which starts at one.
    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut uniform = |dst: &mut [f64], bound: f64| {
            for v in dst {
                *v = rng.random_range(-bound..=bound);
            }
        };
        for l in &self.layers {
            let p = &mut self.params[l.offset..l.offset + l.len];
            match (l.spec, l.input_shape.as_slice()) {
                (LayerSpec::Conv(c), &[d, _, _]) => {
                    let nw = c.num_weights(d);
                    uniform(&mut p[..nw], (6.0 / (d * c.extent * c.extent) as f64).sqrt());
                    p[nw..].fill(0.0);
                }
                (LayerSpec::Dense { outputs }, &[n]) => {
                    let nw = outputs * n;
                    uniform(&mut p[..nw], (6.0 / (n + outputs) as f64).sqrt());
                    p[nw..].fill(0.0);
                }
                (LayerSpec::Lstm { hidden }, &[_, d]) => {
                    let k4 = lstm::GATES * hidden;
                    let (w, rest) = p.split_at_mut(k4 * d);
                    let (u, b) = rest.split_at_mut(k4 * hidden);
                    uniform(w, (6.0 / (d + hidden) as f64).sqrt());
                    uniform(u, (6.0 / (2 * hidden) as f64).sqrt());
                    b.fill(0.0);
                    b[2 * hidden..3 * hidden].fill(1.0);
                }
                _ => {}
            }
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<(), NnError> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(NnError::Shape(format!(
                "network expects input {:?}, got {:?}",
                self.input_shape,
                input.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.forward_trace(input)?.values.pop().expect("non-empty"))
    }

    pub fn forward_trace(&self, input: &Tensor) -> Result<Trace, NnError> {
        self.check_input(input)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        values.push(input.clone());
        for l in &self.layers {
            let x = values.last().expect("non-empty");
            let p = &self.params[l.offset..l.offset + l.len];
            let (y, cache) = match l.spec {
                LayerSpec::Conv(c) => {
                    let nw = p.len() - c.filters;
                    (layers::conv2d_forward(x, &p[..nw], &p[nw..], &c)?, Cache::None)
                }
                LayerSpec::Relu => (Tensor::new(l.output_shape.clone(), layers::relu_forward(x.data()))?, Cache::None),
                LayerSpec::MaxPool { extent, stride } => {
                    let (y, arg) = layers::maxpool2d_forward(x, extent, stride)?;
                    (y, Cache::Pool(arg))
                }
                LayerSpec::GlobalAveragePool => {
                    (Tensor::new(l.output_shape.clone(), layers::global_average_pool_forward(x)?)?, Cache::None)
                }
                LayerSpec::Dense { outputs } => {
                    let nw = p.len() - outputs;
                    let y = layers::dense_forward(x.data(), &p[..nw], &p[nw..])?;
                    (Tensor::new(l.output_shape.clone(), y)?, Cache::None)
                }
                LayerSpec::Lstm { hidden } => {
                    let shape = LstmShape { input: l.input_shape[1], hidden };
                    let tr = lstm::lstm_forward(shape, p, x.data())?;
                    (Tensor::new(l.output_shape.clone(), tr.output.clone())?, Cache::Lstm(tr))
                }
                LayerSpec::LastStep => {
                    let k = l.output_shape[0];
                    let d = x.data();
                    (Tensor::new(vec![k], d[d.len() - k..].to_vec())?, Cache::None)
                }
            };
            values.push(y);
            caches.push(cache);
        }
        Ok(Trace { values, caches })
    }

    /// Reverse pass: `(parameter gradient, input gradient)` for a given
    /// gradient of the loss with respect to the network output.
    pub fn backward(&self, trace: &Trace, upstream: &Tensor) -> Result<(Vec<f64>, Tensor), NnError> {
        if upstream.shape() != self.output_shape() {
            return Err(NnError::Shape(format!(
                "upstream gradient {:?}, output {:?}",
                upstream.shape(),
                self.output_shape()
            )));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut g = upstream.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &trace.values[i];
            let p = &self.params[l.offset..l.offset + l.len];
            let gp = &mut grad[l.offset..l.offset + l.len];
            g = match (&l.spec, &trace.caches[i]) {
                (LayerSpec::Conv(c), _) => {
                    let nw = p.len() - c.filters;
                    let cg = layers::conv2d_backward(&g, x, &p[..nw], c)?;
                    gp[..nw].copy_from_slice(&cg.weights);
                    gp[nw..].copy_from_slice(&cg.bias);
                    cg.input
                }
                (LayerSpec::Relu, _) => Tensor::new(l.input_shape.clone(), layers::relu_backward(g.data(), x.data()))?,
                (LayerSpec::MaxPool { .. }, Cache::Pool(arg)) => layers::maxpool2d_backward(&g, arg, &l.input_shape)?,
                (LayerSpec::GlobalAveragePool, _) => layers::global_average_pool_backward(g.data(), &l.input_shape)?,
                (LayerSpec::Dense { outputs }, _) => {
                    let nw = p.len() - outputs;
                    let dg = layers::dense_backward(g.data(), x.data(), &p[..nw])?;
                    gp[..nw].copy_from_slice(&dg.weights);
                    gp[nw..].copy_from_slice(&dg.bias);
                    Tensor::new(l.input_shape.clone(), dg.input)?
                }
                (LayerSpec::Lstm { hidden }, Cache::Lstm(tr)) => {
                    let shape = LstmShape { input: l.input_shape[1], hidden: *hidden };
                    let (pg, xg) = lstm::lstm_backward(shape, p, x.data(), tr, g.data())?;
                    gp.copy_from_slice(&pg);
                    Tensor::new(l.input_shape.clone(), xg)?
                }
                (LayerSpec::LastStep, _) => {
                    let mut full = vec![0.0; x.len()];
                    let k = g.len();
                    let n = full.len();
                    full[n - k..].copy_from_slice(g.data());
                    Tensor::new(l.input_shape.clone(), full)?
                }
                (spec, _) => return Err(NnError::Shape(format!("layer {i} ({spec:?}): missing forward cache"))),
            };
        }
        Ok((grad, g))
    }

    /// Mean squared error against `target` and its parameter gradient.
    pub fn loss_and_grad(&self, input: &Tensor, target: &[f64]) -> Result<(f64, Vec<f64>), NnError> {
        let trace = self.forward_trace(input)?;
        let (loss, g) = layers::mse_loss(trace.output().data(), target)?;
        let (grad, _) = self.backward(&trace, &Tensor::new(self.output_shape().to_vec(), g)?)?;
        Ok((loss, grad))
    }

    pub fn loss(&self, input: &Tensor, target: &[f64]) -> Result<f64, NnError> {
        Ok(layers::mse_loss(self.forward(input)?.data(), target)?.0)
    }
}

/// Result of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub params_checked: usize,
}

/// Largest number of parameters [`finite_difference_check`] will perturb.
pub const FD_PARAM_LIMIT: usize = 10_000;

/// Compares the MSE parameter gradient against central differences with
/// step `h`. The relative error of each entry is
/// `|a − n| / max(|a|, |n|, 1e-4)`, so entries that are tiny in both
/// forms are judged on absolute error.
pub fn finite_difference_check(net: &Network, input: &Tensor, target: &[f64], h: f64) -> Result<GradientCheck, NnError> {
    if net.num_params() > FD_PARAM_LIMIT {
        return Err(NnError::TooLarge(net.num_params()));
    }
    let (_, analytic) = net.loss_and_grad(input, target)?;
    let mut probe = net.clone();
    let mut rel: f64 = 0.0;
    let mut abs: f64 = 0.0;
    for j in 0..net.num_params() {
        let orig = probe.params[j];
        probe.params[j] = orig + h;
        let lp = probe.loss(input, target)?;
        probe.params[j] = orig - h;
        let lm = probe.loss(input, target)?;
        probe.params[j] = orig;
        let numeric = (lp - lm) / (2.0 * h);
        let diff = (analytic[j] - numeric).abs();
        abs = abs.max(diff);
        rel = rel.max(diff / analytic[j].abs().max(numeric.abs()).max(1e-4));
    }
    Ok(GradientCheck { max_relative_error: rel, max_absolute_error: abs, params_checked: net.num_params() })
}
