//! Bayesian MLP with factorized Gaussian weights, trained online by
//! probabilistic backpropagation (assumed density filtering).
//!
//! Each weight `w` carries `N(mean, variance)`. A forward pass propagates
//! means and variances layer by layer; linear layers are exact under the
//! independence assumption and rectifiers are moment-matched. The log
//! marginal likelihood `log Z` of one target is then differentiated in
//! reverse mode and the weight moments are updated from its gradients.
//! The observation-noise precision and the weight-prior precision each
//! carry a Gamma posterior updated by moment matching.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::PbpError;

pub const VARIANCE_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// φ(α)/Φ(α), stable far into the lower tail.
fn inverse_mills(alpha: f64) -> f64 {
    if alpha < -30.0 {
        let a2 = alpha * alpha;
        -alpha - 1.0 / alpha + 2.0 / (alpha * a2)
    } else {
        let log_cdf = std_normal_cdf(alpha).ln();
        (-0.5 * alpha * alpha - 0.5 * LN_2PI - log_cdf).exp()
    }
}

/// Gamma(shape, rate) posterior over a precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self, PbpError> {
        if shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite() {
            Ok(Self { shape, rate })
        } else {
            Err(PbpError::Config(format!("Gamma({shape}, {rate})")))
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    /// Moment-matched update from the normalizers of the tilted
    /// distribution at shape α, α+1 and α+2 (all in log space).
    fn matched(&self, log_z0: f64, log_z1: f64, log_z2: f64) -> Option<Self> {
        let a = self.shape;
        let b = self.rate;
        let shape = 1.0 / ((log_z2 - 2.0 * log_z1 + log_z0).exp() * (a + 1.0) / a - 1.0);
        let rate = 1.0 / ((log_z2 - log_z1).exp() * (a + 1.0) / b - (log_z1 - log_z0).exp() * a / b);
        GammaParams::new(shape, rate).ok()
    }
}

/// One fully connected layer of Gaussian weights. Both matrices are
/// `outputs × (inputs + 1)`, row-major, with the bias in the last column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GaussianLayer {
    pub fn new(inputs: usize, outputs: usize, mean: Vec<f64>, variance: Vec<f64>) -> Result<Self, PbpError> {
        let n = outputs * (inputs + 1);
        if mean.len() != n {
            return Err(PbpError::Dimension { expected: n, got: mean.len() });
        }
        if variance.len() != n {
            return Err(PbpError::Dimension { expected: n, got: variance.len() });
        }
        if let Some(&v) = variance.iter().find(|v| !(**v > 0.0)) {
            return Err(PbpError::InvalidMoment(v));
        }
        Ok(Self { inputs, outputs, mean, variance })
    }

    fn row_len(&self) -> usize {
        self.inputs + 1
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActivationMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub variance: f64,
}

/// Rectifier moment matching: mean and variance of `max(0, a)` for
/// `a ~ N(m, v)`.
pub fn relu_moments(m: f64, v: f64) -> Result<(f64, f64), PbpError> {
    relu_moments_with_grad(m, v).map(|r| (r.mean, r.variance))
}

#[derive(Debug, Clone, Copy)]
struct ReluMoments {
    mean: f64,
    variance: f64,
    dmean_dm: f64,
    dmean_dv: f64,
    dvar_dm: f64,
    dvar_dv: f64,
}

fn relu_moments_with_grad(m: f64, v: f64) -> Result<ReluMoments, PbpError> {
    if !(v >= 0.0) || !m.is_finite() || !v.is_finite() {
        return Err(PbpError::InvalidMoment(v));
    }
    if v == 0.0 {
        let on = if m > 0.0 { 1.0 } else { 0.0 };
        return Ok(ReluMoments {
            mean: m.max(0.0),
            variance: 0.0,
            dmean_dm: on,
            dmean_dv: 0.0,
            dvar_dm: 0.0,
            dvar_dv: 0.0,
        });
    }
    let s = v.sqrt();
    let alpha = m / s;
    let cdf = std_normal_cdf(alpha);
    let pdf = std_normal_pdf(alpha);
    let gamma = inverse_mills(alpha);
    let shifted = m + s * gamma;
    let mean = cdf * shifted;
    let variance = (cdf * v * (1.0 - gamma * (gamma + alpha)) + cdf * (1.0 - cdf) * shifted * shifted).max(0.0);
    Ok(ReluMoments {
        mean,
        variance,
        dmean_dm: cdf,
        dmean_dv: pdf / (2.0 * s),
        dvar_dm: 2.0 * mean * (1.0 - cdf),
        dvar_dv: cdf - mean * pdf / s,
    })
}

/// `log N(y | m, v + 1/γ)` where `γ` is the expected noise precision.
pub fn log_marginal(y: f64, m: f64, v: f64, noise_precision: f64) -> Result<f64, PbpError> {
    log_marginal_with_grad(y, m, v, 1.0 / noise_precision).map(|(z, _, _)| z)
}

/// Returns `(log Z, ∂log Z/∂m, ∂log Z/∂v)`.
pub fn log_marginal_with_grad(y: f64, m: f64, v: f64, noise_variance: f64) -> Result<(f64, f64, f64), PbpError> {
    let total = v + noise_variance;
    if !(total > 0.0) || !total.is_finite() || !(v >= 0.0) {
        return Err(PbpError::Numeric(total));
    }
    let r = y - m;
    let log_z = -0.5 * (LN_2PI + total.ln()) - 0.5 * r * r / total;
    let dm = r / total;
    let dv = -0.5 / total + 0.5 * r * r / (total * total);
    Ok((log_z, dm, dv))
}

/// Hyper-parameters for building and training one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbpConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub noise_prior: GammaParams,
    pub weight_prior: GammaParams,
    /// Incorporate the weight-prior factors by ADF once before the first
    /// epoch, which is where the prior precision's Gamma is updated.
    pub incorporate_prior: bool,
}

impl Default for PbpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            epochs: 10,
            noise_prior: GammaParams { shape: 6.0, rate: 6.0 },
            weight_prior: GammaParams { shape: 6.0, rate: 6.0 },
            incorporate_prior: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbpNetwork {
    pub layers: Vec<GaussianLayer>,
    pub noise: GammaParams,
    pub prior: GammaParams,
}

/// Moments recorded during a forward pass, kept for the reverse sweep.
struct LayerTrace {
    /// Layer input moments with the constant bias entry appended.
    in_mean: Vec<f64>,
    in_var: Vec<f64>,
    pre_mean: Vec<f64>,
    pre_var: Vec<f64>,
    relu: Vec<ReluMoments>,
}

/// Gradients of `log Z` with respect to every weight mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub d_mean: Vec<f64>,
    pub d_variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogZGradients {
    pub log_z: f64,
    pub layers: Vec<LayerGradients>,
    /// Output moments the gradients were taken at.
    pub output_mean: f64,
    pub output_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    Accepted { log_z: f64 },
    Rejected,
}

impl PbpNetwork {
    /// Builds `inputs → hidden… → 1` with means drawn from N(0, 1/(fan-in+1))
    /// and every variance set to 1/E[λ].
    pub fn new<R: Rng + ?Sized>(inputs: usize, config: &PbpConfig, rng: &mut R) -> Result<Self, PbpError> {
        if inputs == 0 || config.hidden.iter().any(|&h| h == 0) {
            return Err(PbpError::Config("layer sizes must be positive".into()));
        }
        let noise = GammaParams::new(config.noise_prior.shape, config.noise_prior.rate)?;
        let prior = GammaParams::new(config.weight_prior.shape, config.weight_prior.rate)?;
        let mut sizes = vec![inputs];
        sizes.extend(&config.hidden);
        sizes.push(1);
        let var0 = 1.0 / prior.mean();
        let layers = sizes
            .windows(2)
            .map(|w| {
                let n = w[1] * (w[0] + 1);
                let normal = Normal::new(0.0, (1.0 / (w[0] as f64 + 1.0)).sqrt()).expect("finite std");
                let mean = (0..n).map(|_| normal.sample(rng)).collect();
                GaussianLayer::new(w[0], w[1], mean, vec![var0; n])
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut net = Self { layers, noise, prior };
        if config.incorporate_prior {
            net.incorporate_prior();
        }
        Ok(net)
    }

    pub fn from_layers(layers: Vec<GaussianLayer>, noise: GammaParams, prior: GammaParams) -> Result<Self, PbpError> {
        if layers.is_empty() {
            return Err(PbpError::Config("no layers".into()));
        }
        for w in layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(PbpError::Dimension { expected: w[0].outputs, got: w[1].inputs });
            }
        }
        Ok(Self { layers, noise, prior })
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(|l| l.mean.len()).sum()
    }

    fn trace(&self, x: &[f64]) -> Result<Vec<LayerTrace>, PbpError> {
        if x.len() != self.input_len() {
            return Err(PbpError::Dimension { expected: self.input_len(), got: x.len() });
        }
        let mut mean: Vec<f64> = x.to_vec();
        let mut var = vec![0.0; x.len()];
        let last = self.layers.len() - 1;
        let mut traces = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            mean.push(1.0);
            var.push(0.0);
            let width = layer.row_len();
            let scale = width as f64;
            let root = scale.sqrt();
            let sq_mean: Vec<f64> = mean.iter().map(|m| m * m).collect();
            let any_var = var.iter().any(|&v| v != 0.0);
            let mut pre_mean = Vec::with_capacity(layer.outputs);
            let mut pre_var = Vec::with_capacity(layer.outputs);
            for j in 0..layer.outputs {
                let mrow = &layer.mean[j * width..(j + 1) * width];
                let vrow = &layer.variance[j * width..(j + 1) * width];
                let mut acc_m = 0.0;
                let mut acc_v = 0.0;
                if any_var {
                    for k in 0..width {
                        acc_m += mrow[k] * mean[k];
                        acc_v += mrow[k] * mrow[k] * var[k] + vrow[k] * (sq_mean[k] + var[k]);
                    }
                } else {
                    for k in 0..width {
                        acc_m += mrow[k] * mean[k];
                        acc_v += vrow[k] * sq_mean[k];
                    }
                }
                pre_mean.push(acc_m / root);
                pre_var.push(acc_v / scale);
            }
            let relu = if li < last {
                pre_mean
                    .iter()
                    .zip(&pre_var)
                    .map(|(&m, &v)| relu_moments_with_grad(m, v))
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                Vec::new()
            };
            let (next_mean, next_var) = if li < last {
                (relu.iter().map(|r| r.mean).collect(), relu.iter().map(|r| r.variance).collect())
            } else {
                (pre_mean.clone(), pre_var.clone())
            };
            traces.push(LayerTrace {
                in_mean: std::mem::replace(&mut mean, next_mean),
                in_var: std::mem::replace(&mut var, next_var),
                pre_mean,
                pre_var,
                relu,
            });
        }
        Ok(traces)
    }

    /// Post-activation moments of every layer (the last one is linear).
    pub fn forward_moments(&self, x: &[f64]) -> Result<Vec<ActivationMoments>, PbpError> {
        let traces = self.trace(x)?;
        Ok(traces
            .into_iter()
            .map(|t| {
                if t.relu.is_empty() {
                    ActivationMoments { mean: t.pre_mean, variance: t.pre_var }
                } else {
                    ActivationMoments {
                        mean: t.relu.iter().map(|r| r.mean).collect(),
                        variance: t.relu.iter().map(|r| r.variance).collect(),
                    }
                }
            })
            .collect())
    }

    fn single_output(&self) -> Result<(), PbpError> {
        if self.output_len() != 1 {
            return Err(PbpError::Dimension { expected: 1, got: self.output_len() });
        }
        Ok(())
    }

    /// Predictive mean and variance, the variance including 1/E[γ].
    pub fn predict(&self, x: &[f64]) -> Result<PredictiveDistribution, PbpError> {
        self.single_output()?;
        let out = self.forward_moments(x)?.pop().expect("at least one layer");
        Ok(PredictiveDistribution {
            mean: out.mean[0],
            variance: out.variance[0] + 1.0 / self.noise.mean(),
        })
    }

    /// Reverse-mode gradients of `log Z(y)` with respect to all weight
    /// moments, using noise variance `1/E[γ]`.
    pub fn log_z_gradients(&self, x: &[f64], y: f64) -> Result<LogZGradients, PbpError> {
        self.single_output()?;
        let traces = self.trace(x)?;
        let out = traces.last().expect("at least one layer");
        let (m, v) = (out.pre_mean[0], out.pre_var[0]);
        let (log_z, gm, gv) = log_marginal_with_grad(y, m, v, 1.0 / self.noise.mean())?;
        let layers = self.backward(&traces, vec![gm], vec![gv]).0;
        Ok(LogZGradients { log_z, layers, output_mean: m, output_variance: v })
    }

    /// Sweeps upstream gradients (with respect to the last layer's outputs)
    /// back through the traced moments. Returns per-layer weight gradients
    /// and the gradient with respect to the input means.
    fn backward(&self, traces: &[LayerTrace], mut g_mean: Vec<f64>, mut g_var: Vec<f64>) -> (Vec<LayerGradients>, Vec<f64>) {
        let mut grads: Vec<LayerGradients> = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let t = &traces[li];
            if li < last {
                // Through the rectifier.
                let (gm, gv): (Vec<f64>, Vec<f64>) = t
                    .relu
                    .iter()
                    .zip(g_mean.iter().zip(&g_var))
                    .map(|(r, (&a, &b))| (a * r.dmean_dm + b * r.dvar_dm, a * r.dmean_dv + b * r.dvar_dv))
                    .unzip();
                g_mean = gm;
                g_var = gv;
            }
            let width = layer.row_len();
            let scale = width as f64;
            let root = scale.sqrt();
            let mut d_mean = vec![0.0; layer.mean.len()];
            let mut d_variance = vec![0.0; layer.variance.len()];
            let mut g_in_mean = vec![0.0; width];
            let mut g_in_var = vec![0.0; width];
            let second: Vec<f64> = t.in_mean.iter().zip(&t.in_var).map(|(m, v)| m * m + v).collect();
            for j in 0..layer.outputs {
                let a = g_mean[j] / root;
                let b = g_var[j] / scale;
                let mrow = &layer.mean[j * width..(j + 1) * width];
                let vrow = &layer.variance[j * width..(j + 1) * width];
                let dm = &mut d_mean[j * width..(j + 1) * width];
                let dv = &mut d_variance[j * width..(j + 1) * width];
                for k in 0..width {
                    dm[k] = a * t.in_mean[k] + 2.0 * b * mrow[k] * t.in_var[k];
                    dv[k] = b * second[k];
                    g_in_mean[k] += a * mrow[k] + 2.0 * b * vrow[k] * t.in_mean[k];
                    g_in_var[k] += b * (mrow[k] * mrow[k] + vrow[k]);
                }
            }
            // Drop the constant bias entry.
            g_in_mean.pop();
            g_in_var.pop();
            g_mean = g_in_mean;
            g_var = g_in_var;
            grads.push(LayerGradients { d_mean, d_variance });
        }
        grads.reverse();
        (grads, g_mean)
    }

    /// Gradient of the predictive mean with respect to the input vector.
    pub fn input_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), PbpError> {
        self.single_output()?;
        let traces = self.trace(x)?;
        let m = traces.last().expect("layer").pre_mean[0];
        let (_, gx) = self.backward(&traces, vec![1.0], vec![0.0]);
        Ok((m, gx))
    }

    /// One ADF step on the likelihood factor of `(x, y)`.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<UpdateOutcome, PbpError> {
        let grads = self.log_z_gradients(x, y)?;
        let finite = grads
            .layers
            .iter()
            .all(|g| g.d_mean.iter().chain(&g.d_variance).all(|x| x.is_finite()))
            && grads.log_z.is_finite();
        if !finite {
            log::warn!("pbp update skipped: non-finite gradient (y = {y})");
            return Ok(UpdateOutcome::Rejected);
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (k, (m, v)) in layer.mean.iter_mut().zip(layer.variance.iter_mut()).enumerate() {
                let gm = g.d_mean[k];
                let gv = g.d_variance[k];
                let v_old = *v;
                *m += v_old * gm;
                *v = (v_old - v_old * v_old * (gm * gm - 2.0 * gv)).max(VARIANCE_FLOOR);
            }
        }
        // Noise precision: tilted normalizers at shapes α, α+1, α+2.
        let (m, v) = (grads.output_mean, grads.output_variance);
        let a = self.noise.shape;
        let b = self.noise.rate;
        let z = |shape: f64| log_marginal_with_grad(y, m, v, b / shape).map(|r| r.0);
        if let (Ok(z0), Ok(z1), Ok(z2)) = (z(a), z(a + 1.0), z(a + 2.0)) {
            if let Some(g) = self.noise.matched(z0, z1, z2) {
                self.noise = g;
            }
        }
        Ok(UpdateOutcome::Accepted { log_z: grads.log_z })
    }

    /// ADF over the prior factors `N(w | 0, 1/λ)` of every weight, updating
    /// the weight moments and the Gamma posterior over `λ`.
    pub fn incorporate_prior(&mut self) {
        for li in 0..self.layers.len() {
            for k in 0..self.layers[li].mean.len() {
                let m = self.layers[li].mean[k];
                let v = self.layers[li].variance[k];
                let a = self.prior.shape;
                let b = self.prior.rate;
                let z = |shape: f64| log_marginal_with_grad(0.0, m, v, b / shape);
                let (Ok((z0, gm, gv)), Ok((z1, _, _)), Ok((z2, _, _))) = (z(a), z(a + 1.0), z(a + 2.0)) else {
                    continue;
                };
                let layer = &mut self.layers[li];
                layer.mean[k] = m + v * gm;
                layer.variance[k] = (v - v * v * (gm * gm - 2.0 * gv)).max(VARIANCE_FLOOR);
                if let Some(g) = self.prior.matched(z0, z1, z2) {
                    self.prior = g;
                }
            }
        }
    }

    pub fn min_variance(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.variance.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Mean `log Z` over accepted samples, one entry per epoch.
    pub mean_log_z: Vec<f64>,
    pub rejected: usize,
}

/// `epochs` passes of per-sample updates in a seeded shuffled order.
pub fn fit(net: &mut PbpNetwork, xs: &[Vec<f64>], ys: &[f64], epochs: usize, seed: u64) -> Result<FitTrace, PbpError> {
    if xs.len() != ys.len() {
        return Err(PbpError::Dimension { expected: xs.len(), got: ys.len() });
    }
    fit_with(net, ys, |i| xs[i].clone(), epochs, seed)
}

/// Like [`fit`], with inputs produced on demand by `input(i)`.
pub fn fit_with<F>(net: &mut PbpNetwork, ys: &[f64], input: F, epochs: usize, seed: u64) -> Result<FitTrace, PbpError>
where
    F: Fn(usize) -> Vec<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..ys.len()).collect();
    let mut trace = FitTrace { mean_log_z: Vec::with_capacity(epochs), rejected: 0 };
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut accepted = 0usize;
        for &i in &order {
            match net.update(&input(i), ys[i])? {
                UpdateOutcome::Accepted { log_z } => {
                    sum += log_z;
                    accepted += 1;
                }
                UpdateOutcome::Rejected => trace.rejected += 1,
            }
        }
        trace.mean_log_z.push(if accepted > 0 { sum / accepted as f64 } else { f64::NAN });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn net_1x1(mean: [f64; 2], var: [f64; 2]) -> PbpNetwork {
        let layer = GaussianLayer { inputs: 1, outputs: 1, mean: mean.to_vec(), variance: var.to_vec() };
        PbpNetwork::from_layers(vec![layer], GammaParams { shape: 6.0, rate: 6.0 }, GammaParams { shape: 6.0, rate: 6.0 }).unwrap()
    }

    #[test]
    fn hand_evaluated_linear_moments() {
        let net = net_1x1([2.0, 0.0], [0.5, 0.0]);
        let out = net.forward_moments(&[1.0]).unwrap();
        assert_relative_eq!(out[0].mean[0], 2.0 / 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(out[0].variance[0], 0.25, max_relative = 1e-14);
    }

    #[test]
    fn rectifier_reference_values() {
        let (m, v) = relu_moments(3.0, 0.0).unwrap();
        assert_eq!((m, v), (3.0, 0.0));
        let (m, v) = relu_moments(0.0, 1.0).unwrap();
        assert_relative_eq!(m, 1.0 / (2.0 * PI).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(v, 0.5 - 1.0 / (2.0 * PI), max_relative = 1e-12);
        let (m, v) = relu_moments(-10.0, 1.0).unwrap();
        assert!(m <= 1e-6 && m >= 0.0);
        assert!(v <= 1e-6 && v >= 0.0);
        assert!(matches!(relu_moments(0.0, -1.0), Err(PbpError::InvalidMoment(_))));
    }

    #[test]
    fn extreme_tail_stays_finite() {
        for m in [-1e3, -60.0, -35.0, -29.0] {
            let r = relu_moments_with_grad(m, 1.0).unwrap();
            assert!(r.mean >= 0.0 && r.variance >= 0.0);
            assert!(r.dmean_dv.is_finite() && r.dvar_dv.is_finite());
        }
    }

    #[test]
    fn log_marginal_reference_values() {
        let z = log_marginal(0.3, 0.3, 0.5, 2.0).unwrap();
        assert_relative_eq!(z, -0.5 * LN_2PI, max_relative = 1e-14);
        let z = log_marginal(1.0, 0.0, 0.5, 2.0).unwrap();
        assert_relative_eq!(z, -0.5 * LN_2PI - 0.5, max_relative = 1e-14);
        assert!(matches!(log_marginal_with_grad(0.0, 0.0, 0.0, 0.0), Err(PbpError::Numeric(_))));
    }

    #[test]
    fn zero_variance_prediction_is_pure_noise() {
        let mut net = net_1x1([1.0, 0.0], [1e-300, 1e-300]);
        for l in &mut net.layers {
            l.variance.iter_mut().for_each(|v| *v = 0.0);
        }
        let p = net.predict(&[2.0]).unwrap();
        assert_eq!(p.variance, 1.0 / net.noise.mean());
    }

    #[test]
    fn epochs_zero_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = PbpNetwork::new(3, &PbpConfig::default(), &mut rng).unwrap();
        let before = net.clone();
        let t = fit(&mut net, &[vec![1.0, 2.0, 3.0]], &[1.0], 0, 0).unwrap();
        assert!(t.mean_log_z.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = net_1x1([1.0, 0.0], [1.0, 1.0]);
        assert!(matches!(net.forward_moments(&[1.0, 2.0]), Err(PbpError::Dimension { expected: 1, got: 2 })));
    }

    #[test]
    fn prior_incorporation_updates_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = PbpConfig { incorporate_prior: true, hidden: vec![4], ..PbpConfig::default() };
        let net = PbpNetwork::new(3, &cfg, &mut rng).unwrap();
        assert_ne!(net.prior, cfg.weight_prior);
        assert!(net.min_variance() > 0.0);
    }
}
