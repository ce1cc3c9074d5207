//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use shm_core::nn::{finite_difference_check, Architecture, ConvSpec, LayerSpec, Network, Tensor};
use shm_core::pbp::{log_marginal, GammaParams, GaussianLayer, PbpNetwork};

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_net(rng: &mut ChaCha8Rng, input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Network {
    let mut net = Network::new(&Architecture { input_shape, layers }).unwrap();
    for p in &mut net.params {
        *p = rng.random_range(-0.8..0.8);
    }
    net
}

/// Worst relative error of the analytic parameter gradient against central
/// differences at a random input and target.
pub fn fd_error(net: &Network, rng: &mut ChaCha8Rng) -> f64 {
    let x = random_tensor(rng, net.input_shape().to_vec());
    let n: usize = net.output_shape().iter().product();
    let target: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    finite_difference_check(net, &x, &target, 1e-5).unwrap().max_relative_error
}

/// One randomized instance of every layer kind with its tolerance.
pub fn gradient_cases(seed: u64) -> Vec<(&'static str, Network, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv = random_net(&mut rng, vec![1, 5, 5], vec![LayerSpec::Conv(ConvSpec::new(2, 3, 1, 1).unwrap())]);
    let strided = random_net(&mut rng, vec![2, 7, 7], vec![LayerSpec::Conv(ConvSpec::new(2, 3, 2, 0).unwrap())]);
    let pool = random_net(
        &mut rng,
        vec![1, 8, 8],
        vec![LayerSpec::Conv(ConvSpec::valid(1, 1).unwrap()), LayerSpec::MaxPool { extent: 2, stride: 2 }],
    );
    let dense = random_net(&mut rng, vec![6], vec![LayerSpec::Dense { outputs: 3 }]);
    let tiny_cnn = random_net(
        &mut rng,
        vec![1, 8, 8],
        vec![
            LayerSpec::Conv(ConvSpec::same(3, 3).unwrap()),
            LayerSpec::Relu,
            LayerSpec::MaxPool { extent: 2, stride: 2 },
            LayerSpec::Conv(ConvSpec::valid(2, 3).unwrap()),
            LayerSpec::Relu,
            LayerSpec::GlobalAveragePool,
            LayerSpec::Dense { outputs: 1 },
        ],
    );
    let lstm = random_net(
        &mut rng,
        vec![3, 4],
        vec![
            LayerSpec::Lstm { hidden: 3 },
            LayerSpec::Lstm { hidden: 2 },
            LayerSpec::LastStep,
            LayerSpec::Dense { outputs: 2 },
        ],
    );
    vec![
        ("conv", conv, 1e-6),
        ("strided conv", strided, 1e-6),
        ("max pool", pool, 1e-6),
        ("dense", dense, 1e-6),
        ("small cnn", tiny_cnn, 1e-6),
        ("lstm", lstm, 1e-5),
    ]
}

/// Direct transcription of the convolution sum, one output cell at a time.
pub fn reference_conv(x: &Tensor, w: &[f64], b: &[f64], k: usize, f: usize, s: usize, p: usize) -> Vec<f64> {
    let (d, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let oh = (h + 2 * p - f) / s + 1;
    let ow = (wd + 2 * p - f) / s + 1;
    let mut out = vec![0.0; k * oh * ow];
    for kk in 0..k {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b[kk];
                for c in 0..d {
                    for fy in 0..f {
                        for fx in 0..f {
                            let iy = (oy * s + fy) as isize - p as isize;
                            let ix = (ox * s + fx) as isize - p as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            acc += w[((kk * d + c) * f + fy) * f + fx] * x.get3(c, iy as usize, ix as usize);
                        }
                    }
                }
                out[(kk * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

pub fn gamma66() -> GammaParams {
    GammaParams { shape: 6.0, rate: 6.0 }
}

pub fn random_gaussian_layer(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> GaussianLayer {
    let n = outputs * (inputs + 1);
    let mean = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    let variance = (0..n).map(|_| rng.random_range(0.01..0.5)).collect();
    GaussianLayer::new(inputs, outputs, mean, variance).unwrap()
}

pub fn random_pbp_net(rng: &mut ChaCha8Rng, inputs: usize, hidden: &[usize]) -> PbpNetwork {
    let mut sizes = vec![inputs];
    sizes.extend(hidden);
    sizes.push(1);
    let layers = sizes.windows(2).map(|w| random_gaussian_layer(rng, w[0], w[1])).collect();
    PbpNetwork::from_layers(layers, gamma66(), gamma66()).unwrap()
}

/// Deterministic forward pass of one weight draw, with the same
/// `1/sqrt(fan-in + 1)` scaling; returns every layer's post-activation.
pub fn sampled_forward(net: &PbpNetwork, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut z = x.to_vec();
    let mut out = Vec::new();
    for (li, layer) in net.layers.iter().enumerate() {
        z.push(1.0);
        let width = layer.inputs + 1;
        let mut a = vec![0.0; layer.outputs];
        for j in 0..layer.outputs {
            for k in 0..width {
                let idx = j * width + k;
                let e: f64 = StandardNormal.sample(rng);
                let w = layer.mean[idx] + layer.variance[idx].sqrt() * e;
                a[j] += w * z[k];
            }
            a[j] /= (width as f64).sqrt();
            if li + 1 < net.layers.len() {
                a[j] = a[j].max(0.0);
            }
        }
        out.push(a.clone());
        z = a;
    }
    out
}

pub struct Running {
    n: f64,
    pub nonzero: usize,
    sum: f64,
    sum2: f64,
    sum3: f64,
    sum4: f64,
}

impl Running {
    pub fn new() -> Self {
        Self { n: 0.0, nonzero: 0, sum: 0.0, sum2: 0.0, sum3: 0.0, sum4: 0.0 }
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.nonzero += usize::from(x != 0.0);
        self.sum += x;
        self.sum2 += x * x;
        self.sum3 += x * x * x;
        self.sum4 += x * x * x * x;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n
    }

    pub fn var(&self) -> f64 {
        self.sum2 / self.n - self.mean().powi(2)
    }

    /// Standard errors of the sample mean and the sample variance.
    pub fn standard_errors(&self) -> (f64, f64) {
        let m = self.mean();
        let v = self.var();
        let c4 = self.sum4 / self.n - 4.0 * m * self.sum3 / self.n + 6.0 * m * m * self.sum2 / self.n - 3.0 * m.powi(4);
        ((v / self.n).sqrt(), ((c4 - v * v).max(0.0) / self.n).sqrt())
    }
}

/// Largest deviation, in standard errors, between the propagated moments
/// of a random one-hidden-layer net and `draws` sampled forward passes.
pub fn monte_carlo_worst_z(seed: u64, draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = rng.random_range(1..=4);
    let hidden = rng.random_range(1..=4);
    let net = random_pbp_net(&mut rng, inputs, &[hidden]);
    let x: Vec<f64> = (0..inputs).map(|_| rng.random_range(-2.0..2.0)).collect();
    let analytic = net.forward_moments(&x).unwrap();
    let mut stats: Vec<Vec<Running>> = analytic.iter().map(|l| l.mean.iter().map(|_| Running::new()).collect()).collect();
    for _ in 0..draws {
        for (layer, vals) in sampled_forward(&net, &x, &mut rng).iter().enumerate() {
            for (s, &v) in stats[layer].iter_mut().zip(vals) {
                s.push(v);
            }
        }
    }
    // a rectified unit with almost all its mass below zero may yield no
    // nonzero draws and so no standard error; it is held to 1e-6 absolute
    let mut worst = 0.0_f64;
    for (moments, layer_stats) in analytic.iter().zip(&stats) {
        for (u, s) in layer_stats.iter().enumerate() {
            let dm = (moments.mean[u] - s.mean()).abs();
            let dv = (moments.variance[u] - s.var()).abs();
            if s.nonzero == 0 {
                if dm.max(dv) > 1e-6 {
                    return f64::INFINITY;
                }
                continue;
            }
            let (se_m, se_v) = s.standard_errors();
            worst = worst.max(dm / se_m).max(dv / se_v);
        }
    }
    worst
}

/// log Z evaluated from the public forward pass, independent of the
/// reverse sweep under test.
pub fn log_z_via_forward(net: &PbpNetwork, x: &[f64], y: f64) -> f64 {
    let out = net.forward_moments(x).unwrap().pop().unwrap();
    log_marginal(y, out.mean[0], out.variance[0], net.noise.mean()).unwrap()
}

/// Worst relative error of the reverse-mode log Z gradients on a random
/// net with at most three units per layer.
pub fn log_z_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = rng.random_range(1..=3);
    let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(1..=3)).collect();
    let net = random_pbp_net(&mut rng, inputs, &hidden);
    let x: Vec<f64> = (0..inputs).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: f64 = rng.random_range(-1.0..1.0);
    let grads = net.log_z_gradients(&x, y).unwrap();
    assert!((grads.log_z - log_z_via_forward(&net, &x, y)).abs() < 1e-12);
    let mut worst = 0.0_f64;
    for li in 0..net.layers.len() {
        for k in 0..net.layers[li].mean.len() {
            let h = 1e-6;
            let mut plus = net.clone();
            let mut minus = net.clone();
            plus.layers[li].mean[k] += h;
            minus.layers[li].mean[k] -= h;
            let fd = (log_z_via_forward(&plus, &x, y) - log_z_via_forward(&minus, &x, y)) / (2.0 * h);
            worst = worst.max(relative_error(grads.layers[li].d_mean[k], fd));

            let h = 1e-4 * net.layers[li].variance[k];
            let mut plus = net.clone();
            let mut minus = net.clone();
            plus.layers[li].variance[k] += h;
            minus.layers[li].variance[k] -= h;
            let fd = (log_z_via_forward(&plus, &x, y) - log_z_via_forward(&minus, &x, y)) / (2.0 * h);
            worst = worst.max(relative_error(grads.layers[li].d_variance[k], fd));
        }
    }
    worst
}
