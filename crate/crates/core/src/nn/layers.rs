//! Layer kernels: convolution, max/global-average pooling, dense, ReLU and
//! the mean-squared-error loss. Volumes are stored depth-major
//! (`depth × height × width`, row-major within a slice).

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::NnError;

/// Convolution hyper-parameters. `padding` is applied on every side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub extent: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(filters: usize, extent: usize, stride: usize, padding: usize) -> Result<Self, NnError> {
        if filters == 0 || extent == 0 || stride == 0 {
            return Err(NnError::Shape(format!(
                "conv needs K, F, S >= 1 (got K={filters}, F={extent}, S={stride})"
            )));
        }
        Ok(Self { filters, extent, stride, padding })
    }

    /// Stride 1 with padding that preserves spatial size (odd extents).
    pub fn same(filters: usize, extent: usize) -> Result<Self, NnError> {
        if extent % 2 == 0 {
            return Err(NnError::Shape(format!("same padding needs an odd extent, got {extent}")));
        }
        Self::new(filters, extent, 1, (extent - 1) / 2)
    }

    pub fn valid(filters: usize, extent: usize) -> Result<Self, NnError> {
        Self::new(filters, extent, 1, 0)
    }

    /// `(W − F + 2P)/S + 1`, rejecting non-integral results.
    pub fn output_dim(&self, input: usize, axis: &str) -> Result<usize, NnError> {
        window_output(input + 2 * self.padding, self.extent, self.stride, axis)
    }

    pub fn num_weights(&self, in_depth: usize) -> usize {
        self.filters * in_depth * self.extent * self.extent
    }
}

fn window_output(span: usize, extent: usize, stride: usize, axis: &str) -> Result<usize, NnError> {
    if span < extent {
        return Err(NnError::Shape(format!("{axis}: window {extent} exceeds input {span}")));
    }
    if (span - extent) % stride != 0 {
        return Err(NnError::Shape(format!(
            "{axis}: ({span} - {extent}) is not divisible by stride {stride}"
        )));
    }
    Ok((span - extent) / stride + 1)
}

/// Output size of a pooling window, `(W − F)/S + 1`.
pub fn pool_output_dim(input: usize, extent: usize, stride: usize, axis: &str) -> Result<usize, NnError> {
    if extent == 0 || stride == 0 {
        return Err(NnError::Shape(format!("{axis}: pool extent and stride must be >= 1")));
    }
    window_output(input, extent, stride, axis)
}

fn pad_volume(input: &Tensor, pad: usize) -> (Vec<f64>, usize, usize) {
    let (d, h, w) = input.dims3();
    if pad == 0 {
        return (input.data().to_vec(), h, w);
    }
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; d * hp * wp];
    for c in 0..d {
        for y in 0..h {
            let src = &input.data()[(c * h + y) * w..(c * h + y + 1) * w];
            let start = (c * hp + y + pad) * wp + pad;
            out[start..start + w].copy_from_slice(src);
        }
    }
    (out, hp, wp)
}

fn check_conv(input: &Tensor, weights: &[f64], bias: &[f64], spec: &ConvSpec) -> Result<(usize, usize), NnError> {
    let (d, h, w) = input.dims3_checked()?;
    if weights.len() != spec.num_weights(d) {
        return Err(NnError::Shape(format!(
            "conv weights: expected {} values, got {}",
            spec.num_weights(d),
            weights.len()
        )));
    }
    if bias.len() != spec.filters {
        return Err(NnError::Shape(format!("conv bias: expected {}, got {}", spec.filters, bias.len())));
    }
    Ok((spec.output_dim(h, "height")?, spec.output_dim(w, "width")?))
}

/// Cross-correlation of a `D×H×W` volume with `K` filters of shape
/// `D×F×F` (weights laid out `[K][D][F][F]`), plus one bias per filter.
pub fn conv2d_forward(input: &Tensor, weights: &[f64], bias: &[f64], spec: &ConvSpec) -> Result<Tensor, NnError> {
    let (oh, ow) = check_conv(input, weights, bias, spec)?;
    let d = input.dims3().0;
    let (padded, _hp, wp) = pad_volume(input, spec.padding);
    let hp = _hp;
    let f = spec.extent;
    let s = spec.stride;
    let mut out = vec![0.0; spec.filters * oh * ow];
    for k in 0..spec.filters {
        let plane = &mut out[k * oh * ow..(k + 1) * oh * ow];
        plane.fill(bias[k]);
        for c in 0..d {
            let src = &padded[c * hp * wp..(c + 1) * hp * wp];
            for fy in 0..f {
                for fx in 0..f {
                    let wv = weights[((k * d + c) * f + fy) * f + fx];
                    for oy in 0..oh {
                        let row = &src[(oy * s + fy) * wp + fx..];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            for (o, &x) in dst.iter_mut().zip(&row[..ow]) {
                                *o += wv * x;
                            }
                        } else {
                            for (ox, o) in dst.iter_mut().enumerate() {
                                *o += wv * row[ox * s];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![spec.filters, oh, ow], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGradients {
    pub input: Tensor,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Reverse-mode gradients of a convolution given the upstream gradient
/// with respect to its output.
pub fn conv2d_backward(
    upstream: &Tensor,
    input: &Tensor,
    weights: &[f64],
    spec: &ConvSpec,
) -> Result<ConvGradients, NnError> {
    let bias_dummy = vec![0.0; spec.filters];
    let (oh, ow) = check_conv(input, weights, &bias_dummy, spec)?;
    if upstream.shape() != [spec.filters, oh, ow] {
        return Err(NnError::Shape(format!(
            "conv upstream gradient {:?}, expected {:?}",
            upstream.shape(),
            [spec.filters, oh, ow]
        )));
    }
    let (d, h, w) = input.dims3();
    let (padded, hp, wp) = pad_volume(input, spec.padding);
    let f = spec.extent;
    let s = spec.stride;
    let g = upstream.data();
    let mut gw = vec![0.0; weights.len()];
    let mut gb = vec![0.0; spec.filters];
    let mut gin_p = vec![0.0; d * hp * wp];
    for k in 0..spec.filters {
        let gplane = &g[k * oh * ow..(k + 1) * oh * ow];
        gb[k] = gplane.iter().sum();
        for c in 0..d {
            let src = &padded[c * hp * wp..(c + 1) * hp * wp];
            let dst_base = c * hp * wp;
            for fy in 0..f {
                for fx in 0..f {
                    let wi = ((k * d + c) * f + fy) * f + fx;
                    let wv = weights[wi];
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        let off = (oy * s + fy) * wp + fx;
                        if s == 1 {
                            let row = &src[off..off + ow];
                            acc += grow.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                            let dst = &mut gin_p[dst_base + off..dst_base + off + ow];
                            for (o, &gv) in dst.iter_mut().zip(grow) {
                                *o += wv * gv;
                            }
                        } else {
                            for (ox, &gv) in grow.iter().enumerate() {
                                acc += gv * src[off + ox * s];
                                gin_p[dst_base + off + ox * s] += wv * gv;
                            }
                        }
                    }
                    gw[wi] += acc;
                }
            }
        }
    }
    let p = spec.padding;
    let mut gin = vec![0.0; d * h * w];
    for c in 0..d {
        for y in 0..h {
            let start = (c * hp + y + p) * wp + p;
            gin[(c * h + y) * w..(c * h + y + 1) * w].copy_from_slice(&gin_p[start..start + w]);
        }
    }
    Ok(ConvGradients {
        input: Tensor::new(vec![d, h, w], gin)?,
        weights: gw,
        bias: gb,
    })
}

/// Max pooling; also returns, for every output cell, the flat index of the
/// input cell that won. Ties go to the first maximum in row-major order.
pub fn maxpool2d_forward(input: &Tensor, extent: usize, stride: usize) -> Result<(Tensor, Vec<usize>), NnError> {
    let (d, h, w) = input.dims3_checked()?;
    let oh = pool_output_dim(h, extent, stride, "height")?;
    let ow = pool_output_dim(w, extent, stride, "width")?;
    let x = input.data();
    let mut out = Vec::with_capacity(d * oh * ow);
    let mut arg = Vec::with_capacity(d * oh * ow);
    for c in 0..d {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = usize::MAX;
                for fy in 0..extent {
                    let row = (c * h + oy * stride + fy) * w + ox * stride;
                    for fx in 0..extent {
                        let v = x[row + fx];
                        if v > best || best_i == usize::MAX {
                            best = v;
                            best_i = row + fx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    Ok((Tensor::new(vec![d, oh, ow], out)?, arg))
}

/// Routes each upstream gradient to its window's recorded maximum.
pub fn maxpool2d_backward(upstream: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor, NnError> {
    if upstream.len() != argmax.len() {
        return Err(NnError::Shape(format!(
            "pool upstream has {} cells, cache has {}",
            upstream.len(),
            argmax.len()
        )));
    }
    let n: usize = input_shape.iter().product();
    let mut g = vec![0.0; n];
    for (&i, &v) in argmax.iter().zip(upstream.data()) {
        g[i] += v;
    }
    Tensor::new(input_shape.to_vec(), g)
}

/// Per-channel spatial mean.
pub fn global_average_pool_forward(input: &Tensor) -> Result<Vec<f64>, NnError> {
    let (d, h, w) = input.dims3_checked()?;
    let n = (h * w) as f64;
    Ok((0..d)
        .map(|c| input.data()[c * h * w..(c + 1) * h * w].iter().sum::<f64>() / n)
        .collect())
}

pub fn global_average_pool_backward(upstream: &[f64], input_shape: &[usize]) -> Result<Tensor, NnError> {
    let [d, h, w] = input_shape else {
        return Err(NnError::Shape(format!("GAP input must be 3-D, got {input_shape:?}")));
    };
    if upstream.len() != *d {
        return Err(NnError::Shape(format!("GAP upstream {} vs depth {d}", upstream.len())));
    }
    let n = (h * w) as f64;
    let mut g = Vec::with_capacity(d * h * w);
    for &u in upstream {
        g.extend(std::iter::repeat_n(u / n, h * w));
    }
    Tensor::new(input_shape.to_vec(), g)
}

/// `W x + b` with `W` stored `[outputs][inputs]`.
pub fn dense_forward(input: &[f64], weights: &[f64], bias: &[f64]) -> Result<Vec<f64>, NnError> {
    let outputs = bias.len();
    if weights.len() != outputs * input.len() {
        return Err(NnError::Shape(format!(
            "dense weights {} != {} x {}",
            weights.len(),
            outputs,
            input.len()
        )));
    }
    Ok(weights
        .chunks_exact(input.len().max(1))
        .zip(bias)
        .map(|(row, &b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
        .take(outputs)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGradients {
    pub input: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn dense_backward(upstream: &[f64], input: &[f64], weights: &[f64]) -> Result<DenseGradients, NnError> {
    let n = input.len();
    if weights.len() != upstream.len() * n {
        return Err(NnError::Shape(format!(
            "dense weights {} != {} x {}",
            weights.len(),
            upstream.len(),
            n
        )));
    }
    let mut gin = vec![0.0; n];
    let mut gw = vec![0.0; weights.len()];
    for (j, &u) in upstream.iter().enumerate() {
        let row = &weights[j * n..(j + 1) * n];
        let grow = &mut gw[j * n..(j + 1) * n];
        for k in 0..n {
            grow[k] = u * input[k];
            gin[k] += u * row[k];
        }
    }
    Ok(DenseGradients {
        input: gin,
        weights: gw,
        bias: upstream.to_vec(),
    })
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// The derivative at exactly 0 is taken as 0.
pub fn relu_backward(upstream: &[f64], input: &[f64]) -> Vec<f64> {
    upstream
        .iter()
        .zip(input)
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

/// Mean squared error and its gradient `2(pred − target)/n`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>), NnError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(NnError::Shape(format!("mse: {} predictions vs {} targets", pred.len(), target.len())));
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_keeps_paper_grid() {
        let spec = ConvSpec::same(32, 3).unwrap();
        assert_eq!(spec.output_dim(200, "w").unwrap(), 200);
        let spec = ConvSpec::same(64, 5).unwrap();
        assert_eq!(spec.output_dim(200, "w").unwrap(), 200);
        assert_eq!(pool_output_dim(200, 4, 4, "w").unwrap(), 50);
    }

    #[test]
    fn non_integral_dims_name_the_axis() {
        let spec = ConvSpec::new(1, 3, 2, 0).unwrap();
        let err = spec.output_dim(6, "height").unwrap_err().to_string();
        assert!(err.contains("height"), "{err}");
        assert!(pool_output_dim(50, 4, 4, "width").unwrap_err().to_string().contains("width"));
        assert!(ConvSpec::new(0, 3, 1, 0).is_err());
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::new(vec![1, 3, 4], (0..12).map(f64::from).collect()).unwrap();
        let y = conv2d_forward(&x, &[1.0], &[0.0], &ConvSpec::valid(1, 1).unwrap()).unwrap();
        assert_eq!(y, x);
        let g = conv2d_backward(&x, &x, &[1.0], &ConvSpec::valid(1, 1).unwrap()).unwrap();
        assert_eq!(g.input, x);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let x = Tensor::new(vec![2, 4, 4], (0..32).map(|i| (i as f64).sin()).collect()).unwrap();
        let spec = ConvSpec::new(3, 3, 1, 1).unwrap();
        let w: Vec<f64> = (0..spec.num_weights(2)).map(|i| (i as f64).cos()).collect();
        let up = Tensor::zeros(vec![3, 4, 4]);
        let g = conv2d_backward(&up, &x, &w, &spec).unwrap();
        assert!(g.input.data().iter().chain(&g.weights).chain(&g.bias).all(|&v| v == 0.0));
    }

    #[test]
    fn pooling_ties_route_to_first() {
        let x = Tensor::new(vec![1, 2, 2], vec![5.0; 4]).unwrap();
        let (y, arg) = maxpool2d_forward(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[5.0]);
        assert_eq!(arg, vec![0]);
        let g = maxpool2d_backward(&Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap(), &arg, x.shape()).unwrap();
        assert_eq!(g.data(), &[3.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn gap_hand_values() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_average_pool_forward(&x).unwrap(), vec![2.5]);
        let g = global_average_pool_backward(&[1.0], &[1, 2, 2]).unwrap();
        assert_eq!(g.data(), &[0.25; 4]);
        let c = Tensor::new(vec![1, 3, 3], vec![7.0; 9]).unwrap();
        assert_eq!(global_average_pool_forward(&c).unwrap(), vec![7.0]);
    }

    #[test]
    fn dense_identity_and_bias() {
        let eye = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(dense_forward(&[3.0, -2.0], &eye, &[0.0, 0.0]).unwrap(), vec![3.0, -2.0]);
        assert_eq!(dense_forward(&[0.0, 0.0], &eye, &[0.5, 1.5]).unwrap(), vec![0.5, 1.5]);
        assert!(dense_forward(&[1.0], &eye, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn relu_convention() {
        assert_eq!(relu_forward(&[-1.0, 2.0, 0.0]), vec![0.0, 2.0, 0.0]);
        assert_eq!(relu_backward(&[1.0, 1.0, 1.0], &[-1.0, 2.0, 0.0]), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn mse_hand_values() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().0, 0.0);
        let (l, g) = mse_loss(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![-1.0, -1.0]);
    }
}
