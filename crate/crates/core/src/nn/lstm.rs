//! Single LSTM layer with backpropagation through time.
//!
//! Parameters for one layer are packed as `W` (`4k × d`), `U` (`4k × k`)
//! and `b` (`4k`), with gate blocks in the order candidate `a`, input `i`,
//! forget `f`, output `o`.

use crate::error::NnError;

pub const GATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmShape {
    pub input: usize,
    pub hidden: usize,
}

impl LstmShape {
    pub fn num_params(&self) -> usize {
        GATES * self.hidden * (self.input + self.hidden + 1)
    }

    fn split<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let k4 = GATES * self.hidden;
        let (w, rest) = p.split_at(k4 * self.input);
        let (u, b) = rest.split_at(k4 * self.hidden);
        (w, u, b)
    }
}

/// Views of one layer's parameters.
pub struct LstmParams<'a> {
    pub w: &'a [f64],
    pub u: &'a [f64],
    pub b: &'a [f64],
}

impl<'a> LstmParams<'a> {
    pub fn from_flat(shape: LstmShape, p: &'a [f64]) -> Result<Self, NnError> {
        if p.len() != shape.num_params() {
            return Err(NnError::Shape(format!(
                "lstm({}->{}) needs {} parameters, got {}",
                shape.input,
                shape.hidden,
                shape.num_params(),
                p.len()
            )));
        }
        let (w, u, b) = shape.split(p);
        Ok(Self { w, u, b })
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub steps: usize,
    pub hidden: usize,
    /// Post-activation gates `[a, i, f, o]` per step, `4k` each.
    pub gates: Vec<f64>,
    pub cell: Vec<f64>,
    pub output: Vec<f64>,
}

/// Runs the layer over a `T × d` sequence (row-major) from zero state and
/// returns the `T × k` hidden sequence together with the trace.
pub fn lstm_forward(shape: LstmShape, params: &[f64], seq: &[f64]) -> Result<LstmTrace, NnError> {
    let LstmShape { input: d, hidden: k } = shape;
    if d == 0 || seq.len() % d != 0 {
        return Err(NnError::Shape(format!("lstm input of {} values is not T x {d}", seq.len())));
    }
    let p = LstmParams::from_flat(shape, params)?;
    let t_len = seq.len() / d;
    let mut gates = vec![0.0; t_len * GATES * k];
    let mut cell = vec![0.0; t_len * k];
    let mut output = vec![0.0; t_len * k];
    let mut z = vec![0.0; GATES * k];
    for t in 0..t_len {
        let x = &seq[t * d..(t + 1) * d];
        for (r, zr) in z.iter_mut().enumerate() {
            let mut s = p.b[r];
            s += p.w[r * d..(r + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            if t > 0 {
                let hp = &output[(t - 1) * k..t * k];
                s += p.u[r * k..(r + 1) * k].iter().zip(hp).map(|(a, b)| a * b).sum::<f64>();
            }
            *zr = s;
        }
        let g = &mut gates[t * GATES * k..(t + 1) * GATES * k];
        for j in 0..k {
            let a = z[j].tanh();
            let i = sigmoid(z[k + j]);
            let f = sigmoid(z[2 * k + j]);
            let o = sigmoid(z[3 * k + j]);
            g[j] = a;
            g[k + j] = i;
            g[2 * k + j] = f;
            g[3 * k + j] = o;
            let c_prev = if t > 0 { cell[(t - 1) * k + j] } else { 0.0 };
            let c = f * c_prev + i * a;
            cell[t * k + j] = c;
            output[t * k + j] = o * c.tanh();
        }
    }
    Ok(LstmTrace { steps: t_len, hidden: k, gates, cell, output })
}

/// Gradients of one layer: `(param_grad, input_grad)` given the gradient of
/// the loss with respect to every hidden state.
pub fn lstm_backward(
    shape: LstmShape,
    params: &[f64],
    seq: &[f64],
    trace: &LstmTrace,
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    let LstmShape { input: d, hidden: k } = shape;
    let t_len = trace.steps;
    if upstream.len() != t_len * k || seq.len() != t_len * d {
        return Err(NnError::Shape(format!(
            "lstm backward: upstream {} vs {}x{k}, input {} vs {}x{d}",
            upstream.len(),
            t_len,
            seq.len(),
            t_len
        )));
    }
    let p = LstmParams::from_flat(shape, params)?;
    let k4 = GATES * k;
    let mut grad = vec![0.0; shape.num_params()];
    let (gw, rest) = grad.split_at_mut(k4 * d);
    let (gu, gb) = rest.split_at_mut(k4 * k);
    let mut gx = vec![0.0; t_len * d];
    let mut dh_next = vec![0.0; k];
    let mut dc_next = vec![0.0; k];
    let mut dz = vec![0.0; k4];
    for t in (0..t_len).rev() {
        let g = &trace.gates[t * k4..(t + 1) * k4];
        for j in 0..k {
            let (a, i, f, o) = (g[j], g[k + j], g[2 * k + j], g[3 * k + j]);
            let c = trace.cell[t * k + j];
            let c_prev = if t > 0 { trace.cell[(t - 1) * k + j] } else { 0.0 };
            let tc = c.tanh();
            let dh = upstream[t * k + j] + dh_next[j];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * i * (1.0 - a * a);
            dz[k + j] = dc * a * i * (1.0 - i);
            dz[2 * k + j] = dc * c_prev * f * (1.0 - f);
            dz[3 * k + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let x = &seq[t * d..(t + 1) * d];
        let gxt = &mut gx[t * d..(t + 1) * d];
        dh_next.fill(0.0);
        for (r, &dzr) in dz.iter().enumerate() {
            gb[r] += dzr;
            let wrow = &p.w[r * d..(r + 1) * d];
            for c in 0..d {
                gw[r * d + c] += dzr * x[c];
                gxt[c] += dzr * wrow[c];
            }
            if t > 0 {
                let hp = &trace.output[(t - 1) * k..t * k];
                let urow = &p.u[r * k..(r + 1) * k];
                for c in 0..k {
                    gu[r * k + c] += dzr * hp[c];
                    dh_next[c] += dzr * urow[c];
                }
            }
        }
    }
    Ok((grad, gx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_parameters_stay_at_rest() {
        let shape = LstmShape { input: 3, hidden: 2 };
        let tr = lstm_forward(shape, &vec![0.0; shape.num_params()], &[1.0, -2.0, 0.5, 3.0, 1.0, 1.0]).unwrap();
        assert!(tr.output.iter().chain(&tr.cell).all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_hand_evaluation() {
        let shape = LstmShape { input: 1, hidden: 1 };
        // W = 1 for every gate, U = 0, b = 0.
        let params = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let tr = lstm_forward(shape, &params, &[1.0]).unwrap();
        assert_abs_diff_eq!(tr.gates[1], 0.73106, epsilon = 1e-5);
        assert_abs_diff_eq!(tr.cell[0], 0.55677, epsilon = 1e-5);
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        let c1 = s1 * 1.0f64.tanh();
        assert_abs_diff_eq!(tr.output[0], s1 * c1.tanh(), epsilon = 1e-15);
        assert_abs_diff_eq!(tr.output[0], 0.36961, epsilon = 1e-5);
    }
}
