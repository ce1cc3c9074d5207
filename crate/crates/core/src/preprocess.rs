//! Feature transforms applied before a model sees a sample.

use serde::{Deserialize, Serialize};

/// Pointwise transform of a normalized FRF vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputTransform {
    Identity,
    /// `ln(x + floor)`.
    Log { floor: f64 },
    /// `ln(x + floor)` minus the sample's mean log value, which removes
    /// any per-sample scale factor.
    LogCentered { floor: f64 },
}

impl Default for InputTransform {
    fn default() -> Self {
        InputTransform::LogCentered { floor: 1e-12 }
    }
}

impl InputTransform {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            InputTransform::Identity => x.to_vec(),
            InputTransform::Log { floor } => x.iter().map(|&v| (v.abs() + floor).ln()).collect(),
            InputTransform::LogCentered { floor } => {
                let mut out: Vec<f64> = x.iter().map(|&v| (v.abs() + floor).ln()).collect();
                let mean = out.iter().sum::<f64>() / out.len().max(1) as f64;
                out.iter_mut().for_each(|v| *v -= mean);
                out
            }
        }
    }

    /// Jacobian-vector product: maps a gradient with respect to the
    /// transformed vector back to the raw input.
    pub fn pullback(&self, x: &[f64], grad: &[f64]) -> Vec<f64> {
        match *self {
            InputTransform::Identity => grad.to_vec(),
            InputTransform::Log { floor } => x
                .iter()
                .zip(grad)
                .map(|(&v, &g)| g * v.signum_or_one() / (v.abs() + floor))
                .collect(),
            InputTransform::LogCentered { floor } => {
                let n = x.len().max(1) as f64;
                let mean_g = grad.iter().sum::<f64>() / n;
                x.iter()
                    .zip(grad)
                    .map(|(&v, &g)| (g - mean_g) * v.signum_or_one() / (v.abs() + floor))
                    .collect()
            }
        }
    }
}

trait SignumOrOne {
    fn signum_or_one(self) -> f64;
}

impl SignumOrOne for f64 {
    fn signum_or_one(self) -> f64 {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

/// Per-feature z-score fitted on a training split. Constant features get
/// unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a, I>(rows: I, width: usize) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut n = 0usize;
        let mut mean = vec![0.0; width];
        let mut m2 = vec![0.0; width];
        for row in rows {
            n += 1;
            for (j, &x) in row.iter().enumerate() {
                let d = x - mean[j];
                mean[j] += d / n as f64;
                m2[j] += d * (x - mean[j]);
            }
        }
        let std = m2
            .iter()
            .map(|&s| {
                let sd = if n > 1 { (s / n as f64).sqrt() } else { 0.0 };
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(width: usize) -> Self {
        Self { mean: vec![0.0; width], std: vec![1.0; width] }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| v * s + m)
            .collect()
    }
}

/// Transform followed by standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub transform: InputTransform,
    /// `None` skips the per-feature z-score.
    pub scaler: Option<Standardizer>,
}

impl FeaturePipeline {
    pub fn fit<'a, I>(transform: InputTransform, standardize: bool, rows: I, width: usize) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let scaler = standardize.then(|| {
            let transformed: Vec<Vec<f64>> = rows.into_iter().map(|r| transform.apply(r)).collect();
            Standardizer::fit(transformed.iter().map(Vec::as_slice), width)
        });
        Self { transform, scaler }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let t = self.transform.apply(x);
        match &self.scaler {
            Some(s) => s.apply(&t),
            None => t,
        }
    }

    /// Gradient with respect to the raw features given the gradient with
    /// respect to the pipeline output.
    pub fn pullback(&self, x: &[f64], grad: &[f64]) -> Vec<f64> {
        let g: Vec<f64> = match &self.scaler {
            Some(s) => grad.iter().zip(&s.std).map(|(g, sd)| g / sd).collect(),
            None => grad.to_vec(),
        };
        self.transform.pullback(x, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn standardizer_moments() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(rows.iter().map(Vec::as_slice), 2);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 5.0]), vec![1.0, 0.0]);
        assert_eq!(s.invert(&[1.0, 0.0]), vec![3.0, 5.0]);
    }

    #[test]
    fn log_centered_pullback_matches_finite_differences() {
        let x = [0.2, 0.9, 0.05, 1.0];
        let rows = [x.to_vec(), vec![0.3, 0.5, 0.1, 0.7], vec![0.25, 0.1, 0.4, 0.6]];
        let p = FeaturePipeline::fit(InputTransform::default(), true, rows.iter().map(Vec::as_slice), 4);
        let w = [0.3, -1.0, 2.0, 0.5];
        let f = |x: &[f64]| p.apply(x).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let g = p.pullback(&x, &w);
        for j in 0..4 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            assert_relative_eq!(g[j], (f(&xp) - f(&xm)) / (2.0 * h), max_relative = 1e-6);
        }
    }
}
