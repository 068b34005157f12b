use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::domain;
use crate::linalg::{dot, squared_distance, Matrix};
use crate::Result;

/// Reproducing kernel used by an expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    /// `k(u, v) = exp(−‖u − v‖² / (2h²))`
    Gaussian {
        bandwidth: f64,
    },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(KernelSpec::Gaussian { bandwidth })
        } else {
            Err(domain(format!("gaussian bandwidth must be positive, got {bandwidth}")))
        }
    }

    #[inline]
    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(u, v),
            KernelSpec::Gaussian { bandwidth } => libm::exp(-squared_distance(u, v) / (2.0 * bandwidth * bandwidth)),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Gaussian { bandwidth } => KernelSpec::gaussian(bandwidth).map(|_| ()),
        }
    }
}

/// Per-coordinate standardization plus one-hot group encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub n_groups: usize,
}

impl FeatureScaler {
    pub fn fit<'a>(xs: impl Iterator<Item = &'a [f64]>, d: usize, n_groups: usize) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for x in xs {
            n += 1;
            for j in 0..d {
                sum[j] += x[j];
                sq[j] += x[j] * x[j];
            }
        }
        let nf = n.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let scale = (0..d)
            .map(|j| {
                let var = (sq[j] / nf - mean[j] * mean[j]).max(0.0);
                let sd = libm::sqrt(var);
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        FeatureScaler { mean, scale, n_groups }
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.mean.len() + self.n_groups
    }

    pub fn transform(&self, x: &[f64], s: usize) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.width());
        z.extend(x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), sd)| (v - m) / sd));
        z.extend((0..self.n_groups).map(|g| if g == s { 1.0 } else { 0.0 }));
        z
    }

    pub(crate) fn check(&self, x: &[f64], s: usize) -> Result<()> {
        if x.len() != self.d() {
            return Err(domain(format!("expected {} covariates, got {}", self.d(), x.len())));
        }
        if s >= self.n_groups {
            return Err(domain(format!("group index {s} out of range ({} groups)", self.n_groups)));
        }
        Ok(())
    }
}

/// Median of pairwise Euclidean distances (at most 600 evenly strided points).
pub fn median_heuristic_bandwidth(features: &[Vec<f64>]) -> f64 {
    let n = features.len();
    let step = n.div_ceil(600).max(1);
    let pts: Vec<&Vec<f64>> = features.iter().step_by(step).collect();
    let mut dists = Vec::with_capacity(pts.len() * pts.len().saturating_sub(1) / 2);
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            dists.push(libm::sqrt(squared_distance(pts[i], pts[j])));
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let med = if m % 2 == 1 { dists[m / 2] } else { 0.5 * (dists[m / 2 - 1] + dists[m / 2]) };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// A fitted scorer `f(x, s) = Σ_j c_j k(z_j, φ(x, s)) + b`.
///
/// Support points live in the scaled feature space `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionModel {
    pub kernel: KernelSpec,
    pub scaler: FeatureScaler,
    pub support: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl DecisionModel {
    /// A linear scorer `w·φ(x, s) + b` in collapsed basis form.
    pub fn linear(scaler: FeatureScaler, weights: Vec<f64>, intercept: f64) -> Self {
        let p = weights.len();
        debug_assert_eq!(p, scaler.width());
        let support = (0..p).map(|j| (0..p).map(|k| if j == k { 1.0 } else { 0.0 }).collect()).collect();
        DecisionModel { kernel: KernelSpec::Linear, scaler, support, coefficients: weights, intercept }
    }

    /// Dimension-checked score.
    pub fn score(&self, x: &[f64], s: usize) -> Result<f64> {
        self.scaler.check(x, s)?;
        Ok(self.score_unchecked(x, s))
    }

    pub(crate) fn score_unchecked(&self, x: &[f64], s: usize) -> f64 {
        self.score_features(&self.scaler.transform(x, s))
    }

    pub fn score_features(&self, z: &[f64]) -> f64 {
        self.support.iter().zip(&self.coefficients).map(|(sp, c)| c * self.kernel.eval(sp, z)).sum::<f64>()
            + self.intercept
    }

    /// Collapses a linear-kernel expansion to one weight per feature.
    pub(crate) fn collapse_linear(self) -> Self {
        if !self.kernel.is_linear() {
            return self;
        }
        let mut w = vec![0.0; self.scaler.width()];
        for (sp, c) in self.support.iter().zip(&self.coefficients) {
            crate::linalg::axpy(*c, sp, &mut w);
        }
        DecisionModel::linear(self.scaler, w, self.intercept)
    }

    /// Scales coefficients and intercept (used to negate or difference scorers).
    pub(crate) fn scaled(mut self, factor: f64) -> Self {
        self.coefficients.iter_mut().for_each(|c| *c *= factor);
        self.intercept *= factor;
        self
    }
}

/// Parametrization of a penalized expansion fit over `n` training points.
///
/// `Primal`: `f = Zw + b`, penalty `‖w‖²` (linear kernel).
/// `Dual`: `f = Kc + b`, penalty `cᵀKc` (any kernel).
pub(crate) enum Basis {
    Primal(Matrix),
    Dual(Matrix),
}

impl Basis {
    pub(crate) fn new(kernel: KernelSpec, features: &[Vec<f64>]) -> Self {
        match kernel {
            KernelSpec::Linear => {
                let p = features.first().map_or(0, Vec::len);
                Basis::Primal(Matrix::from_fn(features.len(), p, |i, j| features[i][j]))
            }
            k => Basis::Dual(Matrix::symmetric_from_fn(features.len(), |i, j| k.eval(&features[i], &features[j]))),
        }
    }

    #[inline]
    pub(crate) fn design(&self) -> &Matrix {
        match self {
            Basis::Primal(m) | Basis::Dual(m) => m,
        }
    }

    /// Number of expansion coefficients (excluding the intercept).
    pub(crate) fn width(&self) -> usize {
        self.design().cols()
    }

    /// `f_i = (M c)_i + b` for packed `theta = (c, b)`.
    pub(crate) fn predict(&self, theta: &[f64]) -> Vec<f64> {
        let q = self.width();
        let b = theta[q];
        let mut f = self.design().mul_vec(&theta[..q]);
        f.iter_mut().for_each(|v| *v += b);
        f
    }

    /// `P c` where `P` is the penalty matrix.
    pub(crate) fn penalty_times(&self, c: &[f64]) -> Vec<f64> {
        match self {
            Basis::Primal(_) => c.to_vec(),
            Basis::Dual(k) => k.mul_vec(c),
        }
    }

    pub(crate) fn into_model(
        self,
        kernel: KernelSpec,
        scaler: FeatureScaler,
        features: Vec<Vec<f64>>,
        theta: &[f64],
    ) -> DecisionModel {
        let q = self.width();
        match self {
            Basis::Primal(_) => DecisionModel::linear(scaler, theta[..q].to_vec(), theta[q]),
            Basis::Dual(_) => DecisionModel {
                kernel,
                scaler,
                support: features,
                coefficients: theta[..q].to_vec(),
                intercept: theta[q],
            }
            .collapse_linear(),
        }
    }
}
