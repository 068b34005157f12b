use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Treatment};
use crate::error::{domain, fit};
use crate::linalg::{max_abs, Matrix};
use crate::Result;

/// Logistic model for `P(A = 1 | x, s)` over `(1, x, one-hot(s))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub d: usize,
    pub n_groups: usize,
    /// Intercept, `d` covariate slopes, then one effect per group.
    pub coefficients: Vec<f64>,
    pub tau_floor: f64,
}

impl PropensityModel {
    pub fn from_coefficients(d: usize, n_groups: usize, coefficients: Vec<f64>, tau_floor: f64) -> Result<Self> {
        if coefficients.len() != d + n_groups + 1 {
            return Err(domain(format!(
                "expected {} propensity coefficients, got {}",
                d + n_groups + 1,
                coefficients.len()
            )));
        }
        check_floor(tau_floor)?;
        Ok(PropensityModel { d, n_groups, coefficients, tau_floor })
    }

    /// Constant propensity (e.g. a known randomization probability).
    pub fn constant(d: usize, n_groups: usize, p: f64, tau_floor: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(domain(format!("constant propensity {p} not in (0, 1)")));
        }
        let mut c = vec![0.0; d + n_groups + 1];
        c[0] = libm::log(p / (1.0 - p));
        Self::from_coefficients(d, n_groups, c, tau_floor)
    }

    fn linear_predictor(&self, x: &[f64], s: usize) -> f64 {
        let c = &self.coefficients;
        c[0] + c[1..=self.d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c[1 + self.d + s]
    }

    /// Clipped `π̂(1 | x, s)`.
    pub fn prob_treated(&self, x: &[f64], s: usize) -> f64 {
        let p = sigmoid(self.linear_predictor(x, s));
        p.clamp(self.tau_floor, 1.0 - self.tau_floor)
    }

    /// Clipped `π̂(a | x, s)`.
    pub fn prob(&self, a: Treatment, x: &[f64], s: usize) -> f64 {
        let p = self.prob_treated(x, s);
        match a {
            Treatment::Treated => p,
            Treatment::Control => 1.0 - p,
        }
    }
}

fn check_floor(tau_floor: f64) -> Result<()> {
    if tau_floor > 0.0 && tau_floor < 0.5 {
        Ok(())
    } else {
        Err(domain(format!("tau_floor {tau_floor} not in (0, 0.5)")))
    }
}

#[inline]
pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + libm::exp(-u))
    } else {
        let e = libm::exp(u);
        e / (1.0 + e)
    }
}

/// `log(1 + eᵘ)` without overflow.
#[inline]
pub(crate) fn softplus(u: f64) -> f64 {
    u.max(0.0) + libm::log1p(libm::exp(-u.abs()))
}

/// Ridge-penalized logistic regression of `I(A = 1)` on `(1, x, one-hot(s))`.
///
/// Minimizes the mean log-loss plus `ridge·Σ_{j≥1} c_j²` by damped Newton.
pub fn fit_propensity(train: &LabeledDataset, ridge: f64, tau_floor: f64) -> Result<PropensityModel> {
    check_floor(tau_floor)?;
    if !(ridge >= 0.0) {
        return Err(domain(format!("ridge must be nonnegative, got {ridge}")));
    }
    let treated = train.rows().iter().filter(|r| r.a == Treatment::Treated).count();
    if treated == 0 || treated == train.len() {
        return Err(fit("propensity fit needs both treatments present"));
    }
    let (d, g) = (train.d(), train.groups().len());
    let p = d + g + 1;
    let n = train.len() as f64;
    let design: Vec<Vec<f64>> = train
        .rows()
        .iter()
        .map(|r| {
            let mut z = Vec::with_capacity(p);
            z.push(1.0);
            z.extend_from_slice(&r.x);
            z.extend((0..g).map(|k| if k == r.s { 1.0 } else { 0.0 }));
            z
        })
        .collect();
    let y: Vec<f64> = train.rows().iter().map(|r| if r.a == Treatment::Treated { 1.0 } else { 0.0 }).collect();
    let penalty = |j: usize| if j == 0 { 0.0 } else { ridge.max(1e-10) };

    let objective = |c: &[f64]| -> f64 {
        let loss: f64 = design
            .iter()
            .zip(&y)
            .map(|(z, yi)| {
                let eta: f64 = z.iter().zip(c).map(|(a, b)| a * b).sum();
                softplus(eta) - yi * eta
            })
            .sum::<f64>()
            / n;
        loss + (1..p).map(|j| penalty(j) * c[j] * c[j]).sum::<f64>()
    };

    let mut c = vec![0.0; p];
    let mut current = objective(&c);
    for _ in 0..200 {
        let mut grad = vec![0.0; p];
        let mut hess = Matrix::zeros(p, p);
        for (z, yi) in design.iter().zip(&y) {
            let eta: f64 = z.iter().zip(&c).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta);
            let w = mu * (1.0 - mu);
            for j in 0..p {
                if z[j] == 0.0 {
                    continue;
                }
                grad[j] += (mu - yi) * z[j] / n;
                for k in j..p {
                    hess.add_to(j, k, w * z[j] * z[k] / n);
                }
            }
        }
        for j in 0..p {
            grad[j] += 2.0 * penalty(j) * c[j];
            hess.add_to(j, j, 2.0 * penalty(j));
            for k in 0..j {
                let v = hess.get(k, j);
                hess.set(j, k, v);
            }
        }
        if max_abs(&grad) <= 1e-10 {
            break;
        }
        let neg: Vec<f64> = grad.iter().map(|v| -v).collect();
        let step = crate::linalg::lu_solve(hess, &neg)?;
        let slope: f64 = grad.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = c.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let val = objective(&trial);
            if val <= current + 1e-4 * t * slope {
                c = trial;
                current = val;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || max_abs(&step) * t < 1e-14 {
            break;
        }
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(fit("propensity coefficients diverged"));
    }
    PropensityModel::from_coefficients(d, g, c, tau_floor)
}
