use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::model::{Basis, DecisionModel, FeatureScaler, KernelSpec};
use crate::data::{LabeledDataset, Treatment};
use crate::error::{domain, fit};
use crate::linalg::{cholesky_solve, Matrix};
use crate::Result;

/// Kernel ridge regression with an unpenalized intercept:
/// minimizes `(1/n)‖y − f‖² + λ‖f‖²` over the expansion.
pub(crate) fn fit_ridge_features(
    scaler: FeatureScaler,
    features: Vec<Vec<f64>>,
    y: &[f64],
    kernel: KernelSpec,
    ridge: f64,
) -> Result<DecisionModel> {
    kernel.validate()?;
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(domain(format!("ridge must be positive, got {ridge}")));
    }
    let n = features.len();
    if n == 0 || y.len() != n {
        return Err(fit("kernel ridge needs matching nonempty features and targets"));
    }
    let nf = n as f64;
    let basis = Basis::new(kernel, &features);
    let theta = match &basis {
        Basis::Primal(z) => {
            let p = z.cols();
            let zbar: Vec<f64> = (0..p).map(|j| (0..n).map(|i| z.get(i, j)).sum::<f64>() / nf).collect();
            let ybar = y.iter().sum::<f64>() / nf;
            let gram = Matrix::symmetric_from_fn(p, |j, k| {
                (0..n).map(|i| (z.get(i, j) - zbar[j]) * (z.get(i, k) - zbar[k])).sum::<f64>() / nf
                    + if j == k { ridge } else { 0.0 }
            });
            let rhs: Vec<f64> =
                (0..p).map(|j| (0..n).map(|i| (z.get(i, j) - zbar[j]) * (y[i] - ybar)).sum::<f64>() / nf).collect();
            let mut w = cholesky_solve(gram, &rhs)?;
            let b = ybar - crate::linalg::dot(&zbar, &w);
            w.push(b);
            w
        }
        Basis::Dual(k) => {
            let reg = Matrix::from_fn(n, n, |i, j| k.get(i, j) + if i == j { nf * ridge } else { 0.0 });
            let ones = alloc::vec![1.0; n];
            let mut theta = Vec::with_capacity(n + 1);
            let c_y = cholesky_solve(reg.clone(), y)?;
            let c_1 = cholesky_solve(reg, &ones)?;
            let b = c_y.iter().sum::<f64>() / c_1.iter().sum::<f64>();
            theta.extend(c_y.iter().zip(&c_1).map(|(cy, c1)| cy - b * c1));
            theta.push(b);
            theta
        }
    };
    Ok(basis.into_model(kernel, scaler, features, &theta))
}

/// Kernel ridge regression of `targets` on `(x, s)` of `data`.
pub fn fit_kernel_ridge(
    data: &LabeledDataset,
    targets: &[f64],
    kernel: KernelSpec,
    ridge: f64,
) -> Result<DecisionModel> {
    let scaler = FeatureScaler::fit(data.rows().iter().map(|r| r.x.as_slice()), data.d(), data.groups().len());
    let features = data.rows().iter().map(|r| scaler.transform(&r.x, r.s)).collect();
    fit_ridge_features(scaler, features, targets, kernel, ridge)
}

/// Per-arm regressions of the reward, `Ê[R | x, s, A = a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub treated: DecisionModel,
    pub control: DecisionModel,
}

impl OutcomeModel {
    pub fn predict(&self, a: Treatment, x: &[f64], s: usize) -> Result<f64> {
        match a {
            Treatment::Treated => self.treated.score(x, s),
            Treatment::Control => self.control.score(x, s),
        }
    }

    /// The scorer `Ê[R | A = 1] − Ê[R | A = −1]` as a single expansion.
    pub fn contrast(&self) -> DecisionModel {
        let neg = self.control.clone().scaled(-1.0);
        let mut support = self.treated.support.clone();
        support.extend(neg.support);
        let mut coefficients = self.treated.coefficients.clone();
        coefficients.extend(neg.coefficients);
        DecisionModel {
            kernel: self.treated.kernel,
            scaler: self.treated.scaler.clone(),
            support,
            coefficients,
            intercept: self.treated.intercept + neg.intercept,
        }
        .collapse_linear()
    }
}

pub fn fit_outcome_model(train: &LabeledDataset, kernel: KernelSpec, ridge: f64) -> Result<OutcomeModel> {
    let scaler = FeatureScaler::fit(train.rows().iter().map(|r| r.x.as_slice()), train.d(), train.groups().len());
    let arm = |a: Treatment| -> Result<DecisionModel> {
        let rows: Vec<_> = train.rows().iter().filter(|r| r.a == a).collect();
        if rows.len() < 2 {
            return Err(fit(format!("arm {} has {} rows; need at least 2", i8::from(a), rows.len())));
        }
        let features = rows.iter().map(|r| scaler.transform(&r.x, r.s)).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.r).collect();
        fit_ridge_features(scaler.clone(), features, &y, kernel, ridge)
    };
    Ok(OutcomeModel { treated: arm(Treatment::Treated)?, control: arm(Treatment::Control)? })
}

/// Q-learning scorer `f̂(x, s) = Ê[R | x, s, A = 1] − Ê[R | x, s, A = −1]`.
pub fn fit_qlearning(train: &LabeledDataset, kernel: KernelSpec, ridge: f64) -> Result<DecisionModel> {
    Ok(fit_outcome_model(train, kernel, ridge)?.contrast())
}
