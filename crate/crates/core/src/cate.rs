//! R-learner estimate of the conditional average treatment effect and the
//! self-adjusted blending weight `w(x, s; α) = 1 − exp(−α|τ̂(x, s)|)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Treatment};
use crate::error::{domain, fit};
use crate::linalg::{cholesky_solve, dot, lu_solve, Matrix};
use crate::nuisance::{
    fit_kernel_ridge, fit_propensity, Basis, DecisionModel, FeatureScaler, KernelSpec, PropensityModel,
};
use crate::Result;

/// Nuisance settings for [`fit_rlearner_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RLearnerOptions {
    pub kernel: KernelSpec,
    /// Penalty on the effect head.
    pub ridge: f64,
    pub folds: usize,
    /// Kernel and penalty of the outcome regression `m̂`.
    pub outcome_kernel: KernelSpec,
    pub outcome_ridge: f64,
    pub propensity_ridge: f64,
    pub tau_floor: f64,
}

impl RLearnerOptions {
    pub fn new(kernel: KernelSpec, ridge: f64, folds: usize) -> Self {
        RLearnerOptions {
            kernel,
            ridge,
            folds,
            outcome_kernel: kernel,
            outcome_ridge: 1e-2,
            propensity_ridge: 1e-3,
            tau_floor: 0.01,
        }
    }
}

/// Fitted R-learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateModel {
    /// `m̂(x, s)` refitted on all rows.
    pub outcome: DecisionModel,
    /// `ê(x, s)` refitted on all rows.
    pub propensity: PropensityModel,
    /// `τ̂(x, s)`
    pub effect: DecisionModel,
    pub folds: usize,
    /// Cross-fitting fold of each training row.
    pub fold_of: Vec<usize>,
}

impl CateModel {
    pub fn effect(&self, x: &[f64], s: usize) -> Result<f64> {
        self.effect.score(x, s)
    }

    /// `1 − exp(−α|τ̂(x, s)|)`
    pub fn weight(&self, x: &[f64], s: usize, alpha: f64) -> Result<f64> {
        weight_from_effect(self.effect(x, s)?, alpha)
    }
}

/// `1 − exp(−α|τ|)`, in `[0, 1)`.
pub fn weight_from_effect(effect: f64, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(domain(format!("alpha must be nonnegative, got {alpha}")));
    }
    Ok(weight_unchecked(effect, alpha))
}

pub(crate) fn weight_unchecked(effect: f64, alpha: f64) -> f64 {
    // Largest double below one; keeps the weight strictly inside [0, 1).
    (-libm::expm1(-alpha * effect.abs())).min(1.0 - f64::EPSILON / 2.0)
}

/// Second-stage R-learner loss over a kernel expansion:
///
/// `J(c, b) = (1/n) Σ [r_i − w_i·τ_i]² + λ‖τ‖²`, `τ = Mc + b`,
/// with outcome residuals `r_i = R_i − m̂(X_i, S_i)` and treatment residuals
/// `w_i = W_i − ê(X_i, S_i)`, `W_i = (A_i + 1)/2`.
pub struct RLearnerObjective {
    basis: Basis,
    kernel: KernelSpec,
    scaler: FeatureScaler,
    features: Vec<Vec<f64>>,
    outcome_residual: Vec<f64>,
    treatment_residual: Vec<f64>,
    ridge: f64,
}

impl RLearnerObjective {
    /// Builds the objective from precomputed residuals.
    pub fn from_residuals(
        train: &LabeledDataset,
        kernel: KernelSpec,
        ridge: f64,
        outcome_residual: Vec<f64>,
        treatment_residual: Vec<f64>,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(ridge > 0.0 && ridge.is_finite()) {
            return Err(domain(format!("ridge must be positive, got {ridge}")));
        }
        if outcome_residual.len() != train.len() || treatment_residual.len() != train.len() {
            return Err(domain("residual vectors must match the training rows"));
        }
        let scaler = FeatureScaler::fit(train.rows().iter().map(|r| r.x.as_slice()), train.d(), train.groups().len());
        let features: Vec<Vec<f64>> = train.rows().iter().map(|r| scaler.transform(&r.x, r.s)).collect();
        Ok(RLearnerObjective {
            basis: Basis::new(kernel, &features),
            kernel,
            scaler,
            features,
            outcome_residual,
            treatment_residual,
            ridge,
        })
    }

    pub fn dimension(&self) -> usize {
        self.basis.width() + 1
    }

    fn errors(&self, theta: &[f64]) -> Vec<f64> {
        let tau = self.basis.predict(theta);
        tau.iter().zip(&self.outcome_residual).zip(&self.treatment_residual).map(|((t, r), w)| r - w * t).collect()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let q = self.basis.width();
        let e = self.errors(theta);
        dot(&e, &e) / e.len() as f64 + self.ridge * dot(&theta[..q], &self.basis.penalty_times(&theta[..q]))
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let q = self.basis.width();
        let e = self.errors(theta);
        let n = e.len() as f64;
        let de: Vec<f64> = e.iter().zip(&self.treatment_residual).map(|(ei, wi)| -2.0 * wi * ei / n).collect();
        let mut g = self.basis.design().tr_mul_vec(&de);
        let pc = self.basis.penalty_times(&theta[..q]);
        for (gj, pj) in g.iter_mut().zip(&pc) {
            *gj += 2.0 * self.ridge * pj;
        }
        g.push(de.iter().sum());
        g
    }

    /// Exact minimizer from the normal equations.
    pub fn minimize(&self) -> Result<Vec<f64>> {
        let q = self.basis.width();
        let n = self.features.len();
        let nf = n as f64;
        let w = &self.treatment_residual;
        let r = &self.outcome_residual;
        match &self.basis {
            Basis::Primal(z) => {
                let aug = |i: usize, j: usize| if j < q { z.get(i, j) } else { 1.0 };
                let gram = Matrix::symmetric_from_fn(q + 1, |j, k| {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += w[i] * w[i] * aug(i, j) * aug(i, k);
                    }
                    s / nf
                        + if j == k && j < q {
                            self.ridge
                        } else if j == k {
                            1e-12
                        } else {
                            0.0
                        }
                });
                let rhs: Vec<f64> =
                    (0..=q).map(|j| (0..n).map(|i| w[i] * r[i] * aug(i, j)).sum::<f64>() / nf).collect();
                cholesky_solve(gram, &rhs)
            }
            Basis::Dual(k) => {
                // Stationarity with K factored out:
                // (D²K/n + λI)c + (D²1/n)b = Dr/n,  1ᵀD²(Kc + 1b) = 1ᵀDr.
                let mut a = Matrix::zeros(n + 1, n + 1);
                let mut rhs = Vec::with_capacity(n + 1);
                let mut bottom = vec![0.0; n];
                for i in 0..n {
                    let d2 = w[i] * w[i] / nf;
                    let ki = k.row(i);
                    for j in 0..n {
                        a.set(i, j, d2 * ki[j]);
                    }
                    a.add_to(i, i, self.ridge);
                    a.set(i, n, d2);
                    crate::linalg::axpy(d2, ki, &mut bottom);
                    rhs.push(w[i] * r[i] / nf);
                }
                for (j, v) in bottom.into_iter().enumerate() {
                    a.set(n, j, v);
                }
                a.set(n, n, w.iter().map(|v| v * v).sum::<f64>() / nf + 1e-12);
                rhs.push(w.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / nf);
                lu_solve(a, &rhs)
            }
        }
    }

    pub fn into_model(self, theta: &[f64]) -> DecisionModel {
        self.basis.into_model(self.kernel, self.scaler, self.features, theta)
    }
}

fn check_arms(data: &LabeledDataset, what: &str) -> Result<()> {
    let treated = data.rows().iter().filter(|r| r.a == Treatment::Treated).count();
    if treated == 0 || treated == data.len() {
        return Err(fit(format!("{what} contains a single treatment arm")));
    }
    Ok(())
}

/// R-learner with default nuisance settings.
pub fn fit_rlearner(train: &LabeledDataset, kernel: KernelSpec, ridge: f64, folds: usize) -> Result<CateModel> {
    fit_rlearner_with(train, &RLearnerOptions::new(kernel, ridge, folds))
}

/// Cross-fitted R-learner: fold `k` nuisances are fitted on the other folds.
pub fn fit_rlearner_with(train: &LabeledDataset, opts: &RLearnerOptions) -> Result<CateModel> {
    let folds = opts.folds;
    if folds < 2 || folds > train.len() {
        return Err(domain(format!("cannot make {folds} folds from {} rows", train.len())));
    }
    let fold_of: Vec<usize> = (0..train.len()).map(|i| i % folds).collect();
    let mut outcome_residual = vec![0.0; train.len()];
    let mut treatment_residual = vec![0.0; train.len()];
    for k in 0..folds {
        let (rest, held): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|&i| fold_of[i] != k);
        let fit_part = train.select(&rest);
        check_arms(&train.select(&held), &format!("fold {k}"))?;
        check_arms(&fit_part, &format!("complement of fold {k}"))?;
        let y: Vec<f64> = fit_part.rows().iter().map(|r| r.r).collect();
        let m = fit_kernel_ridge(&fit_part, &y, opts.outcome_kernel, opts.outcome_ridge)?;
        let e = fit_propensity(&fit_part, opts.propensity_ridge, opts.tau_floor)?;
        for &i in &held {
            let row = &train.rows()[i];
            let treated = if row.a == Treatment::Treated { 1.0 } else { 0.0 };
            outcome_residual[i] = row.r - m.score(&row.x, row.s)?;
            treatment_residual[i] = treated - e.prob_treated(&row.x, row.s);
        }
    }
    let objective =
        RLearnerObjective::from_residuals(train, opts.kernel, opts.ridge, outcome_residual, treatment_residual)?;
    let theta = objective.minimize()?;
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(fit("effect head diverged"));
    }
    let y: Vec<f64> = train.rows().iter().map(|r| r.r).collect();
    Ok(CateModel {
        outcome: fit_kernel_ridge(train, &y, opts.outcome_kernel, opts.outcome_ridge)?,
        propensity: fit_propensity(train, opts.propensity_ridge, opts.tau_floor)?,
        effect: objective.into_model(&theta),
        folds,
        fold_of,
    })
}
