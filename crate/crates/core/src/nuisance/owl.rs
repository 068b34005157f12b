use alloc::format;
use alloc::vec::Vec;

use super::model::{Basis, DecisionModel, FeatureScaler, KernelSpec};
use super::propensity::{sigmoid, softplus, PropensityModel};
use crate::data::{LabeledDataset, Treatment};
use crate::error::{domain, fit};
use crate::linalg::{dot, lu_solve, max_abs, Matrix};
use crate::metrics::{estimate_value, ValueRow};
use crate::Result;

/// Ridge values tried by [`fit_owl_cv`] unless overridden.
pub const DEFAULT_RIDGE_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Penalized outcome-weighted surrogate risk over a kernel expansion:
///
/// `J(c, b) = (1/n) Σ W_i h(A_i, f_i) + λ·‖f‖²`, with `f = Mc + b`,
/// `h(a, u) = −((a+1)/2)·u + log(1 + eᵘ)` and
/// `W_i ∝ R̃_i / π̂(A_i | X_i, S_i)` normalized to mean one.
pub struct OwlObjective {
    basis: Basis,
    kernel: KernelSpec,
    scaler: FeatureScaler,
    features: Vec<Vec<f64>>,
    weights: Vec<f64>,
    labels: Vec<f64>,
    ridge: f64,
}

impl OwlObjective {
    pub fn new(train: &LabeledDataset, kernel: KernelSpec, ridge: f64, prop: &PropensityModel) -> Result<Self> {
        kernel.validate()?;
        if !(ridge > 0.0 && ridge.is_finite()) {
            return Err(domain(format!("ridge must be positive, got {ridge}")));
        }
        if train.len() < 2 {
            return Err(domain("outcome-weighted learning needs at least 2 rows"));
        }
        let scaler = FeatureScaler::fit(train.rows().iter().map(|r| r.x.as_slice()), train.d(), train.groups().len());
        let features: Vec<Vec<f64>> = train.rows().iter().map(|r| scaler.transform(&r.x, r.s)).collect();
        let shifted = train.shifted_rewards();
        let mut weights: Vec<f64> =
            train.rows().iter().zip(&shifted).map(|(r, rt)| rt / prop.prob(r.a, &r.x, r.s)).collect();
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        if !(mean.is_finite() && mean > 0.0) || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(fit("outcome weights are not finite and nonnegative"));
        }
        weights.iter_mut().for_each(|w| *w /= mean);
        let labels = train.rows().iter().map(|r| if r.a == Treatment::Treated { 1.0 } else { 0.0 }).collect();
        Ok(OwlObjective { basis: Basis::new(kernel, &features), kernel, scaler, features, weights, labels, ridge })
    }

    /// Length of the packed parameter vector `(c, b)`.
    pub fn dimension(&self) -> usize {
        self.basis.width() + 1
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let q = self.basis.width();
        let f = self.basis.predict(theta);
        let n = f.len() as f64;
        let risk: f64 =
            f.iter().zip(&self.weights).zip(&self.labels).map(|((fi, w), y)| w * (softplus(*fi) - y * fi)).sum::<f64>()
                / n;
        risk + self.ridge * dot(&theta[..q], &self.basis.penalty_times(&theta[..q]))
    }

    fn residuals(&self, f: &[f64]) -> Vec<f64> {
        f.iter().zip(&self.weights).zip(&self.labels).map(|((fi, w), y)| w * (sigmoid(*fi) - y)).collect()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let q = self.basis.width();
        let f = self.basis.predict(theta);
        let n = f.len() as f64;
        let r = self.residuals(&f);
        let mut g = self.basis.design().tr_mul_vec(&r);
        let pc = self.basis.penalty_times(&theta[..q]);
        for (gj, pj) in g.iter_mut().zip(&pc) {
            *gj = *gj / n + 2.0 * self.ridge * pj;
        }
        g.push(r.iter().sum::<f64>() / n);
        g
    }

    fn newton_direction(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let q = self.basis.width();
        let f = self.basis.predict(theta);
        let n = f.len();
        let nf = n as f64;
        let r = self.residuals(&f);
        let curv: Vec<f64> = f
            .iter()
            .zip(&self.weights)
            .map(|(fi, w)| {
                let mu = sigmoid(*fi);
                w * mu * (1.0 - mu)
            })
            .collect();
        let lam2 = 2.0 * self.ridge;
        match &self.basis {
            Basis::Primal(z) => {
                let mut h = Matrix::zeros(q + 1, q + 1);
                for i in 0..n {
                    let zi = z.row(i);
                    let di = curv[i] / nf;
                    for j in 0..q {
                        let v = di * zi[j];
                        if v == 0.0 {
                            continue;
                        }
                        for k in j..q {
                            h.add_to(j, k, v * zi[k]);
                        }
                        h.add_to(j, q, v);
                    }
                    h.add_to(q, q, di);
                }
                for j in 0..=q {
                    for k in 0..j {
                        let v = h.get(k, j);
                        h.set(j, k, v);
                    }
                    if j < q {
                        h.add_to(j, j, lam2);
                    }
                }
                h.add_to(q, q, 1e-12);
                let g = self.gradient(theta);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                lu_solve(h, &neg)
            }
            Basis::Dual(k) => {
                // Newton system with the common factor K removed from the
                // coefficient block: (DK/n + 2λI)Δc + (D1/n)Δb = −(r/n + 2λc).
                let mut a = Matrix::zeros(n + 1, n + 1);
                let mut rhs = Vec::with_capacity(n + 1);
                let mut bottom = alloc::vec![0.0; n];
                for i in 0..n {
                    let di = curv[i] / nf;
                    let ki = k.row(i);
                    for j in 0..n {
                        a.set(i, j, di * ki[j]);
                    }
                    a.add_to(i, i, lam2);
                    a.set(i, n, di);
                    crate::linalg::axpy(di, ki, &mut bottom);
                    rhs.push(-(r[i] / nf + lam2 * theta[i]));
                }
                for (j, v) in bottom.into_iter().enumerate() {
                    a.set(n, j, v);
                }
                a.set(n, n, curv.iter().sum::<f64>() / nf + 1e-12);
                rhs.push(-r.iter().sum::<f64>() / nf);
                lu_solve(a, &rhs)
            }
        }
    }

    /// Damped Newton descent from zero to `‖∇J‖∞ ≤ 1e−8`.
    pub fn minimize(&self) -> Result<Vec<f64>> {
        let mut theta = alloc::vec![0.0; self.dimension()];
        let mut current = self.value(&theta);
        for _ in 0..100 {
            let g = self.gradient(&theta);
            if max_abs(&g) <= 1e-8 {
                break;
            }
            let step = self.newton_direction(&theta)?;
            let slope = dot(&g, &step);
            if !(slope < 0.0) {
                break;
            }
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..50 {
                let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, b)| a + t * b).collect();
                let v = self.value(&trial);
                if v <= current + 1e-4 * t * slope {
                    theta = trial;
                    current = v;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(fit("outcome-weighted learning diverged"));
        }
        Ok(theta)
    }

    pub fn into_model(self, theta: &[f64]) -> DecisionModel {
        self.basis.into_model(self.kernel, self.scaler, self.features, theta)
    }
}

/// Outcome-weighted learning with the binomial-deviance surrogate.
pub fn fit_owl(
    train: &LabeledDataset,
    kernel: KernelSpec,
    ridge: f64,
    prop: &PropensityModel,
) -> Result<DecisionModel> {
    let objective = OwlObjective::new(train, kernel, ridge, prop)?;
    let theta = objective.minimize()?;
    Ok(objective.into_model(&theta))
}

/// [`fit_owl`] with the ridge chosen by `folds`-fold cross-validated
/// inverse-propensity value, and refitted on all of `train` with `prop`.
/// Each fold fits its own propensity with `fold_propensity` on the fitting
/// rows and uses it for both the weights and the held-out value; a propensity
/// fitted on the held-out rows biases their value estimate downward.
/// Returns the refitted model and the ridge.
pub fn fit_owl_cv(
    train: &LabeledDataset,
    kernel: KernelSpec,
    grid: &[f64],
    folds: usize,
    prop: &PropensityModel,
    fold_propensity: impl Fn(&LabeledDataset) -> Result<PropensityModel>,
) -> Result<(DecisionModel, f64)> {
    if grid.is_empty() {
        return Err(domain("ridge grid is empty"));
    }
    if folds < 2 || folds > train.len() {
        return Err(domain(format!("cannot make {folds} folds from {} rows", train.len())));
    }
    let splits = (0..folds)
        .map(|k| {
            let (fit_idx, hold_idx): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|i| i % folds != k);
            let fit_rows = train.select(&fit_idx);
            let fold_prop = fold_propensity(&fit_rows)?;
            Ok((fit_rows, hold_idx, fold_prop))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &ridge in grid {
        let mut total = 0.0;
        for (fit_rows, hold_idx, fold_prop) in &splits {
            let model = fit_owl(fit_rows, kernel, ridge, fold_prop)?;
            let rows: Vec<ValueRow> = hold_idx
                .iter()
                .map(|&i| {
                    let r = &train.rows()[i];
                    ValueRow {
                        score: model.score_unchecked(&r.x, r.s),
                        a: r.a,
                        r: r.r,
                        prob_treated: fold_prop.prob_treated(&r.x, r.s),
                    }
                })
                .collect();
            total += estimate_value(&rows)? * hold_idx.len() as f64;
        }
        let value = total / train.len() as f64;
        if value > best.0 {
            best = (value, ridge);
        }
    }
    Ok((fit_owl(train, kernel, best.1, prop)?, best.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledRow;
    use alloc::string::ToString;
    use alloc::vec;

    fn separable() -> LabeledDataset {
        let rows = (0..41)
            .map(|i| {
                let x = -2.0 + 0.1 * i as f64;
                let a = if x > 0.0 { Treatment::Treated } else { Treatment::Control };
                LabeledRow { x: vec![x], s: 0, a, r: 1.0 }
            })
            .collect();
        LabeledDataset::new(1, vec!["g".to_string()], rows).unwrap()
    }

    #[test]
    fn separable_line_gets_positive_slope() {
        let data = separable();
        let prop = PropensityModel::constant(1, 1, 0.5, 0.01).unwrap();
        let m = fit_owl(&data, KernelSpec::Linear, 1e-3, &prop).unwrap();
        assert!(m.coefficients[0] > 0.0);
        for r in data.rows().iter().filter(|r| r.x[0].abs() > 0.1) {
            assert_eq!(Treatment::from_score(m.score(&r.x, 0).unwrap()), r.a);
        }
    }

    #[test]
    fn optimum_has_small_gradient() {
        let data = separable();
        let prop = PropensityModel::constant(1, 1, 0.5, 0.01).unwrap();
        for kernel in [KernelSpec::Linear, KernelSpec::gaussian(0.8).unwrap()] {
            let obj = OwlObjective::new(&data, kernel, 0.05, &prop).unwrap();
            let theta = obj.minimize().unwrap();
            assert!(max_abs(&obj.gradient(&theta)) <= 1e-8);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let data = separable();
        let prop = PropensityModel::constant(1, 1, 0.5, 0.01).unwrap();
        assert!(fit_owl(&data, KernelSpec::Linear, 0.0, &prop).is_err());
        assert!(fit_owl(&data, KernelSpec::Gaussian { bandwidth: -1.0 }, 1.0, &prop).is_err());
        assert!(fit_owl_cv(&data, KernelSpec::Linear, &[], 5, &prop, |_| Ok(prop.clone())).is_err());
    }
}
