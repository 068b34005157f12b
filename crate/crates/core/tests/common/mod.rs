#![allow(dead_code)]

use fairitr_core::cate::{fit_rlearner, CateModel};
use fairitr_core::data::{generate_experiment, LabeledDataset};
use fairitr_core::nuisance::{fit_owl, fit_propensity, DecisionModel, KernelSpec, PropensityModel};
use fairitr_core::rng::RngSeed;

pub struct Fitted {
    pub train: LabeledDataset,
    pub prop: PropensityModel,
    pub base: DecisionModel,
    pub cate: CateModel,
}

/// Linear-kernel fit on Experiment 1 with the default nuisance settings.
pub fn fit_experiment_one(n: usize, seed: u64) -> Fitted {
    let train = generate_experiment(1, n, RngSeed(seed)).unwrap();
    let prop = fit_propensity(&train, 1e-3, 0.01).unwrap();
    let base = fit_owl(&train, KernelSpec::Linear, 1e-2, &prop).unwrap();
    let cate = fit_rlearner(&train, KernelSpec::Linear, 1e-2, 5).unwrap();
    Fitted { train, prop, base, cate }
}

/// `0.5·n^{-1/2}·sd` of the training scores.
pub fn default_sigma(base: &DecisionModel, train: &LabeledDataset) -> f64 {
    let scores: Vec<f64> = train.rows().iter().map(|r| base.score(&r.x, r.s).unwrap()).collect();
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    0.5 * var.sqrt() / n.sqrt()
}
