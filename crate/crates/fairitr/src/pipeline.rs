//! Fitting the nuisance models, the base rule and the effect model, and
//! assembling trade-off policies from them.

use std::fmt;
use std::str::FromStr;

use fairitr_core::cate::{fit_rlearner_with, CateModel, RLearnerOptions};
use fairitr_core::data::{split, LabeledDataset, TargetDataset};
use fairitr_core::nuisance::{
    fit_owl, fit_owl_cv, fit_propensity, fit_qlearning, median_heuristic_bandwidth, DecisionModel, FeatureScaler,
    KernelSpec, PropensityModel, DEFAULT_RIDGE_GRID,
};
use fairitr_core::rng::RngSeed;
use fairitr_core::solver::{select_alpha_with, AlphaSelection, IsresConfig, SurrogateGrid};
use fairitr_core::transport::{build_group_distributions, TradeoffPolicy};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAG_DISTRIBUTIONS: u64 = 0x44_4953_5452;
const TAG_EVALUATION: u64 = 0x45_5641_4C;
const TAG_SELECTION: u64 = 0x53_454C_4543_54;
const TAG_HOLDOUT: u64 = 0x48_4F4C_444F_5554;

/// Kernel of the base learner and the effect model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelChoice {
    Linear,
    /// Gaussian kernel; the bandwidth defaults to the median heuristic.
    Gaussian {
        bandwidth: Option<f64>,
    },
}

/// Penalty of the base learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgeChoice {
    /// Five-fold cross-validated value over `{1e-3, 1e-2, 1e-1, 1, 10}`.
    CrossValidated,
    Fixed(f64),
}

/// Learner producing the base score `f̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLearner {
    Owl,
    QLearning,
}

/// Half-width of the transport jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRule {
    /// `c · n^{-1/2} · sd(f̂ on the training rows)`
    Scaled(f64),
    Fixed(f64),
}

impl SigmaRule {
    pub fn resolve(self, train_scores: &[f64]) -> f64 {
        match self {
            SigmaRule::Fixed(s) => s,
            SigmaRule::Scaled(c) => {
                let n = train_scores.len() as f64;
                let mean = train_scores.iter().sum::<f64>() / n;
                let var = train_scores.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
                c * var.sqrt() / n.sqrt()
            }
        }
    }
}

impl Default for SigmaRule {
    fn default() -> Self {
        SigmaRule::Scaled(0.5)
    }
}

/// Accepts `auto`, `scaled:<c>`, `fixed:<sigma>` and `none`.
impl FromStr for SigmaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad =
            || Error::Config(format!("invalid sigma rule '{s}'; expected auto, none, scaled:<c> or fixed:<sigma>"));
        let number = |v: &str| v.parse::<f64>().ok().filter(|x| x.is_finite() && *x >= 0.0).ok_or_else(bad);
        match s.split_once(':') {
            None if s == "auto" => Ok(SigmaRule::default()),
            None if s == "none" => Ok(SigmaRule::Fixed(0.0)),
            Some(("scaled", v)) => Ok(SigmaRule::Scaled(number(v)?)),
            Some(("fixed", v)) => Ok(SigmaRule::Fixed(number(v)?)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for SigmaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaRule::Scaled(c) => write!(f, "scaled:{c}"),
            SigmaRule::Fixed(s) => write!(f, "fixed:{s}"),
        }
    }
}

/// Every modelling choice of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub kernel: KernelChoice,
    pub base_learner: BaseLearner,
    pub ridge: RidgeChoice,
    pub cv_folds: usize,
    /// Penalty of the effect head.
    pub cate_ridge: f64,
    pub cate_folds: usize,
    pub propensity_ridge: f64,
    pub tau_floor: f64,
    pub sigma_rule: SigmaRule,
    /// Evaluation jitters per transported score.
    pub m: usize,
    pub grid: SurrogateGrid,
    pub alpha_upper: f64,
    pub max_evaluations: usize,
    /// Share of training rows held out to measure `V̂` during α selection;
    /// `None` measures it on the optimization rows themselves.
    pub holdout: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kernel: KernelChoice::Linear,
            base_learner: BaseLearner::Owl,
            ridge: RidgeChoice::CrossValidated,
            cv_folds: 5,
            cate_ridge: 1e-2,
            cate_folds: 5,
            propensity_ridge: 1e-3,
            tau_floor: 0.01,
            sigma_rule: SigmaRule::default(),
            m: 20,
            grid: SurrogateGrid::Coarse,
            alpha_upper: 10.0,
            max_evaluations: 2000,
            holdout: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if let KernelChoice::Gaussian { bandwidth: Some(h) } = self.kernel {
            if !positive(h) {
                return Err(Error::Config(format!("bandwidth must be positive, got {h}")));
            }
        }
        if let RidgeChoice::Fixed(r) = self.ridge {
            if !positive(r) {
                return Err(Error::Config(format!("ridge must be positive, got {r}")));
            }
        }
        if self.cv_folds < 2 || self.cate_folds < 2 {
            return Err(Error::Config("fold counts must be at least 2".into()));
        }
        if !positive(self.cate_ridge) || !(self.propensity_ridge >= 0.0) {
            return Err(Error::Config("penalties must be positive".into()));
        }
        if !(self.tau_floor > 0.0 && self.tau_floor < 0.5) {
            return Err(Error::Config(format!("propensity floor {} not in (0, 0.5)", self.tau_floor)));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !positive(self.alpha_upper) {
            return Err(Error::Config("alpha upper bound must be positive".into()));
        }
        if let Some(f) = self.holdout {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("holdout share {f} not in (0, 1)")));
            }
        }
        Ok(())
    }

    fn resolve_kernel(&self, train: &LabeledDataset) -> KernelSpec {
        match self.kernel {
            KernelChoice::Linear => KernelSpec::Linear,
            KernelChoice::Gaussian { bandwidth: Some(h) } => KernelSpec::Gaussian { bandwidth: h },
            KernelChoice::Gaussian { bandwidth: None } => {
                let scaler =
                    FeatureScaler::fit(train.rows().iter().map(|r| r.x.as_slice()), train.d(), train.groups().len());
                let features: Vec<Vec<f64>> = train.rows().iter().map(|r| scaler.transform(&r.x, r.s)).collect();
                KernelSpec::Gaussian { bandwidth: median_heuristic_bandwidth(&features) }
            }
        }
    }
}

/// Fitted models shared by every policy built from one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub kernel: KernelSpec,
    pub propensity: PropensityModel,
    pub base: DecisionModel,
    /// Penalty the base learner was fitted with.
    pub base_ridge: f64,
    pub cate: CateModel,
    pub sigma: f64,
    pub m: usize,
}

/// Fits propensity, base rule and effect model on `train`.
pub fn fit_pipeline(train: &LabeledDataset, config: &PipelineConfig) -> Result<FittedPipeline> {
    config.validate()?;
    let kernel = config.resolve_kernel(train);
    let propensity = fit_propensity(train, config.propensity_ridge, config.tau_floor)?;
    let (base, base_ridge) = match (config.base_learner, config.ridge) {
        (BaseLearner::Owl, RidgeChoice::CrossValidated) => {
            fit_owl_cv(train, kernel, &DEFAULT_RIDGE_GRID, config.cv_folds, &propensity, |rows| {
                fit_propensity(rows, config.propensity_ridge, config.tau_floor)
            })?
        }
        (BaseLearner::Owl, RidgeChoice::Fixed(r)) => (fit_owl(train, kernel, r, &propensity)?, r),
        (BaseLearner::QLearning, RidgeChoice::Fixed(r)) => (fit_qlearning(train, kernel, r)?, r),
        (BaseLearner::QLearning, RidgeChoice::CrossValidated) => (fit_qlearning(train, kernel, 1e-2)?, 1e-2),
    };
    let mut options = RLearnerOptions::new(kernel, config.cate_ridge, config.cate_folds);
    options.propensity_ridge = config.propensity_ridge;
    options.tau_floor = config.tau_floor;
    let cate = fit_rlearner_with(train, &options)?;
    let train_scores = train.rows().iter().map(|r| base.score(&r.x, r.s)).collect::<fairitr_core::Result<Vec<_>>>()?;
    let sigma = config.sigma_rule.resolve(&train_scores);
    Ok(FittedPipeline { kernel, propensity, base, base_ridge, cate, sigma, m: config.m })
}

impl FittedPipeline {
    /// Trade-off policy transporting onto the score distributions of `target`.
    pub fn policy(&self, target: &TargetDataset, alpha: f64, seed: RngSeed) -> Result<TradeoffPolicy> {
        let dists = build_group_distributions(&self.base, target, self.sigma, seed.derive(TAG_DISTRIBUTIONS))?;
        Ok(TradeoffPolicy::new(
            self.base.clone(),
            dists,
            self.cate.clone(),
            alpha,
            self.m,
            seed.derive(TAG_EVALUATION),
        )?)
    }

    /// Chooses α on `train`, with the group distributions of `train` as the
    /// transport target.
    pub fn select_alpha(
        &self,
        train: &LabeledDataset,
        rho: f64,
        config: &PipelineConfig,
        seed: RngSeed,
    ) -> Result<AlphaSelection> {
        let policy = self.policy(&train.to_target(), 0.0, seed)?;
        let mut isres = IsresConfig::new(vec![0.0], vec![config.alpha_upper], seed.derive(TAG_SELECTION));
        isres.max_evaluations = config.max_evaluations;
        let grid = config.grid.cells();
        let selection = match config.holdout {
            None => select_alpha_with(train, train, &policy, &self.propensity, rho, &grid, &isres)?,
            Some(share) => {
                let (value_rows, fit_rows) = split(train, share, seed.derive(TAG_HOLDOUT))?;
                select_alpha_with(&fit_rows, &value_rows, &policy, &self.propensity, rho, &grid, &isres)?
            }
        };
        Ok(selection)
    }
}
