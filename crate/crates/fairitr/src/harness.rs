//! Replicated simulation studies: α curves and the ρ table.

use fairitr_core::data::{LabeledDataset, Scenario, TargetDataset, Treatment};
use fairitr_core::metrics::{estimate_di, ks_disparity};
use fairitr_core::rng::RngSeed;
use fairitr_core::solver::AlphaSelection;
use fairitr_core::transport::{PointScores, TradeoffPolicy};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{fit_pipeline, KernelChoice, PipelineConfig};

const TAG_REPLICATE: u64 = 0x52_4550_4C49_4341;

/// Mean and standard error over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Summary { mean, se }
    }
}

/// `0, step, 2·step, …, upper` (inclusive, rounded to avoid drift).
pub fn alpha_grid(step: f64, upper: f64) -> Vec<f64> {
    let k = (upper / step).round() as usize;
    (0..=k).map(|j| j as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n_train: usize,
    pub n_test: usize,
    pub replicates: usize,
    pub pipeline: PipelineConfig,
    /// α values of the curves, ascending.
    pub alpha_grid: Vec<f64>,
    /// Fairness levels for α selection.
    pub rhos: Vec<f64>,
    pub seed: RngSeed,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 500 training and test rows, 20 replicates,
    /// α ∈ {0, 0.01, …, 1}, ρ ∈ {1, 0.8, 0.5}; a linear kernel for the
    /// first experiment and Gaussian kernels elsewhere.
    pub fn new(scenario: Scenario, seed: RngSeed) -> Self {
        let kernel = match scenario {
            Scenario::Experiment(1) => KernelChoice::Linear,
            _ => KernelChoice::Gaussian { bandwidth: None },
        };
        ExperimentConfig {
            scenario,
            n_train: 500,
            n_test: 500,
            replicates: 20,
            pipeline: PipelineConfig { kernel, ..PipelineConfig::default() },
            alpha_grid: alpha_grid(0.01, 1.0),
            rhos: vec![1.0, 0.8, 0.5],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.n_train < 20 || self.n_test < 2 {
            return Err(Error::Config("need at least 20 training and 2 test rows".into()));
        }
        if self.alpha_grid.is_empty()
            || self.alpha_grid.iter().any(|a| !(*a >= 0.0 && a.is_finite()))
            || self.alpha_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config("alpha grid must be nonempty, nonnegative and strictly ascending".into()));
        }
        if let Some(r) = self.rhos.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Config(format!("rho {r} not in [0, 1]")));
        }
        Ok(())
    }
}

/// Disparate impact and value of one scored rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleMetrics {
    pub di: f64,
    pub value: f64,
}

/// α selected at one ρ and its test performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub rho: f64,
    pub selection: AlphaSelection,
    pub test: RuleMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub base: RuleMetrics,
    pub fair: RuleMetrics,
    /// One entry per α of the grid.
    pub tradeoff: Vec<RuleMetrics>,
    pub base_ks: f64,
    pub fair_ks: f64,
    pub base_ridge: f64,
    pub sigma: f64,
    pub selections: Vec<SelectionOutcome>,
}

/// Test-set scores of a policy with the known mean reward of the scenario.
struct TestScores {
    scores: Vec<PointScores>,
    groups: Vec<usize>,
    n_groups: usize,
    /// Mean reward of treating and of not treating each row.
    rewards: Vec<(f64, f64)>,
}

impl TestScores {
    fn new(policy: &TradeoffPolicy, scenario: Scenario, test: &LabeledDataset) -> Result<Self> {
        let scores =
            test.rows().iter().map(|r| policy.point_scores(&r.x, r.s)).collect::<fairitr_core::Result<Vec<_>>>()?;
        let rewards = test
            .rows()
            .iter()
            .map(|r| {
                (
                    scenario.mean_reward(&r.x, r.s, Treatment::Treated),
                    scenario.mean_reward(&r.x, r.s, Treatment::Control),
                )
            })
            .collect();
        Ok(TestScores {
            scores,
            groups: test.rows().iter().map(|r| r.s).collect(),
            n_groups: test.groups().len(),
            rewards,
        })
    }

    /// Empirical DI and the mean noise-free reward of following `sgn(score)`.
    fn metrics(&self, score: impl Fn(&PointScores) -> Result<f64>) -> Result<(RuleMetrics, Vec<(f64, usize)>)> {
        let mut pairs = Vec::with_capacity(self.scores.len());
        let mut total = 0.0;
        for ((p, &s), &(treated, control)) in self.scores.iter().zip(&self.groups).zip(&self.rewards) {
            let u = score(p)?;
            total += match Treatment::from_score(u) {
                Treatment::Treated => treated,
                Treatment::Control => control,
            };
            pairs.push((u, s));
        }
        let di = estimate_di(&pairs, self.n_groups)?.value;
        Ok((RuleMetrics { di, value: total / self.scores.len() as f64 }, pairs))
    }
}

/// Seeds of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicateSeeds {
    pub train: RngSeed,
    pub test: RngSeed,
    /// Transport target and evaluation jitter of the test-set policy.
    pub policy: RngSeed,
    selection: RngSeed,
}

impl ReplicateSeeds {
    pub fn new(master: RngSeed, replicate: usize) -> Self {
        let seed = master.derive(TAG_REPLICATE).derive(replicate as u64);
        ReplicateSeeds {
            train: seed.derive(1),
            test: seed.derive(2),
            policy: seed.derive(3),
            selection: seed.derive(4),
        }
    }

    /// Seed of the α selection at the `k`-th ρ.
    pub fn selection(&self, k: usize) -> RngSeed {
        self.selection.derive(k as u64)
    }
}

/// Draws fresh training and test sets, fits the pipeline on the training
/// set, and evaluates the base, fair and trade-off rules on the test set,
/// whose covariates also serve as the transport target.
pub fn run_replicate(config: &ExperimentConfig, replicate: usize) -> Result<ReplicateResult> {
    let wrap = |e: Error| Error::Replicate { replicate, source: Box::new(e) };
    run_replicate_inner(config, replicate).map_err(wrap)
}

fn run_replicate_inner(config: &ExperimentConfig, replicate: usize) -> Result<ReplicateResult> {
    let seeds = ReplicateSeeds::new(config.seed, replicate);
    let train = config.scenario.generate(config.n_train, seeds.train)?;
    let test = config.scenario.generate(config.n_test, seeds.test)?;
    let fitted = fit_pipeline(&train, &config.pipeline)?;
    let target: TargetDataset = test.to_target();
    let policy = fitted.policy(&target, 0.0, seeds.policy)?;
    let scored = TestScores::new(&policy, config.scenario, &test)?;

    let (base, base_pairs) = scored.metrics(|p| Ok(p.base))?;
    let (fair, fair_pairs) = scored.metrics(|p| Ok(p.fair))?;
    let tradeoff =
        config.alpha_grid.iter().map(|&a| Ok(scored.metrics(|p| Ok(p.tradeoff(a)?))?.0)).collect::<Result<Vec<_>>>()?;
    let base_ks = ks_disparity(&base_pairs, scored.n_groups)?;
    let fair_ks = ks_disparity(&fair_pairs, scored.n_groups)?;

    let selections = config
        .rhos
        .iter()
        .enumerate()
        .map(|(k, &rho)| {
            let selection = fitted.select_alpha(&train, rho, &config.pipeline, seeds.selection(k))?;
            let alpha = selection.alpha_hat;
            let test = scored.metrics(|p| Ok(p.tradeoff(alpha)?))?.0;
            Ok(SelectionOutcome { rho, selection, test })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ReplicateResult {
        replicate,
        base,
        fair,
        tradeoff,
        base_ks,
        fair_ks,
        base_ridge: fitted.base_ridge,
        sigma: fitted.sigma,
        selections,
    })
}

/// Curve point averaged over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub alpha: f64,
    pub base_di: Summary,
    pub base_value: Summary,
    pub fair_di: Summary,
    pub fair_value: Summary,
    pub tradeoff_di: Summary,
    pub tradeoff_value: Summary,
}

/// One row of the ρ table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub scenario: Scenario,
    pub rho: f64,
    pub alpha_hat: Summary,
    pub di: Summary,
    pub value: Summary,
    /// Replicates whose selection found a feasible α.
    pub feasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub config: ExperimentConfig,
    pub curves: Vec<CurveRecord>,
    pub table1: Vec<Table1Row>,
    pub replicates: Vec<ReplicateResult>,
}

fn summarize(results: &[ReplicateResult], f: impl Fn(&ReplicateResult) -> f64) -> Summary {
    Summary::of(&results.iter().map(f).collect::<Vec<_>>())
}

pub fn curve_records(alphas: &[f64], results: &[ReplicateResult]) -> Vec<CurveRecord> {
    alphas
        .iter()
        .enumerate()
        .map(|(j, &alpha)| CurveRecord {
            alpha,
            base_di: summarize(results, |r| r.base.di),
            base_value: summarize(results, |r| r.base.value),
            fair_di: summarize(results, |r| r.fair.di),
            fair_value: summarize(results, |r| r.fair.value),
            tradeoff_di: summarize(results, |r| r.tradeoff[j].di),
            tradeoff_value: summarize(results, |r| r.tradeoff[j].value),
        })
        .collect()
}

pub fn table1_rows(scenario: Scenario, rhos: &[f64], results: &[ReplicateResult]) -> Vec<Table1Row> {
    rhos.iter()
        .enumerate()
        .map(|(k, &rho)| Table1Row {
            scenario,
            rho,
            alpha_hat: summarize(results, |r| r.selections[k].selection.alpha_hat),
            di: summarize(results, |r| r.selections[k].test.di),
            value: summarize(results, |r| r.selections[k].test.value),
            feasible: results.iter().filter(|r| r.selections[k].selection.feasible).count(),
        })
        .collect()
}

/// Runs every replicate (in parallel) and aggregates curves and the ρ table.
pub fn run_simulation(config: &ExperimentConfig) -> Result<SimulationOutput> {
    config.validate()?;
    let replicates =
        (0..config.replicates).into_par_iter().map(|r| run_replicate(config, r)).collect::<Result<Vec<_>>>()?;
    Ok(SimulationOutput {
        config: config.clone(),
        curves: curve_records(&config.alpha_grid, &replicates),
        table1: table1_rows(config.scenario, &config.rhos, &replicates),
        replicates,
    })
}

/// The ρ table alone.
pub fn run_table1(config: &ExperimentConfig, rhos: &[f64]) -> Result<Vec<Table1Row>> {
    let config = ExperimentConfig { rhos: rhos.to_vec(), ..config.clone() };
    Ok(run_simulation(&config)?.table1)
}

pub fn scenario_label(scenario: Scenario) -> String {
    match scenario {
        Scenario::Experiment(id) => format!("experiment{id}"),
        Scenario::Motivating => "motivating".into(),
        Scenario::Lookalike => "lookalike".into(),
    }
}

pub fn curves_csv(records: &[CurveRecord]) -> String {
    let mut out = String::from(
        "alpha,base_di,base_di_se,base_value,base_value_se,fair_di,fair_di_se,fair_value,fair_value_se,\
         tradeoff_di,tradeoff_di_se,tradeoff_value,tradeoff_value_se\n",
    );
    for r in records {
        let cells = [r.base_di, r.base_value, r.fair_di, r.fair_value, r.tradeoff_di, r.tradeoff_value];
        out.push_str(&r.alpha.to_string());
        for c in cells {
            out.push_str(&format!(",{},{}", c.mean, c.se));
        }
        out.push('\n');
    }
    out
}

pub fn table1_csv(rows: &[Table1Row]) -> String {
    let mut out = String::from("scenario,rho,alpha_hat,alpha_hat_se,di,di_se,value,value_se,feasible\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            scenario_label(r.scenario),
            r.rho,
            r.alpha_hat.mean,
            r.alpha_hat.se,
            r.di.mean,
            r.di.se,
            r.value.mean,
            r.value.se,
            r.feasible
        ));
    }
    out
}
