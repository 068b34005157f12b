//! The audit workflow on user data: fit (or load) the models, choose α on
//! the training file and report fairness and value on the target file.

use std::fs;
use std::path::Path;

use fairitr_core::data::{LabeledDataset, TargetDataset};
use fairitr_core::metrics::{estimate_value, FairnessReport, ValueRow};
use fairitr_core::nuisance::{KernelSpec, PropensityModel};
use fairitr_core::rng::RngSeed;
use fairitr_core::solver::AlphaSelection;
use fairitr_core::transport::{PointScores, TradeoffPolicy};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{CurveRecord, Summary};
use crate::pipeline::{fit_pipeline, FittedPipeline, PipelineConfig};
use crate::schema::{CsvSchema, TargetData};

const TAG_POLICY: u64 = 0x50_4F4C_4943_59;
const TAG_SELECT: u64 = 0x53_454C_4543_54;

const BUNDLE_FORMAT: &str = "fairitr-model";
const BUNDLE_VERSION: u32 = 1;

/// Fitted models with the column layout they expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub version: u32,
    pub covariates: Vec<String>,
    pub groups: Vec<String>,
    pub config: PipelineConfig,
    pub fitted: FittedPipeline,
}

impl ModelBundle {
    pub fn new(schema: &CsvSchema, groups: Vec<String>, config: PipelineConfig, fitted: FittedPipeline) -> Self {
        ModelBundle {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            covariates: schema.covariates.clone(),
            groups,
            config,
            fitted,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle: ModelBundle =
            serde_json::from_str(&text).map_err(|e| Error::input(path, format!("not a model file: {e}")))?;
        if bundle.format != BUNDLE_FORMAT || bundle.version != BUNDLE_VERSION {
            return Err(Error::input(
                path,
                format!("unsupported model format {} version {}", bundle.format, bundle.version),
            ));
        }
        Ok(bundle)
    }

    /// Rejects a bundle whose covariates differ from `schema`.
    pub fn check_schema(&self, schema: &CsvSchema) -> Result<()> {
        if self.covariates != schema.covariates {
            return Err(Error::Config(format!(
                "model expects covariates {:?} but the schema lists {:?}",
                self.covariates, schema.covariates
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub pipeline: PipelineConfig,
    pub rho: f64,
    pub alpha_grid: Vec<f64>,
    pub seed: RngSeed,
}

/// Scores of one target row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub row: usize,
    pub group: String,
    pub base: f64,
    pub fair: f64,
    pub effect: f64,
    pub tradeoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub groups: Vec<String>,
    pub kernel: KernelSpec,
    pub base_ridge: f64,
    pub sigma: f64,
    pub m: usize,
    pub rho: f64,
    pub alpha_hat: f64,
    /// Reports on the target rows; values are inverse-propensity estimates,
    /// null when the target file has no treatment or reward column.
    pub base: FairnessReport,
    pub fair: FairnessReport,
    pub tradeoff: FairnessReport,
    pub selection: AlphaSelection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditOutput {
    pub report: AuditReport,
    pub curves: Vec<CurveRecord>,
    pub scores: Vec<ScoreRow>,
}

/// Transport policy onto `target`, seeded the same way by every command.
pub fn target_policy(fitted: &FittedPipeline, target: &TargetDataset, seed: RngSeed) -> Result<TradeoffPolicy> {
    fitted.policy(target, 0.0, seed.derive(TAG_POLICY))
}

/// Scores every target row.
pub fn score_target(policy: &TradeoffPolicy, target: &TargetDataset) -> Result<Vec<PointScores>> {
    Ok(target.rows().iter().map(|u| policy.point_scores(&u.x, u.s)).collect::<fairitr_core::Result<Vec<_>>>()?)
}

struct Evaluator<'a> {
    groups: &'a [String],
    target: &'a TargetData,
    propensity: &'a PropensityModel,
    points: &'a [PointScores],
}

impl Evaluator<'_> {
    fn report(&self, score: impl Fn(&PointScores) -> f64) -> Result<FairnessReport> {
        let scores: Vec<f64> = self.points.iter().map(score).collect();
        let pairs: Vec<(f64, usize)> = scores.iter().zip(self.target.units.rows()).map(|(&v, u)| (v, u.s)).collect();
        let value = match &self.target.labeled {
            Some(data) => {
                let rows: Vec<ValueRow> = data
                    .rows()
                    .iter()
                    .zip(&scores)
                    .map(|(r, &score)| ValueRow {
                        score,
                        a: r.a,
                        r: r.r,
                        prob_treated: self.propensity.prob_treated(&r.x, r.s),
                    })
                    .collect();
                estimate_value(&rows)?
            }
            None => f64::NAN,
        };
        Ok(FairnessReport::compute(&pairs, self.groups, value)?)
    }
}

fn point(v: f64) -> Summary {
    Summary { mean: v, se: 0.0 }
}

/// Chooses α on `train` with the seed stream the audit uses.
pub fn select_on_train(
    fitted: &FittedPipeline,
    train: &LabeledDataset,
    rho: f64,
    config: &PipelineConfig,
    seed: RngSeed,
) -> Result<AlphaSelection> {
    fitted.select_alpha(train, rho, config, seed.derive(TAG_SELECT))
}

/// Runs the audit with already fitted models.
pub fn audit_fitted(
    train: &LabeledDataset,
    target: &TargetData,
    fitted: &FittedPipeline,
    config: &AuditConfig,
) -> Result<AuditOutput> {
    if !(0.0..=1.0).contains(&config.rho) {
        return Err(Error::Config(format!("rho {} not in [0, 1]", config.rho)));
    }
    if config.alpha_grid.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::Config("alpha grid values must be nonnegative".into()));
    }
    let groups = target.units.groups();
    if train.groups() != groups {
        return Err(Error::Config("training and target files use different group lists".into()));
    }
    let policy = target_policy(fitted, &target.units, config.seed)?;
    let points = score_target(&policy, &target.units)?;
    let selection = select_on_train(fitted, train, config.rho, &config.pipeline, config.seed)?;
    let alpha = selection.alpha_hat;
    let eval = Evaluator { groups, target, propensity: &fitted.propensity, points: &points };

    let tradeoff = |a: f64| move |p: &PointScores| p.tradeoff(a).unwrap_or(f64::NAN);
    let base = eval.report(|p| p.base)?;
    let fair = eval.report(|p| p.fair)?;
    let curves = config
        .alpha_grid
        .iter()
        .map(|&a| {
            let r = eval.report(tradeoff(a))?;
            Ok(CurveRecord {
                alpha: a,
                base_di: point(base.di),
                base_value: point(base.value),
                fair_di: point(fair.di),
                fair_value: point(fair.value),
                tradeoff_di: point(r.di),
                tradeoff_value: point(r.value),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores = points
        .iter()
        .zip(target.units.rows())
        .enumerate()
        .map(|(row, (p, u))| ScoreRow {
            row,
            group: groups[u.s].clone(),
            base: p.base,
            fair: p.fair,
            effect: p.effect,
            tradeoff: tradeoff(alpha)(p),
        })
        .collect();
    let report = AuditReport {
        groups: groups.to_vec(),
        kernel: fitted.kernel,
        base_ridge: fitted.base_ridge,
        sigma: fitted.sigma,
        m: fitted.m,
        rho: config.rho,
        alpha_hat: alpha,
        base,
        fair,
        tradeoff: eval.report(tradeoff(alpha))?,
        selection,
    };
    Ok(AuditOutput { report, curves, scores })
}

/// Fits the models on `train` and audits `target`.
pub fn audit(train: &LabeledDataset, target: &TargetData, config: &AuditConfig) -> Result<AuditOutput> {
    let fitted = fit_pipeline(train, &config.pipeline)?;
    audit_fitted(train, target, &fitted, config)
}

/// File-based audit; `model` reuses a saved bundle instead of refitting.
pub fn audit_csv(
    train_path: impl AsRef<Path>,
    target_path: impl AsRef<Path>,
    schema: &CsvSchema,
    config: &AuditConfig,
    model: Option<&ModelBundle>,
) -> Result<AuditOutput> {
    let groups = match model {
        Some(bundle) => {
            bundle.check_schema(schema)?;
            bundle.groups.clone()
        }
        None => schema.resolve_groups(&train_path)?,
    };
    let train = schema.read_labeled(&train_path, &groups)?;
    let target = schema.read_target(&target_path, &groups)?;
    match model {
        Some(bundle) => audit_fitted(&train, &target, &bundle.fitted, config),
        None => audit(&train, &target, config),
    }
}

pub fn scores_csv(rows: &[ScoreRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in rows {
        writer.serialize(r)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
