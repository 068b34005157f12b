//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairitr_core::data::{split, Scenario};
use fairitr_core::rng::RngSeed;
use fairitr_core::solver::SurrogateGrid;

use crate::audit::{audit_csv, score_target, scores_csv, target_policy, AuditConfig, ModelBundle};
use crate::error::{Error, Result};
use crate::harness::{alpha_grid, curves_csv, run_simulation, table1_csv, ExperimentConfig};
use crate::pipeline::{fit_pipeline, BaseLearner, KernelChoice, PipelineConfig, RidgeChoice, SigmaRule};
use crate::plot::curves_svg;
use crate::schema::{CsvSchema, TreatmentColumn};

#[derive(Debug, Parser)]
#[command(name = "fairitr", version, about = "Fair individualized treatment rules via optimal transport")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replicated simulation: writes curves.csv, table1.csv, plot.svg and report.json.
    Simulate(SimulateArgs),
    /// Fits the models on a training file: writes model.json and report.json.
    Fit(FitArgs),
    /// Full audit of a target file: writes report.json, curves.csv, scores.csv and plot.svg.
    Audit(AuditArgs),
    /// Chooses α on a training file: writes selection.json.
    SelectAlpha(SelectArgs),
    /// Writes a synthetic dataset as train.csv, target.csv and schema.json.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelArg {
    Linear,
    Gaussian,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GridArg {
    Paper,
    Coarse,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LearnerArg {
    Owl,
    QLearning,
}

/// Modelling flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Linear for file commands; per experiment for simulate when omitted.
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Gaussian bandwidth; median heuristic when omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Base-learner penalty; cross-validated when omitted.
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long, value_enum, default_value = "owl")]
    pub base_learner: LearnerArg,
    /// auto, none, scaled:<c> or fixed:<sigma>.
    #[arg(long, default_value = "auto")]
    pub sigma_rule: String,
    /// Evaluation jitters per transported score.
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long, value_enum, default_value = "coarse")]
    pub grid: GridArg,
    /// Upper bound of the α search.
    #[arg(long, default_value_t = 10.0)]
    pub alpha_upper: f64,
    /// Share of training rows held out to measure value during α selection.
    #[arg(long)]
    pub holdout: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ModelArgs {
    fn pipeline(&self) -> Result<PipelineConfig> {
        self.pipeline_with(KernelChoice::Linear)
    }

    fn pipeline_with(&self, default_kernel: KernelChoice) -> Result<PipelineConfig> {
        let config = PipelineConfig {
            kernel: match self.kernel {
                None if self.bandwidth.is_some() => match default_kernel {
                    KernelChoice::Gaussian { .. } => KernelChoice::Gaussian { bandwidth: self.bandwidth },
                    KernelChoice::Linear => return Err(Error::Config("--bandwidth needs --kernel gaussian".into())),
                },
                None => default_kernel,
                Some(KernelArg::Linear) => {
                    if self.bandwidth.is_some() {
                        return Err(Error::Config("--bandwidth needs --kernel gaussian".into()));
                    }
                    KernelChoice::Linear
                }
                Some(KernelArg::Gaussian) => KernelChoice::Gaussian { bandwidth: self.bandwidth },
            },
            base_learner: match self.base_learner {
                LearnerArg::Owl => BaseLearner::Owl,
                LearnerArg::QLearning => BaseLearner::QLearning,
            },
            ridge: self.ridge.map_or(RidgeChoice::CrossValidated, RidgeChoice::Fixed),
            sigma_rule: self.sigma_rule.parse::<SigmaRule>()?,
            m: self.m,
            grid: match self.grid {
                GridArg::Paper => SurrogateGrid::Paper,
                GridArg::Coarse => SurrogateGrid::Coarse,
            },
            alpha_upper: self.alpha_upper,
            holdout: self.holdout,
            ..PipelineConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// 1, 2, 3, 4, motivating or lookalike.
    #[arg(long)]
    pub experiment: String,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, default_value_t = 500)]
    pub n_train: usize,
    #[arg(long, default_value_t = 500)]
    pub n_test: usize,
    /// Comma-separated fairness levels.
    #[arg(long, default_value = "1.0,0.8,0.5")]
    pub rho: String,
    /// `start:step:end` or a comma-separated list.
    #[arg(long, default_value = "0:0.01:1")]
    pub alpha_grid: String,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Rows whose score distributions the report describes; the training file when omitted.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Saved model.json to reuse instead of refitting.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub rho: f64,
    #[arg(long, default_value = "0:0.01:1")]
    pub alpha_grid: String,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub rho: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// 1, 2, 3, 4, motivating or lookalike.
    #[arg(long)]
    pub experiment: String,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Share of rows written to train.csv.
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Parses `1`–`4`, `motivating` or `lookalike`.
pub fn parse_scenario(s: &str) -> Result<Scenario> {
    match s {
        "motivating" => Ok(Scenario::Motivating),
        "lookalike" => Ok(Scenario::Lookalike),
        _ => s.parse::<u8>().ok().and_then(|id| Scenario::experiment(id).ok()).ok_or_else(|| {
            Error::Config(format!("unknown experiment '{s}'; expected 1, 2, 3, 4, motivating or lookalike"))
        }),
    }
}

fn parse_number(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Config(format!("invalid {what} '{s}'")))
}

/// Parses `start:step:end` or a comma-separated ascending list.
pub fn parse_alpha_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [start, step, end] => {
            let (start, step, end) =
                (parse_number(start, "alpha")?, parse_number(step, "alpha step")?, parse_number(end, "alpha")?);
            if !(step > 0.0 && start >= 0.0 && end >= start) {
                return Err(Error::Config(format!("invalid alpha range '{s}'")));
            }
            alpha_grid(step, end - start).into_iter().map(|a| start + a).collect()
        }
        [list] => list.split(',').map(|v| parse_number(v, "alpha")).collect::<Result<Vec<_>>>()?,
        _ => return Err(Error::Config(format!("invalid alpha grid '{s}'"))),
    };
    if grid.iter().any(|a| !(*a >= 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("alpha grid '{s}' must be nonnegative and ascending")));
    }
    Ok(grid)
}

fn parse_rhos(s: &str) -> Result<Vec<f64>> {
    let rhos = s.split(',').map(|v| parse_number(v, "rho")).collect::<Result<Vec<_>>>()?;
    check_rhos(&rhos)?;
    Ok(rhos)
}

fn check_rhos(rhos: &[f64]) -> Result<()> {
    match rhos.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        Some(r) => Err(Error::Config(format!("rho {r} not in [0, 1]"))),
        None => Ok(()),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn json(value: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn load_schema(path: &Path) -> Result<CsvSchema> {
    if !path.exists() {
        return Err(Error::Config(format!("schema file {} does not exist", path.display())));
    }
    CsvSchema::load(path)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut config = ExperimentConfig::new(parse_scenario(&args.experiment)?, RngSeed(args.model.seed));
    config.pipeline = args.model.pipeline_with(config.pipeline.kernel)?;
    config.replicates = args.replicates;
    config.n_train = args.n_train;
    config.n_test = args.n_test;
    config.rhos = parse_rhos(&args.rho)?;
    config.alpha_grid = parse_alpha_grid(&args.alpha_grid)?;
    config.validate()?;
    let output = run_simulation(&config)?;
    prepare_out(&args.out)?;
    write(&args.out, "curves.csv", &curves_csv(&output.curves))?;
    write(&args.out, "table1.csv", &table1_csv(&output.table1))?;
    write(&args.out, "plot.svg", &curves_svg(&output.curves))?;
    write(&args.out, "report.json", &json(&output)?)
}

fn fit(args: &FitArgs) -> Result<()> {
    let schema = load_schema(&args.schema)?;
    let config = args.model.pipeline()?;
    let seed = RngSeed(args.model.seed);
    let groups = schema.resolve_groups(&args.train)?;
    let train = schema.read_labeled(&args.train, &groups)?;
    let target = schema.read_target(args.target.as_ref().unwrap_or(&args.train), &groups)?;
    let fitted = fit_pipeline(&train, &config)?;
    let policy = target_policy(&fitted, &target.units, seed)?;
    let points = score_target(&policy, &target.units)?;
    let pairs = |f: fn(&fairitr_core::transport::PointScores) -> f64| -> Vec<(f64, usize)> {
        points.iter().zip(target.units.rows()).map(|(p, u)| (f(p), u.s)).collect()
    };
    let value = |scores: &[(f64, usize)]| -> Result<f64> {
        match &target.labeled {
            Some(data) => {
                let rows: Vec<_> = data
                    .rows()
                    .iter()
                    .zip(scores)
                    .map(|(r, &(score, _))| fairitr_core::metrics::ValueRow {
                        score,
                        a: r.a,
                        r: r.r,
                        prob_treated: fitted.propensity.prob_treated(&r.x, r.s),
                    })
                    .collect();
                Ok(fairitr_core::metrics::estimate_value(&rows)?)
            }
            None => Ok(f64::NAN),
        }
    };
    let base = pairs(|p| p.base);
    let fair = pairs(|p| p.fair);
    let report = serde_json::json!({
        "groups": groups,
        "base": fairitr_core::metrics::FairnessReport::compute(&base, &groups, value(&base)?)?,
        "fair": fairitr_core::metrics::FairnessReport::compute(&fair, &groups, value(&fair)?)?,
    });
    let bundle = ModelBundle::new(&schema, groups, config, fitted);
    prepare_out(&args.out)?;
    write(&args.out, "model.json", &bundle.to_json()?)?;
    write(&args.out, "report.json", &json(&report)?)
}

fn load_model(path: Option<&PathBuf>) -> Result<Option<ModelBundle>> {
    path.map(ModelBundle::load).transpose()
}

fn audit(args: &AuditArgs) -> Result<()> {
    let schema = load_schema(&args.schema)?;
    check_rhos(&[args.rho])?;
    let config = AuditConfig {
        pipeline: args.model.pipeline()?,
        rho: args.rho,
        alpha_grid: parse_alpha_grid(&args.alpha_grid)?,
        seed: RngSeed(args.model.seed),
    };
    let bundle = load_model(args.model_file.as_ref())?;
    let output = audit_csv(&args.train, &args.target, &schema, &config, bundle.as_ref())?;
    prepare_out(&args.out)?;
    write(&args.out, "report.json", &json(&output.report)?)?;
    write(&args.out, "curves.csv", &curves_csv(&output.curves))?;
    write(&args.out, "scores.csv", &scores_csv(&output.scores)?)?;
    write(&args.out, "plot.svg", &curves_svg(&output.curves))
}

fn select_alpha(args: &SelectArgs) -> Result<()> {
    let schema = load_schema(&args.schema)?;
    check_rhos(&[args.rho])?;
    let config = args.model.pipeline()?;
    let bundle = load_model(args.model_file.as_ref())?;
    let groups = match &bundle {
        Some(b) => {
            b.check_schema(&schema)?;
            b.groups.clone()
        }
        None => schema.resolve_groups(&args.train)?,
    };
    let train = schema.read_labeled(&args.train, &groups)?;
    let fitted = match bundle {
        Some(b) => b.fitted,
        None => fit_pipeline(&train, &config)?,
    };
    let selection = crate::audit::select_on_train(&fitted, &train, args.rho, &config, RngSeed(args.model.seed))?;
    prepare_out(&args.out)?;
    write(&args.out, "selection.json", &json(&selection)?)
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let scenario = parse_scenario(&args.experiment)?;
    if !(args.split > 0.0 && args.split < 1.0) {
        return Err(Error::Config(format!("split {} not in (0, 1)", args.split)));
    }
    let seed = RngSeed(args.seed);
    let data = scenario.generate(args.n, seed)?;
    let (train, target) = split(&data, args.split, seed)?;
    let schema = CsvSchema {
        covariates: (1..=scenario.dimension()).map(|j| format!("x{j}")).collect(),
        group: "s".into(),
        treatment: TreatmentColumn { column: "a".into(), positive: "1".into(), negative: "-1".into() },
        reward: "r".into(),
        groups: Some(scenario.groups()),
        delimiter: None,
    };
    prepare_out(&args.out)?;
    schema.write_labeled(args.out.join("train.csv"), &train)?;
    schema.write_labeled(args.out.join("target.csv"), &target)?;
    write(&args.out, "schema.json", &json(&schema)?)
}

/// Executes a parsed command.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Audit(a) => audit(a),
        Command::SelectAlpha(a) => select_alpha(a),
        Command::Generate(a) => generate(a),
    }
}

/// Parses the process arguments and runs; 2 on configuration errors, 1 on
/// runtime errors.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
