//! Command-line surface. Each command reads its inputs fully, computes, and
//! only then writes its outputs.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use fmahal::classify::{
    default_alpha_grid, evaluate_classifier, fit_classifier, fit_cv_classifier, CvProtocol,
    Predict, RuleMode,
};
use fmahal::distribution::WeightedChiSq;
use fmahal::mahalanobis::MahalanobisModel;
use fmahal::outliers::{
    boxplot_config, detect_outliers, fit_model, functional_boxplot, CovMode, DetectionConfig,
};
use fmahal::simulate::{
    brownian_pair, contamination_model, gp_sample, scenario_sample, Case, ContaminationModel,
    KernelSpec, Scenario, ScenarioSpec,
};
use fmahal::{Curve, Grid};

use crate::bench::{run_bench, BenchConfig, Experiment};
use crate::error::{CliError, CliResult};
use crate::io::{
    curves_to_csv, format_value, read_curves, write_all_atomic, write_atomic, CurveTable,
};
use crate::svg::render_boxplot;

#[derive(Debug, Parser)]
#[command(
    name = "fmahal",
    version,
    about = "Regularized Mahalanobis distance for functional data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate curves and write them as CSV
    Simulate(SimulateArgs),
    /// Fit mean, covariance eigensystem and α; writes the model as JSON
    Fit(FitArgs),
    /// Distances, depths and tail probabilities of curves under a fitted model
    Dist(DistArgs),
    /// Flag outlying curves
    Outliers(OutlierArgs),
    /// Functional boxplot as SVG plus a JSON summary
    Boxplot(BoxplotArgs),
    /// Train a two-class rule and predict test curves
    Classify(ClassifyArgs),
    /// Run a simulation benchmark
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SimKind {
    Brownian,
    Bridge,
    Ou,
    Model1,
    Model2,
    Model3,
    BmBridge,
    ScenarioA,
    ScenarioB,
    ScenarioC,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CaseArg {
    Same,
    Diff,
}

impl From<CaseArg> for Case {
    fn from(c: CaseArg) -> Self {
        match c {
            CaseArg::Same => Case::Same,
            CaseArg::Diff => Case::Diff,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CovArg {
    Empirical,
    Mcd,
}

impl From<CovArg> for CovMode {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Empirical => CovMode::Empirical,
            CovArg::Mcd => CovMode::Mcd,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Homoscedastic,
    Heteroscedastic,
}

impl From<RuleArg> for RuleMode {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Homoscedastic => RuleMode::Homoscedastic,
            RuleArg::Heteroscedastic => RuleMode::Heteroscedastic,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub kind: SimKind,
    /// Number of curves (per class for two-class kinds)
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// Contamination rate for model1..model3
    #[arg(long, default_value_t = 0.1)]
    pub contamination: f64,
    /// Observation cut point for bm-bridge
    #[arg(long, default_value_t = 1.0)]
    pub cut: f64,
    #[arg(long, value_enum, default_value = "diff")]
    pub mean: CaseArg,
    #[arg(long, value_enum, default_value = "diff")]
    pub sd: CaseArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Options shared by the commands that fit a single-sample model.
#[derive(Debug, Args)]
pub struct ModelOpts {
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "mcd")]
    pub cov: CovArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    /// Model JSON written by `fit`
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutlierArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelOpts,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 2000)]
    pub mc: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoxplotArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value = "empirical")]
    pub cov: CovArg,
    #[arg(long, default_value_t = 2000)]
    pub mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// SVG output
    #[arg(long)]
    pub out: PathBuf,
    /// JSON summary output
    #[arg(long)]
    pub json: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Labelled training curves (labels 0 and 1)
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Fixed α; chosen by cross-validation when absent
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "heteroscedastic")]
    pub rule: RuleArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 250)]
    pub n_test: usize,
    #[arg(long, default_value_t = 2000)]
    pub mc: usize,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl From<BenchArgs> for BenchConfig {
    fn from(a: BenchArgs) -> Self {
        BenchConfig {
            experiment: a.experiment,
            reps: a.reps,
            seed: a.seed,
            n: a.n,
            n_test: a.n_test,
            n_mc: a.mc,
            grid: a.grid,
            out: a.out,
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit(&a),
        Command::Dist(a) => dist(&a),
        Command::Outliers(a) => outliers(&a),
        Command::Boxplot(a) => boxplot(&a),
        Command::Classify(a) => classify(&a),
        Command::Bench(a) => {
            let config = BenchConfig::from(a);
            let table = run_bench(&config)?;
            emit(config.out.as_deref(), table.into_bytes())
        }
    }
}

/// Writes to `path` atomically, or to stdout when no path is given.
fn emit(path: Option<&Path>, bytes: Vec<u8>) -> CliResult<()> {
    match path {
        Some(p) => write_atomic(p, &bytes),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn to_json(value: &impl serde::Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let grid = Grid::uniform(a.grid)?;
    let zero = Curve::zeros(a.grid);
    let sample = match a.kind {
        SimKind::Brownian => gp_sample(&KernelSpec::Brownian, &zero, &grid, a.n, a.seed)?,
        SimKind::Bridge => gp_sample(&KernelSpec::Bridge, &zero, &grid, a.n, a.seed)?,
        SimKind::Ou => gp_sample(
            &KernelSpec::Ou {
                scale: 0.3,
                range: 0.3,
            },
            &zero,
            &grid,
            a.n,
            a.seed,
        )?,
        SimKind::Model1 | SimKind::Model2 | SimKind::Model3 => {
            let model = match a.kind {
                SimKind::Model1 => ContaminationModel::Model1,
                SimKind::Model2 => ContaminationModel::Model2,
                _ => ContaminationModel::Model3,
            };
            contamination_model(model, a.n, a.contamination, &grid, a.seed)?
        }
        SimKind::BmBridge => brownian_pair(a.cut, a.n, a.grid, a.seed)?,
        SimKind::ScenarioA | SimKind::ScenarioB | SimKind::ScenarioC => {
            let scenario = match a.kind {
                SimKind::ScenarioA => Scenario::A,
                SimKind::ScenarioB => Scenario::B,
                _ => Scenario::C,
            };
            let spec = ScenarioSpec::new(scenario, a.mean.into(), a.sd.into());
            scenario_sample(&spec, a.n, &grid, a.seed)?
        }
    };
    write_atomic(&a.out, &curves_to_csv(&CurveTable::from_sample(sample)))
}

fn detection_config(opts: &ModelOpts) -> DetectionConfig {
    DetectionConfig {
        alpha: opts.alpha,
        cov_mode: opts.cov.into(),
        seed: opts.seed,
        ..DetectionConfig::default()
    }
}

pub fn fit(a: &FitArgs) -> CliResult<()> {
    let table = read_curves(&a.input)?;
    let model = fit_model(&table.sample, &detection_config(&a.model))?;
    write_atomic(&a.out, &to_json(&model))
}

fn read_model(path: &Path) -> CliResult<MahalanobisModel> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::parse(e.line(), e.column(), e.to_string()))
}

pub fn dist(a: &DistArgs) -> CliResult<()> {
    let model = read_model(&a.model)?;
    let table = read_curves(&a.input)?;
    if table.sample.grid() != model.eigsys().grid() {
        return Err(CliError::Usage(
            "curves and model are on different grids".into(),
        ));
    }
    let law = WeightedChiSq::central(model.eigsys().eigenvalues(), model.alpha())?;
    let mut draws = law.sample(a.mc.max(1), a.seed);
    draws.sort_by(f64::total_cmp);
    let mut out = String::from("id,distance_sq,depth,p_value\n");
    for (id, curve) in table.ids.iter().zip(table.sample.curves()) {
        let d2 = model.distance_sq_to_mean(curve)?;
        let above = draws.len() - draws.partition_point(|v| *v < d2);
        let p = above as f64 / draws.len() as f64;
        out.push_str(&format!(
            "{id},{},{},{}\n",
            format_value(d2),
            format_value(model.depth(curve)?),
            format_value(p)
        ));
    }
    emit(a.out.as_deref(), out.into_bytes())
}

pub fn outliers(a: &OutlierArgs) -> CliResult<()> {
    let table = read_curves(&a.input)?;
    let cfg = DetectionConfig {
        level: a.level,
        n_mc: a.mc,
        ..detection_config(&a.model)
    };
    let report = detect_outliers(&table.sample, &cfg)?;
    emit(a.out.as_deref(), to_json(&report))
}

pub fn boxplot(a: &BoxplotArgs) -> CliResult<()> {
    let table = read_curves(&a.input)?;
    let cfg = DetectionConfig {
        alpha: a.alpha,
        level: a.level,
        cov_mode: a.cov.into(),
        n_mc: a.mc,
        seed: a.seed,
        ..boxplot_config()
    };
    let summary = functional_boxplot(&table.sample, &cfg)?;
    let svg = render_boxplot(&table.points, &table.sample, &summary);
    write_all_atomic(&[(&a.out, svg.into_bytes()), (&a.json, to_json(&summary))])
}

pub fn classify(a: &ClassifyArgs) -> CliResult<()> {
    let train = read_curves(&a.train)?;
    let test = read_curves(&a.test)?;
    if train.sample.labels().is_none() {
        return Err(CliError::Usage(
            "training curves need a label column".into(),
        ));
    }
    if train.sample.grid() != test.sample.grid() {
        return Err(CliError::Usage(
            "training and test curves are on different grids".into(),
        ));
    }
    let (t0, t1) = (train.sample.class(0)?, train.sample.class(1)?);
    let model = match a.alpha {
        Some(alpha) => fit_classifier(&t0, &t1, alpha, [0.5, 0.5], a.rule.into())?,
        None => {
            let protocol = CvProtocol {
                rule: a.rule.into(),
                ..CvProtocol::default()
            };
            fit_cv_classifier(&t0, &t1, &default_alpha_grid(), &protocol, a.seed)?
        }
    };
    let mut out = String::from("id,predicted\n");
    for (id, curve) in test.ids.iter().zip(test.sample.curves()) {
        out.push_str(&format!("{id},{}\n", model.predict(curve)?));
    }
    emit(a.out.as_deref(), out.into_bytes())?;
    if test.sample.labels().is_some() {
        let err = evaluate_classifier(&model, &test.sample)?;
        eprintln!(
            "alpha {} misclassification {:.2}%",
            model.class_models[0].alpha(),
            100.0 * err
        );
    }
    Ok(())
}
