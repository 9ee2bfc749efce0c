//! Simulation benchmarks for outlier detection and classification.
//!
//! Every cell gets its own seed derived from the base seed and the cell
//! parameters, and every repetition a seed derived from the cell seed and
//! its index. Repetitions run in parallel and are collected in index order.

use std::fmt::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fmahal::classify::{
    cv_dfm_k, default_alpha_grid, evaluate_classifier, fit_cv_classifier, CvProtocol,
    DfmClassifier, KnnClassifier,
};
use fmahal::outliers::{detect_outliers, evaluate_detection, DetectionConfig};
use fmahal::rng::derive_seed;
use fmahal::simulate::{
    bayes_error_cut, brownian_pair, contamination_model, scenario_sample, Case, ContaminationModel,
    Scenario, ScenarioSpec,
};
use fmahal::{FunctionalSample, Grid};

use crate::error::{CliError, CliResult};

pub const CONTAMINATION_RATES: [f64; 5] = [0.0, 0.05, 0.1, 0.15, 0.2];
pub const CUT_POINTS: [f64; 5] = [0.75, 0.8125, 0.875, 0.9375, 1.0];
pub const SCENARIO_CASES: [(Case, Case); 3] = [
    (Case::Same, Case::Diff),
    (Case::Diff, Case::Same),
    (Case::Diff, Case::Diff),
];
/// Largest truncation level tried for `d_FM^k`.
pub const DFM_K_MAX: usize = 20;
const FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Outliers,
    BmBridge,
    Scenarios,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub experiment: Experiment,
    pub reps: usize,
    pub seed: u64,
    /// Sample size (outliers) or training size per class; `None` uses the
    /// experiment default, and for scenarios runs both 50 and 100.
    pub n: Option<usize>,
    /// Test curves per class for the classification experiments.
    pub n_test: usize,
    /// Monte Carlo draws for outlier thresholds.
    pub n_mc: usize,
    /// Grid size; `None` uses 50 (51 for scenarios).
    pub grid: Option<usize>,
    pub out: Option<PathBuf>,
}

impl BenchConfig {
    pub fn new(experiment: Experiment) -> Self {
        BenchConfig {
            experiment,
            reps: 50,
            seed: 0,
            n: None,
            n_test: 250,
            n_mc: 2000,
            grid: None,
            out: None,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.reps == 0 {
            return Err(CliError::Usage("reps must be at least 1".into()));
        }
        if self.n_mc == 0 || self.n_test == 0 || self.n == Some(0) {
            return Err(CliError::Usage("sizes must be positive".into()));
        }
        Ok(())
    }

    fn grid_size(&self) -> usize {
        self.grid.unwrap_or(match self.experiment {
            Experiment::Scenarios => 51,
            _ => 50,
        })
    }

    fn echo(&self) -> String {
        let n = match (self.experiment, self.n) {
            (_, Some(n)) => n.to_string(),
            (Experiment::Outliers, None) => "100".into(),
            (Experiment::BmBridge, None) => "50".into(),
            (Experiment::Scenarios, None) => "50;100".into(),
        };
        let exp = serde_json::to_value(self.experiment).expect("enum serializes");
        let mut s = format!(
            "# experiment={}\n# seed={}\n# reps={}\n# n={n}\n# grid={}\n",
            exp.as_str().unwrap_or_default(),
            self.seed,
            self.reps,
            self.grid_size()
        );
        match self.experiment {
            Experiment::Outliers => writeln!(s, "# n_mc={}", self.n_mc).unwrap(),
            _ => writeln!(s, "# n_test={}", self.n_test).unwrap(),
        }
        s
    }
}

/// Mean and sample standard deviation, skipping NaN entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Summary {
        let v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        let count = v.len();
        if count == 0 {
            return Summary {
                mean: f64::NAN,
                sd: f64::NAN,
                count,
            };
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, sd, count }
    }

    fn cells(&self, precision: usize) -> String {
        if self.count == 0 {
            ",".into()
        } else {
            format!("{:.p$},{:.p$}", self.mean, self.sd, p = precision)
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn run_reps<T: Send>(
    reps: usize,
    cell_seed: u64,
    f: impl Fn(u64) -> CliResult<T> + Sync,
) -> CliResult<Vec<T>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|r| f(derive_seed(cell_seed, r)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierCell {
    pub model: u32,
    pub c: f64,
    pub p_c: Summary,
    pub p_f: Summary,
}

/// Repeated detection on one (model, contamination rate) setting; `p_c` is
/// undefined at `c = 0` and left out of the summary.
pub fn outlier_cell(
    model: ContaminationModel,
    c: f64,
    config: &BenchConfig,
) -> CliResult<OutlierCell> {
    config.validate()?;
    let grid = Grid::uniform(config.grid_size())?;
    let n = config.n.unwrap_or(100);
    let cell_seed = derive_seed(
        config.seed,
        u64::from(model.id()) << 32 | (c * 1e4).round() as u64,
    );
    let rates = run_reps(config.reps, cell_seed, |seed| {
        let sample = contamination_model(model, n, c, &grid, seed)?;
        let truth: Vec<bool> = sample
            .labels()
            .unwrap_or_default()
            .iter()
            .map(|l| *l == 1)
            .collect();
        let detection = DetectionConfig {
            n_mc: config.n_mc,
            seed: derive_seed(seed, 7),
            ..DetectionConfig::default()
        };
        let report = detect_outliers(&sample, &detection)?;
        Ok(evaluate_detection(&report.flags, &truth)?)
    })?;
    Ok(OutlierCell {
        model: model.id(),
        c,
        p_c: Summary::of(rates.iter().map(|r| r.0)),
        p_f: Summary::of(rates.iter().map(|r| r.1)),
    })
}

pub fn cmd_outlier_bench(config: &BenchConfig) -> CliResult<String> {
    config.validate()?;
    let mut out = config.echo();
    out.push_str("model,c,p_c_mean,p_c_sd,p_f_mean,p_f_sd\n");
    for id in 1..=3 {
        let model = ContaminationModel::from_id(id)?;
        for c in CONTAMINATION_RATES {
            let cell = outlier_cell(model, c, config)?;
            writeln!(out, "{id},{c},{},{}", cell.p_c.cells(3), cell.p_f.cells(3)).unwrap();
        }
    }
    Ok(out)
}

/// Misclassification percentages of one repetition and the tuned parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifyRep {
    pub m_alpha: f64,
    pub dfm: f64,
    pub knn3: f64,
    pub knn5: f64,
    pub alpha: f64,
    pub k: usize,
}

fn split(sample: &FunctionalSample) -> CliResult<(FunctionalSample, FunctionalSample)> {
    Ok((sample.class(0)?, sample.class(1)?))
}

/// Fits every method on `train` and scores it on `test`.
///
/// `M_α` tunes α by cross-validating the plain nearest-mean rule and then
/// applies the heteroscedastic correction; `d_FM^k` tunes `k ∈ 1..=20`.
pub fn classify_rep(
    train: &FunctionalSample,
    test: &FunctionalSample,
    seed: u64,
) -> CliResult<ClassifyRep> {
    let (t0, t1) = split(train)?;
    let model = fit_cv_classifier(
        &t0,
        &t1,
        &default_alpha_grid(),
        &CvProtocol::default(),
        derive_seed(seed, 1),
    )?;
    let k = cv_dfm_k(&t0, &t1, DFM_K_MAX, FOLDS, derive_seed(seed, 2))?;
    let dfm = DfmClassifier::fit(&t0, &t1, k)?;
    let pct = |e: f64| 100.0 * e;
    Ok(ClassifyRep {
        m_alpha: pct(evaluate_classifier(&model, test)?),
        dfm: pct(evaluate_classifier(&dfm, test)?),
        knn3: pct(evaluate_classifier(&KnnClassifier { train, k: 3 }, test)?),
        knn5: pct(evaluate_classifier(&KnnClassifier { train, k: 5 }, test)?),
        alpha: model.class_models[0].alpha(),
        k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyCell {
    pub m_alpha: Summary,
    pub dfm: Summary,
    pub knn3: Summary,
    pub knn5: Summary,
    pub alpha_median: f64,
    pub k_median: f64,
    pub reps: Vec<ClassifyRep>,
}

impl ClassifyCell {
    fn from_reps(reps: Vec<ClassifyRep>) -> Self {
        ClassifyCell {
            m_alpha: Summary::of(reps.iter().map(|r| r.m_alpha)),
            dfm: Summary::of(reps.iter().map(|r| r.dfm)),
            knn3: Summary::of(reps.iter().map(|r| r.knn3)),
            knn5: Summary::of(reps.iter().map(|r| r.knn5)),
            alpha_median: median(&mut reps.iter().map(|r| r.alpha).collect::<Vec<_>>()),
            k_median: median(&mut reps.iter().map(|r| r.k as f64).collect::<Vec<_>>()),
            reps,
        }
    }

    fn cells(&self) -> String {
        format!(
            "{},{},{},{},{:.3e},{}",
            self.m_alpha.cells(1),
            self.dfm.cells(1),
            self.knn3.cells(1),
            self.knn5.cells(1),
            self.alpha_median,
            self.k_median
        )
    }
}

const CLASSIFY_COLUMNS: &str =
    "m_alpha_mean,m_alpha_sd,dfm_mean,dfm_sd,knn3_mean,knn3_sd,knn5_mean,knn5_sd,alpha_median,k_median";

/// Brownian motion against Brownian bridge observed up to `t_cut`.
pub fn bridge_cell(t_cut: f64, config: &BenchConfig) -> CliResult<ClassifyCell> {
    config.validate()?;
    let n = config.n.unwrap_or(50);
    let p = config.grid_size();
    let cell_seed = derive_seed(config.seed, 1 << 40 | (t_cut * 1e4).round() as u64);
    let reps = run_reps(config.reps, cell_seed, |seed| {
        let train = brownian_pair(t_cut, n, p, derive_seed(seed, 0))?;
        let test = brownian_pair(t_cut, config.n_test, p, derive_seed(seed, 1))?;
        classify_rep(&train, &test, seed)
    })?;
    Ok(ClassifyCell::from_reps(reps))
}

pub fn scenario_cell(
    spec: &ScenarioSpec,
    n: usize,
    config: &BenchConfig,
) -> CliResult<ClassifyCell> {
    config.validate()?;
    let grid = Grid::uniform(config.grid_size())?;
    let tag = (spec.scenario as u64) << 8 | (spec.mean_case as u64) << 4 | spec.sd_case as u64;
    let cell_seed = derive_seed(config.seed, 2 << 40 | tag << 16 | n as u64);
    let reps = run_reps(config.reps, cell_seed, |seed| {
        let train = scenario_sample(spec, n, &grid, derive_seed(seed, 0))?;
        let test = scenario_sample(spec, config.n_test, &grid, derive_seed(seed, 1))?;
        classify_rep(&train, &test, seed)
    })?;
    Ok(ClassifyCell::from_reps(reps))
}

fn case_name(c: Case) -> &'static str {
    match c {
        Case::Same => "same",
        Case::Diff => "diff",
    }
}

pub fn cmd_classify_bench(config: &BenchConfig) -> CliResult<String> {
    config.validate()?;
    let mut out = config.echo();
    match config.experiment {
        Experiment::BmBridge => {
            writeln!(out, "t,bayes,{CLASSIFY_COLUMNS}").unwrap();
            for t in CUT_POINTS {
                let cell = bridge_cell(t, config)?;
                let bayes = 100.0 * bayes_error_cut(t)?;
                writeln!(out, "{t},{bayes:.1},{}", cell.cells()).unwrap();
            }
        }
        Experiment::Scenarios => {
            writeln!(out, "scenario,n,mean,sd,{CLASSIFY_COLUMNS}").unwrap();
            let sizes = config.n.map_or(vec![50, 100], |n| vec![n]);
            for (scenario, name) in [(Scenario::A, "A"), (Scenario::B, "B"), (Scenario::C, "C")] {
                for &n in &sizes {
                    for (mean, sd) in SCENARIO_CASES {
                        let cell =
                            scenario_cell(&ScenarioSpec::new(scenario, mean, sd), n, config)?;
                        writeln!(
                            out,
                            "{name},{n},{},{},{}",
                            case_name(mean),
                            case_name(sd),
                            cell.cells()
                        )
                        .unwrap();
                    }
                }
            }
        }
        Experiment::Outliers => {
            return Err(CliError::Usage(
                "outlier experiment is not a classification benchmark".into(),
            ))
        }
    }
    Ok(out)
}

/// Runs the configured experiment and returns its CSV table.
pub fn run_bench(config: &BenchConfig) -> CliResult<String> {
    match config.experiment {
        Experiment::Outliers => cmd_outlier_bench(config),
        _ => cmd_classify_bench(config),
    }
}
