//! Outlier detection by `M_α` with Monte Carlo thresholds, and functional
//! boxplots built from the induced depth.

use serde::{Deserialize, Serialize};

use crate::covariance::{
    eigendecompose, fit_empirical, mcd_covariance, sample_covariance, sample_mean, McdConfig,
    DEFAULT_TOL_REL,
};
use crate::distribution::{sorted_quantile, WeightedChiSq};
use crate::error::{invalid, Result};
use crate::funcspace::{Curve, FunctionalSample};
use crate::mahalanobis::{depth_from_distance_sq, MahalanobisModel};
use crate::rng::derive_seed;

/// Which spectrum defines the reference law for the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSpectrum {
    /// Eigenvalues of the fitted covariance (robust under MCD).
    Fitted,
    /// Eigenvalues of the empirical covariance of the whole sample.
    Sample,
}

/// How the mean and covariance of the sample are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovMode {
    Empirical,
    Mcd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub alpha: f64,
    /// Quantile of the simulated distances used as threshold.
    pub level: f64,
    pub cov_mode: CovMode,
    /// Spectrum of the simulated reference law. Distances always use the
    /// fitted model; with `Sample` the threshold comes from the full
    /// empirical spectrum, which outliers inflate.
    pub threshold_spectrum: ThresholdSpectrum,
    /// Monte Carlo sample size for the threshold.
    pub n_mc: usize,
    pub seed: u64,
    /// MCD settings; its seed is derived from `seed`.
    pub mcd: McdConfig,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            alpha: 0.01,
            level: 0.95,
            cov_mode: CovMode::Mcd,
            threshold_spectrum: ThresholdSpectrum::Sample,
            n_mc: 2000,
            seed: 0,
            mcd: McdConfig::default(),
        }
    }
}

impl DetectionConfig {
    fn validate(&self) -> Result<()> {
        crate::mahalanobis::check_alpha(self.alpha)?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return invalid(format!("level must lie in (0,1), got {}", self.level));
        }
        if self.n_mc == 0 {
            return invalid("n_mc must be positive");
        }
        Ok(())
    }
}

/// Fits mean and covariance per `cov_mode` and wraps the eigensystem.
pub fn fit_model(sample: &FunctionalSample, config: &DetectionConfig) -> Result<MahalanobisModel> {
    let (mean, cov) = match config.cov_mode {
        CovMode::Empirical => {
            let mean = sample_mean(sample)?;
            let cov = sample_covariance(sample, Some(&mean))?;
            (mean, cov)
        }
        CovMode::Mcd => {
            let mcd = McdConfig {
                seed: derive_seed(config.seed, 0x4d4344),
                ..config.mcd.clone()
            };
            let est = mcd_covariance(sample, &mcd)?;
            (est.mean, est.cov)
        }
    };
    let eigsys = eigendecompose(&cov, &mean, DEFAULT_TOL_REL, None)?;
    MahalanobisModel::new(eigsys, config.alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    /// `flags[i]` iff `distances_sq[i] > threshold`.
    pub flags: Vec<bool>,
    pub threshold: f64,
    /// `M_α²` from each curve to the fitted mean.
    pub distances_sq: Vec<f64>,
    pub level: f64,
    pub alpha: f64,
    pub cov_mode: CovMode,
}

impl OutlierReport {
    pub fn outlier_indices(&self) -> Vec<usize> {
        (0..self.flags.len()).filter(|&i| self.flags[i]).collect()
    }
}

/// Flags curves whose `M_α²` to the fitted mean exceeds the `level`
/// quantile of `n_mc` draws from the central weighted χ² law of the
/// spectrum chosen by `threshold_spectrum`.
pub fn detect_outliers(
    sample: &FunctionalSample,
    config: &DetectionConfig,
) -> Result<OutlierReport> {
    config.validate()?;
    if sample.len() < 2 {
        return invalid(format!(
            "outlier detection needs at least 2 curves, got {}",
            sample.len()
        ));
    }
    let model = fit_model(sample, config)?;
    detect_with_model(sample, &model, config)
}

fn reference_eigenvalues(
    sample: &FunctionalSample,
    model: &MahalanobisModel,
    config: &DetectionConfig,
) -> Result<Vec<f64>> {
    match (config.cov_mode, config.threshold_spectrum) {
        (CovMode::Mcd, ThresholdSpectrum::Sample) => {
            Ok(fit_empirical(sample)?.eigenvalues().to_vec())
        }
        _ => Ok(model.eigsys().eigenvalues().to_vec()),
    }
}

fn detect_with_model(
    sample: &FunctionalSample,
    model: &MahalanobisModel,
    config: &DetectionConfig,
) -> Result<OutlierReport> {
    let distances_sq = sample
        .curves()
        .iter()
        .map(|c| model.distance_sq_to_mean(c))
        .collect::<Result<Vec<_>>>()?;
    let law = WeightedChiSq::central(
        &reference_eigenvalues(sample, model, config)?,
        model.alpha(),
    )?;
    let mut draws = law.sample(config.n_mc, config.seed);
    draws.sort_by(f64::total_cmp);
    let threshold = sorted_quantile(&draws, config.level);
    let flags = distances_sq.iter().map(|d| *d > threshold).collect();
    Ok(OutlierReport {
        flags,
        threshold,
        distances_sq,
        level: config.level,
        alpha: model.alpha(),
        cov_mode: config.cov_mode,
    })
}

/// `(p_c, p_f)`: the share of true outliers that were flagged and the share
/// of regular curves that were flagged. Either is `NaN` when its reference
/// group is empty.
pub fn evaluate_detection(flags: &[bool], truth: &[bool]) -> Result<(f64, f64)> {
    if flags.len() != truth.len() {
        return invalid(format!(
            "{} flags but {} truth labels",
            flags.len(),
            truth.len()
        ));
    }
    let (mut hit, mut pos, mut false_hit, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (f, t) in flags.iter().zip(truth) {
        if *t {
            pos += 1;
            hit += usize::from(*f);
        } else {
            neg += 1;
            false_hit += usize::from(*f);
        }
    }
    let ratio = |a: usize, b: usize| {
        if b == 0 {
            f64::NAN
        } else {
            a as f64 / b as f64
        }
    };
    Ok((ratio(hit, pos), ratio(false_hit, neg)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    /// Index of the deepest curve (lowest index on ties).
    pub median_index: usize,
    /// Pointwise envelope of the `⌈n/2⌉` deepest curves.
    pub central_lower: Curve,
    pub central_upper: Curve,
    /// Pointwise envelope of the curves not flagged as outliers.
    pub whisker_lower: Curve,
    pub whisker_upper: Curve,
    pub outlier_indices: Vec<usize>,
    pub depths: Vec<f64>,
    pub threshold: f64,
}

/// Default settings for boxplots: empirical covariance, since boxplot
/// samples are usually too small for a robust fit.
pub fn boxplot_config() -> DetectionConfig {
    DetectionConfig {
        cov_mode: CovMode::Empirical,
        ..DetectionConfig::default()
    }
}

/// Functional boxplot from `M_α` depths.
pub fn functional_boxplot(
    sample: &FunctionalSample,
    config: &DetectionConfig,
) -> Result<BoxplotSummary> {
    config.validate()?;
    let n = sample.len();
    if n < 4 {
        return invalid(format!("a boxplot needs at least 4 curves, got {n}"));
    }
    let model = fit_model(sample, config)?;
    let report = detect_with_model(sample, &model, config)?;
    let depths: Vec<f64> = report
        .distances_sq
        .iter()
        .map(|d| depth_from_distance_sq(*d))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| depths[b].total_cmp(&depths[a]).then(a.cmp(&b)));
    let median_index = order[0];
    let (central_lower, central_upper) = envelope(sample, &order[..n.div_ceil(2)]);
    let outlier_indices = report.outlier_indices();
    let regular: Vec<usize> = (0..n).filter(|&i| !report.flags[i]).collect();
    let (whisker_lower, whisker_upper) = if regular.is_empty() {
        (central_lower.clone(), central_upper.clone())
    } else {
        envelope(sample, &regular)
    };
    Ok(BoxplotSummary {
        median_index,
        central_lower,
        central_upper,
        whisker_lower,
        whisker_upper,
        outlier_indices,
        depths,
        threshold: report.threshold,
    })
}

fn envelope(sample: &FunctionalSample, indices: &[usize]) -> (Curve, Curve) {
    let p = sample.grid().len();
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for &i in indices {
        for (j, v) in sample.curves()[i].iter().enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    (Curve::from(lo), Curve::from(hi))
}
