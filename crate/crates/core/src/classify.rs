//! Binary classification of curves.
//!
//! The `M_α` rule assigns `x` to class 1 when
//! `[M²_{α,K₀}(x,m₀) − 2 log π₀] − [M²_{α,K₁}(x,m₁) − 2 log π₁] > C`, where each
//! distance uses its own class covariance. `C = 0` in homoscedastic mode; in
//! heteroscedastic mode it is the log ratio of the products of the leading
//! eigenvalues of the two classes, mimicking the log-determinant term of
//! quadratic discriminant analysis.
//!
//! Baselines: the truncated semidistance `d_FM^k` and k-nearest neighbours.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{fit_empirical, EigenSystem};
use crate::error::{invalid, Result};
use crate::funcspace::{Curve, FunctionalSample};
use crate::mahalanobis::{check_alpha, spectral_distance_sq, standardized_sum, MahalanobisModel};
use crate::rng::substream;

/// Number of leading eigenvalue pairs entering the heteroscedastic constant.
pub const LOG_DET_MODES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleMode {
    Homoscedastic,
    Heteroscedastic,
}

/// Anything that labels a curve.
pub trait Predict {
    fn predict(&self, x: &[f64]) -> Result<u32>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub class_models: [MahalanobisModel; 2],
    pub priors: [f64; 2],
    pub mode: RuleMode,
    pub threshold_c: f64,
}

/// `log(Π λ¹_j / Π λ⁰_j)` over the `min(10, rank₀, rank₁)` leading pairs.
pub fn heteroscedastic_constant(class0: &EigenSystem, class1: &EigenSystem) -> f64 {
    let k = LOG_DET_MODES.min(class0.rank()).min(class1.rank());
    class0.eigenvalues()[..k]
        .iter()
        .zip(&class1.eigenvalues()[..k])
        .map(|(l0, l1)| l1.ln() - l0.ln())
        .sum()
}

fn check_priors(priors: [f64; 2]) -> Result<()> {
    if priors.iter().any(|p| !(p.is_finite() && *p > 0.0))
        || (priors[0] + priors[1] - 1.0).abs() > 1e-12
    {
        return invalid(format!(
            "priors must be positive and sum to 1, got {priors:?}"
        ));
    }
    Ok(())
}

impl ClassifierModel {
    pub fn from_eigensystems(
        class0: EigenSystem,
        class1: EigenSystem,
        alpha: f64,
        priors: [f64; 2],
        mode: RuleMode,
    ) -> Result<Self> {
        check_priors(priors)?;
        if class0.grid() != class1.grid() {
            return invalid("class models are fitted on different grids");
        }
        let threshold_c = match mode {
            RuleMode::Homoscedastic => 0.0,
            RuleMode::Heteroscedastic => heteroscedastic_constant(&class0, &class1),
        };
        Ok(ClassifierModel {
            class_models: [
                MahalanobisModel::new(class0, alpha)?,
                MahalanobisModel::new(class1, alpha)?,
            ],
            priors,
            mode,
            threshold_c,
        })
    }

    /// Prior-penalized squared distances `M²_{α,K_j}(x,m_j) − 2 log π_j`.
    pub fn scores(&self, x: &[f64]) -> Result<[f64; 2]> {
        let mut s = [0.0; 2];
        for (j, model) in self.class_models.iter().enumerate() {
            s[j] = model.distance_sq_to_mean(x)? - 2.0 * self.priors[j].ln();
        }
        Ok(s)
    }
}

impl Predict for ClassifierModel {
    fn predict(&self, x: &[f64]) -> Result<u32> {
        let [s0, s1] = self.scores(x)?;
        Ok(u32::from(s0 - s1 > self.threshold_c))
    }
}

/// Fits per-class means, covariances and eigensystems.
pub fn fit_classifier(
    train0: &FunctionalSample,
    train1: &FunctionalSample,
    alpha: f64,
    priors: [f64; 2],
    mode: RuleMode,
) -> Result<ClassifierModel> {
    let (e0, e1) = fit_pair(train0, train1)?;
    ClassifierModel::from_eigensystems(e0, e1, alpha, priors, mode)
}

fn fit_pair(
    train0: &FunctionalSample,
    train1: &FunctionalSample,
) -> Result<(EigenSystem, EigenSystem)> {
    for (j, s) in [train0, train1].iter().enumerate() {
        if s.len() < 2 {
            return invalid(format!(
                "class {j} needs at least 2 training curves, got {}",
                s.len()
            ));
        }
    }
    if train0.grid() != train1.grid() {
        return invalid("training classes are sampled on different grids");
    }
    Ok((fit_empirical(train0)?, fit_empirical(train1)?))
}

/// Nearest-mean rule with the truncated semidistance `d_FM^k` under each
/// class's covariance. Ties go to class 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfmClassifier {
    pub class_eigsys: [EigenSystem; 2],
    pub k: usize,
}

impl DfmClassifier {
    pub fn fit(train0: &FunctionalSample, train1: &FunctionalSample, k: usize) -> Result<Self> {
        let (e0, e1) = fit_pair(train0, train1)?;
        let max_k = e0.rank().min(e1.rank());
        if k == 0 || k > max_k {
            return invalid(format!("k = {k} must lie in 1..={max_k}"));
        }
        Ok(DfmClassifier {
            class_eigsys: [e0, e1],
            k,
        })
    }
}

impl Predict for DfmClassifier {
    fn predict(&self, x: &[f64]) -> Result<u32> {
        let mut d = [0.0; 2];
        for (j, es) in self.class_eigsys.iter().enumerate() {
            let c = es.coefficients(&Curve::from(x.to_vec()).sub(es.mean()))?;
            d[j] = standardized_sum(es.eigenvalues(), &c, self.k);
        }
        Ok(u32::from(d[0] > d[1]))
    }
}

/// k-nearest-neighbour rule in the `L²` norm.
#[derive(Debug, Clone)]
pub struct KnnClassifier<'a> {
    pub train: &'a FunctionalSample,
    pub k: usize,
}

impl Predict for KnnClassifier<'_> {
    fn predict(&self, x: &[f64]) -> Result<u32> {
        knn_classify(self.train, x, self.k)
    }
}

/// Majority label among the `k` training curves closest to `x` in `‖·‖₂`.
/// Distance ties go to the lower training index, vote ties to the lower label.
pub fn knn_classify(train: &FunctionalSample, x: &[f64], k: usize) -> Result<u32> {
    let Some(labels) = train.labels() else {
        return invalid("knn needs a labelled training sample");
    };
    if k == 0 || k > train.len() {
        return invalid(format!("k = {k} must lie in 1..={}", train.len()));
    }
    let grid = train.grid();
    grid.check_aligned(x, "curve")?;
    let mut dist: Vec<(f64, usize)> = train
        .curves()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let d: Vec<f64> = c.iter().zip(x).map(|(a, b)| a - b).collect();
            (grid.dot(&d, &d), i)
        })
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes: Vec<(u32, usize)> = Vec::new();
    for &(_, i) in &dist[..k] {
        match votes.iter_mut().find(|(l, _)| *l == labels[i]) {
            Some(v) => v.1 += 1,
            None => votes.push((labels[i], 1)),
        }
    }
    votes.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(votes[0].0)
}

/// Share of misclassified curves in a labelled test sample.
pub fn evaluate_classifier(rule: &(impl Predict + Sync), test: &FunctionalSample) -> Result<f64> {
    let Some(labels) = test.labels() else {
        return invalid("test sample has no labels");
    };
    if test.is_empty() {
        return invalid("test sample is empty");
    }
    let wrong = test
        .curves()
        .par_iter()
        .zip(labels)
        .map(|(c, l)| rule.predict(c).map(|p| usize::from(p != *l)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(wrong as f64 / test.len() as f64)
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// 13 log-spaced values over `[1e−4, 1e−1]`.
pub fn default_alpha_grid() -> Vec<f64> {
    log_grid(1e-4, 1e-1, 13)
}

/// One cross-validation split: training classes and held-out curves.
struct Fold {
    eig: [EigenSystem; 2],
    /// Held-out curves with their true labels.
    held_out: Vec<(Curve, u32)>,
}

fn stratified_folds(
    train0: &FunctionalSample,
    train1: &FunctionalSample,
    folds: usize,
    seed: u64,
) -> Result<Vec<Fold>> {
    if folds < 2 {
        return invalid(format!("need at least 2 folds, got {folds}"));
    }
    for (j, s) in [train0, train1].iter().enumerate() {
        // every training split must keep 2 curves per class
        if s.len() < folds || s.len() - s.len().div_ceil(folds) < 2 {
            return invalid(format!(
                "class {j} has {} curves, too few for {folds}-fold cross-validation",
                s.len()
            ));
        }
    }
    let assignment: Vec<Vec<usize>> = [train0, train1]
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.shuffle(&mut substream(seed, j as u64));
            let mut fold_of = vec![0; s.len()];
            for (pos, &i) in idx.iter().enumerate() {
                fold_of[i] = pos % folds;
            }
            fold_of
        })
        .collect();
    (0..folds)
        .into_par_iter()
        .map(|f| {
            let mut eig = Vec::with_capacity(2);
            let mut held_out = Vec::new();
            for (j, s) in [train0, train1].iter().enumerate() {
                let keep: Vec<usize> = (0..s.len()).filter(|&i| assignment[j][i] != f).collect();
                eig.push(fit_empirical(&s.subset(&keep))?);
                held_out.extend(
                    (0..s.len())
                        .filter(|&i| assignment[j][i] == f)
                        .map(|i| (s.curves()[i].clone(), j as u32)),
                );
            }
            let e1 = eig.pop().expect("two classes");
            let e0 = eig.pop().expect("two classes");
            Ok(Fold {
                eig: [e0, e1],
                held_out,
            })
        })
        .collect()
}

/// Picks the grid value with the smallest mean error; ties go to the
/// smallest value.
fn argmin_smallest(values: &[f64], errors: &[f64]) -> f64 {
    let mut best = 0;
    for i in 1..values.len() {
        if errors[i] < errors[best] || (errors[i] == errors[best] && values[i] < values[best]) {
            best = i;
        }
    }
    values[best]
}

/// Mean validation misclassification of the `M_α` rule for every α.
pub fn cv_alpha_errors(
    train0: &FunctionalSample,
    train1: &FunctionalSample,
    alpha_grid: &[f64],
    folds: usize,
    seed: u64,
    mode: RuleMode,
) -> Result<Vec<f64>> {
    if alpha_grid.is_empty() {
        return invalid("alpha grid is empty");
    }
    for a in alpha_grid {
        check_alpha(*a)?;
    }
    let splits = stratified_folds(train0, train1, folds, seed)?;
    let per_fold: Vec<Vec<f64>> = splits
        .par_iter()
        .map(|fold| {
            let c = match mode {
                RuleMode::Homoscedastic => 0.0,
                RuleMode::Heteroscedastic => heteroscedastic_constant(&fold.eig[0], &fold.eig[1]),
            };
            // coefficients do not depend on α
            let coeffs: Vec<[Vec<f64>; 2]> = fold
                .held_out
                .iter()
                .map(|(x, _)| {
                    [0, 1].map(|j| {
                        let es = &fold.eig[j];
                        es.coefficients_unchecked(&x.sub(es.mean()))
                    })
                })
                .collect();
            alpha_grid
                .iter()
                .map(|&alpha| {
                    let wrong = coeffs
                        .iter()
                        .zip(&fold.held_out)
                        .filter(|(cs, (_, label))| {
                            let d0 = spectral_distance_sq(fold.eig[0].eigenvalues(), &cs[0], alpha);
                            let d1 = spectral_distance_sq(fold.eig[1].eigenvalues(), &cs[1], alpha);
                            u32::from(d0 - d1 > c) != *label
                        })
                        .count();
                    wrong as f64 / fold.held_out.len() as f64
                })
                .collect()
        })
        .collect();
    Ok((0..alpha_grid.len())
        .map(|a| per_fold.iter().map(|f| f[a]).sum::<f64>() / folds as f64)
        .collect())
}

/// α minimizing the stratified k-fold cross-validated misclassification of
/// the `M_α` rule (equal priors).
pub fn cv_alpha(
    train0: &FunctionalSample,
    train1: &FunctionalSample,
    alpha_grid: &[f64],
    folds: usize,
    seed: u64,
    mode: RuleMode,
) -> Result<f64> {
    let errors = cv_alpha_errors(train0, train1, alpha_grid, folds, seed, mode)?;
    Ok(argmin_smallest(alpha_grid, &errors))
}

/// How α is tuned and how the final rule is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvProtocol {
    /// Rule scored during cross-validation.
    pub tuning: RuleMode,
    /// Rule of the returned classifier.
    pub rule: RuleMode,
    pub folds: usize,
}

impl Default for CvProtocol {
    /// α is tuned on the plain nearest-mean rule and the heteroscedastic
    /// constant is applied afterwards.
    fn default() -> Self {
        CvProtocol {
            tuning: RuleMode::Homoscedastic,
            rule: RuleMode::Heteroscedastic,
            folds: 5,
        }
    }
}

/// Cross-validates α under `protocol.tuning`, then fits the
/// `protocol.rule` classifier on all training data with equal priors.
pub fn fit_cv_classifier(
    train0: &FunctionalSample,
    train1: &FunctionalSample,
    alpha_grid: &[f64],
    protocol: &CvProtocol,
    seed: u64,
) -> Result<ClassifierModel> {
    let alpha = cv_alpha(
        train0,
        train1,
        alpha_grid,
        protocol.folds,
        seed,
        protocol.tuning,
    )?;
    fit_classifier(train0, train1, alpha, [0.5, 0.5], protocol.rule)
}

/// Truncation level `k ∈ 1..=k_max` of the `d_FM^k` rule chosen by
/// stratified cross-validation; ties go to the smallest `k`.
pub fn cv_dfm_k(
    train0: &FunctionalSample,
    train1: &FunctionalSample,
    k_max: usize,
    folds: usize,
    seed: u64,
) -> Result<usize> {
    let splits = stratified_folds(train0, train1, folds, seed)?;
    let k_max = splits
        .iter()
        .map(|f| f.eig[0].rank().min(f.eig[1].rank()))
        .min()
        .unwrap_or(0)
        .min(k_max);
    if k_max == 0 {
        return invalid("no eigenpairs available for d_FM^k");
    }
    let per_fold: Vec<Vec<f64>> = splits
        .par_iter()
        .map(|fold| {
            let mut wrong = vec![0usize; k_max];
            for (x, label) in &fold.held_out {
                // cumulative standardized sums give every k at once
                let mut acc = [0.0; 2];
                let cs = [0, 1].map(|j| {
                    let es = &fold.eig[j];
                    es.coefficients_unchecked(&x.sub(es.mean()))
                });
                for k in 0..k_max {
                    for j in 0..2 {
                        let c = cs[j][k];
                        acc[j] += c * c / fold.eig[j].eigenvalues()[k];
                    }
                    if u32::from(acc[0] > acc[1]) != *label {
                        wrong[k] += 1;
                    }
                }
            }
            wrong
                .into_iter()
                .map(|w| w as f64 / fold.held_out.len() as f64)
                .collect()
        })
        .collect();
    let ks: Vec<f64> = (1..=k_max).map(|k| k as f64).collect();
    let errors: Vec<f64> = (0..k_max)
        .map(|k| per_fold.iter().map(|f| f[k]).sum::<f64>() / folds as f64)
        .collect();
    Ok(argmin_smallest(&ks, &errors) as usize)
}
