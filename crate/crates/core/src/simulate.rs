//! Seeded generators for the benchmark models: Gaussian processes with named
//! kernels, the three contamination models used for outlier detection, cut
//! Brownian motion versus Brownian bridge, and the Fourier-basis scenarios
//! A/B/C used for classification.
//!
//! Curve `i` of every generator draws from its own stream, so samples are
//! identical whether they are produced serially or in parallel.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::funcspace::{Curve, FunctionalSample, Grid};
use crate::rng::{derive_seed, substream};

/// Covariance family of a Gaussian process.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `scale · exp(−|s−t| / range)`.
    Ou { scale: f64, range: f64 },
    /// `min(s,t)`.
    Brownian,
    /// `min(s,t) − st`.
    Bridge,
    /// Covariance already tabulated on the sampling grid.
    Table(DMatrix<f64>),
}

impl KernelSpec {
    pub fn matrix(&self, grid: &Grid) -> Result<DMatrix<f64>> {
        let t = grid.points();
        let p = t.len();
        let m = match self {
            KernelSpec::Ou { scale, range } => {
                if !(*scale > 0.0 && *range > 0.0) {
                    return invalid("OU kernel needs positive scale and range");
                }
                DMatrix::from_fn(p, p, |i, j| scale * (-(t[i] - t[j]).abs() / range).exp())
            }
            KernelSpec::Brownian => DMatrix::from_fn(p, p, |i, j| t[i].min(t[j])),
            KernelSpec::Bridge => DMatrix::from_fn(p, p, |i, j| t[i].min(t[j]) - t[i] * t[j]),
            KernelSpec::Table(m) => {
                if m.nrows() != p || m.ncols() != p {
                    return invalid(format!("kernel table is not {p}x{p}"));
                }
                m.clone()
            }
        };
        Ok(m)
    }
}

/// Lower factor `L` with `L Lᵀ ≈ K`.
///
/// Points with zero variance are left out of the factorization so the
/// process is pinned there exactly (Brownian motion at 0, the bridge at 0
/// and 1). The rest is Cholesky-factorized, adding diagonal jitter
/// `1e−10·max diag`, escalated ×10 at most three times, if needed.
fn factor(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = k.nrows();
    let active: Vec<usize> = (0..p).filter(|&i| k[(i, i)] > 0.0).collect();
    let mut l = DMatrix::zeros(p, p);
    if active.is_empty() {
        return Ok(l);
    }
    let q = active.len();
    let sub = DMatrix::from_fn(q, q, |a, b| k[(active[a], active[b])]);
    let max_diag = sub.diagonal().max();
    let jitters = [0.0, 1e-10, 1e-9, 1e-8, 1e-7];
    let chol = jitters
        .iter()
        .find_map(|j| {
            let mut m = sub.clone();
            for i in 0..q {
                m[(i, i)] += j * max_diag;
            }
            m.cholesky()
        })
        .ok_or_else(|| {
            Error::NumericFailure("kernel matrix is not positive semidefinite".into())
        })?;
    let ls = chol.l();
    for a in 0..q {
        for b in 0..=a {
            l[(active[a], active[b])] = ls[(a, b)];
        }
    }
    Ok(l)
}

/// `n` trajectories `mean + L z` of a Gaussian process on `grid`.
pub fn gp_sample(
    kernel: &KernelSpec,
    mean: &Curve,
    grid: &Grid,
    n: usize,
    seed: u64,
) -> Result<FunctionalSample> {
    grid.check_aligned(mean, "mean")?;
    let l = factor(&kernel.matrix(grid)?)?;
    let p = grid.len();
    let curves: Vec<Curve> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
            let values = (0..p)
                .map(|r| mean[r] + (0..=r).map(|c| l[(r, c)] * z[c]).sum::<f64>())
                .collect::<Vec<_>>();
            Curve::from(values)
        })
        .collect();
    FunctionalSample::new(grid.clone(), curves, None)
}

/// Number of contaminated curves, `⌈c·n⌉`.
pub fn contaminated_count(n: usize, c: f64) -> usize {
    // guard against 0.15·100 = 15.000000000000002
    ((c * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Which of the three outlier-detection models to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContaminationModel {
    /// Main `30t(1−t)^{3/2}`, contamination `30t^{3/2}(1−t)`, OU(0.3, 0.3) noise.
    Model1,
    /// Main `4t`, contamination adds a random-sign level shift of 1.8 and a
    /// Gaussian bump; `exp(−|s−t|)` noise.
    Model2,
    /// Main `4t`, contamination adds `2 sin(4(t+μ)π)`; `exp(−|s−t|)` noise.
    Model3,
}

impl ContaminationModel {
    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            1 => Ok(ContaminationModel::Model1),
            2 => Ok(ContaminationModel::Model2),
            3 => Ok(ContaminationModel::Model3),
            _ => invalid(format!("contamination model must be 1, 2 or 3, got {id}")),
        }
    }

    pub fn id(self) -> u32 {
        match self {
            ContaminationModel::Model1 => 1,
            ContaminationModel::Model2 => 2,
            ContaminationModel::Model3 => 3,
        }
    }

    fn noise(self) -> KernelSpec {
        match self {
            ContaminationModel::Model1 => KernelSpec::Ou {
                scale: 0.3,
                range: 0.3,
            },
            _ => KernelSpec::Ou {
                scale: 1.0,
                range: 1.0,
            },
        }
    }

    fn main_mean(self, t: f64) -> f64 {
        match self {
            ContaminationModel::Model1 => 30.0 * t * (1.0 - t).powf(1.5),
            _ => 4.0 * t,
        }
    }

    /// Mean of one contaminated curve, with its random sign and location.
    fn contaminated_mean(self, rng: &mut impl Rng) -> impl Fn(f64) -> f64 {
        let sign = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let mu = rng.random_range(0.25..=0.75);
        move |t: f64| match self {
            ContaminationModel::Model1 => 30.0 * t.powf(1.5) * (1.0 - t),
            ContaminationModel::Model2 => {
                let bump =
                    (0.02 * std::f64::consts::PI).powf(-0.5) * (-(t - mu).powi(2) / 0.02).exp();
                4.0 * t + sign * 1.8 + bump
            }
            ContaminationModel::Model3 => {
                4.0 * t + 2.0 * (4.0 * (t + mu) * std::f64::consts::PI).sin()
            }
        }
    }
}

/// `n − ⌈c·n⌉` main curves followed by `⌈c·n⌉` contaminated ones; label 1
/// marks contamination.
pub fn contamination_model(
    model: ContaminationModel,
    n: usize,
    c: f64,
    grid: &Grid,
    seed: u64,
) -> Result<FunctionalSample> {
    if !(0.0..1.0).contains(&c) {
        return invalid(format!("contamination rate must lie in [0,1), got {c}"));
    }
    if n == 0 {
        return invalid("sample size must be positive");
    }
    let n_out = contaminated_count(n, c);
    let noise = gp_sample(
        &model.noise(),
        &Curve::zeros(grid.len()),
        grid,
        n,
        derive_seed(seed, 1),
    )?;
    let main = grid.curve_from_fn(|t| model.main_mean(t));
    let shape_seed = derive_seed(seed, 2);
    let curves: Vec<Curve> = noise
        .curves()
        .iter()
        .enumerate()
        .map(|(i, eps)| {
            if i < n - n_out {
                main.add(eps)
            } else {
                let mut rng = substream(shape_seed, i as u64);
                let f = model.contaminated_mean(&mut rng);
                grid.curve_from_fn(f).add(eps)
            }
        })
        .collect();
    let labels = (0..n).map(|i| u32::from(i >= n - n_out)).collect();
    FunctionalSample::new(grid.clone(), curves, Some(labels))
}

/// Brownian motion (label 0) and Brownian bridge (label 1) sampled on a
/// `grid_size`-point grid over `[0,1]` and then cut to the points `≤ t_cut`.
pub fn brownian_pair(
    t_cut: f64,
    n_per_class: usize,
    grid_size: usize,
    seed: u64,
) -> Result<FunctionalSample> {
    if !(t_cut > 0.0 && t_cut <= 1.0) {
        return invalid(format!("cut point must lie in (0,1], got {t_cut}"));
    }
    let grid = Grid::uniform(grid_size)?;
    let zero = Curve::zeros(grid_size);
    let bm = gp_sample(
        &KernelSpec::Brownian,
        &zero,
        &grid,
        n_per_class,
        derive_seed(seed, 1),
    )?;
    let bb = gp_sample(
        &KernelSpec::Bridge,
        &zero,
        &grid,
        n_per_class,
        derive_seed(seed, 2),
    )?;
    let curves: Vec<Curve> = bm.curves().iter().chain(bb.curves()).cloned().collect();
    let labels = (0..2 * n_per_class)
        .map(|i| u32::from(i >= n_per_class))
        .collect();
    let full = FunctionalSample::new(grid.clone(), curves, Some(labels))?;
    let cut = grid.truncate(t_cut)?;
    Ok(full.restrict_to(cut))
}

/// Bayes error of Brownian motion vs Brownian bridge observed on `[0, T]`
/// with equal priors.
pub fn bayes_error_cut(t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return invalid(format!("cut point must lie in (0,1], got {t}"));
    }
    if t == 1.0 {
        return Ok(0.0);
    }
    let phi = Normal::standard();
    let a = (-(1.0 - t) * (1.0 - t).ln()).sqrt();
    Ok(0.5 - phi.cdf(a / (t * (1.0 - t)).sqrt()) + phi.cdf(a / t.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Gaussian coefficients.
    A,
    /// Centered exponential coefficients.
    B,
    /// Scenario B coefficients divided by a per-curve `χ²₃₀/30` draw, no noise.
    C,
}

/// Whether a class-1 parameter equals class 0's or differs from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    Same,
    Diff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    /// Class 1 mean is `0` (same) or `t` (diff).
    pub mean_case: Case,
    /// Class 1 coefficient variances are `e^{−j/3}` (same) or `e^{−j/2}` (diff).
    pub sd_case: Case,
    pub n_modes: usize,
    /// Standard deviation of the pointwise measurement noise (A and B).
    pub noise_sd: f64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, mean_case: Case, sd_case: Case) -> Self {
        ScenarioSpec {
            scenario,
            mean_case,
            sd_case,
            n_modes: 50,
            noise_sd: 0.1,
        }
    }

    fn variance(&self, class: u32, j: usize) -> f64 {
        let j = j as f64;
        if class == 1 && self.sd_case == Case::Diff {
            (-j / 2.0).exp()
        } else {
            (-j / 3.0).exp()
        }
    }

    /// Basis coefficients `A_{j}` (divided by `B_i` in scenario C) of one curve.
    pub fn draw_coefficients(&self, class: u32, rng: &mut impl Rng) -> Vec<f64> {
        let mut coeffs: Vec<f64> = (1..=self.n_modes)
            .map(|j| {
                let sd = self.variance(class, j).sqrt();
                match self.scenario {
                    Scenario::A => sd * Distribution::<f64>::sample(&StandardNormal, rng),
                    Scenario::B | Scenario::C => {
                        let e: f64 = Exp::new(1.0 / sd).expect("positive rate").sample(rng);
                        e - sd
                    }
                }
            })
            .collect();
        if self.scenario == Scenario::C {
            let b = ChiSquared::new(30.0).expect("positive dof").sample(rng) / 30.0;
            coeffs.iter_mut().for_each(|c| *c /= b);
        }
        coeffs
    }
}

/// `φ_1 = 1`, `φ_{2k} = √2 cos(2πkt)`, `φ_{2k+1} = √2 sin(2πkt)`.
pub fn fourier_basis(j: usize, t: f64) -> f64 {
    use std::f64::consts::{PI, SQRT_2};
    match j {
        0 => panic!("Fourier basis is indexed from 1"),
        1 => 1.0,
        _ if j.is_multiple_of(2) => SQRT_2 * (2.0 * PI * (j / 2) as f64 * t).cos(),
        _ => SQRT_2 * (2.0 * PI * ((j - 1) / 2) as f64 * t).sin(),
    }
}

/// `n_per_class` curves of class 0 followed by `n_per_class` of class 1.
pub fn scenario_sample(
    spec: &ScenarioSpec,
    n_per_class: usize,
    grid: &Grid,
    seed: u64,
) -> Result<FunctionalSample> {
    if spec.n_modes == 0 {
        return invalid("scenario needs at least one basis function");
    }
    if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
        return invalid("noise standard deviation must be finite and nonnegative");
    }
    let t = grid.points();
    let p = t.len();
    let basis: Vec<Vec<f64>> = (1..=spec.n_modes)
        .map(|j| t.iter().map(|&ti| fourier_basis(j, ti)).collect())
        .collect();
    let noisy = spec.scenario != Scenario::C;
    let curves: Vec<Curve> = (0..2 * n_per_class)
        .into_par_iter()
        .map(|i| {
            let class = u32::from(i >= n_per_class);
            let mut rng = substream(seed, i as u64);
            let coeffs = spec.draw_coefficients(class, &mut rng);
            let mut values: Vec<f64> = if class == 1 && spec.mean_case == Case::Diff {
                t.to_vec()
            } else {
                vec![0.0; p]
            };
            for (c, phi) in coeffs.iter().zip(&basis) {
                for (v, f) in values.iter_mut().zip(phi) {
                    *v += c * f;
                }
            }
            if noisy {
                for v in values.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += spec.noise_sd * z;
                }
            }
            Curve::from(values)
        })
        .collect();
    let labels = (0..2 * n_per_class)
        .map(|i| u32::from(i >= n_per_class))
        .collect();
    FunctionalSample::new(grid.clone(), curves, Some(labels))
}
