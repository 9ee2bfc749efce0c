//! Sampling law of `M_α²` for Gaussian processes.
//!
//! If `X` is Gaussian with mean `m` and covariance eigenpairs `(λ_j, e_j)`,
//! then `M_α(X, target)² = Σ_j β_j Y_j` with `β_j = λ_j²/(λ_j+α)²` and `Y_j`
//! independent noncentral `χ²₁(γ_j)`, `γ_j = ⟨m − target, e_j⟩²/λ_j`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{sample_mean, EigenSystem};
use crate::error::{invalid, Result};
use crate::funcspace::FunctionalSample;
use crate::mahalanobis::{check_alpha, spectral_distance_sq, MahalanobisModel};
use crate::rng::substream;

const CHUNK: usize = 1024;

/// The law of `Σ_j β_j Y_j`, `Y_j ~ χ²₁(γ_j)` independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedChiSq {
    betas: Vec<f64>,
    noncentralities: Vec<f64>,
}

impl WeightedChiSq {
    pub fn new(betas: Vec<f64>, noncentralities: Vec<f64>) -> Result<Self> {
        if betas.len() != noncentralities.len() {
            return invalid(format!(
                "{} weights but {} noncentralities",
                betas.len(),
                noncentralities.len()
            ));
        }
        if betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return invalid("weights must be finite and nonnegative");
        }
        if noncentralities
            .iter()
            .any(|g| !(g.is_finite() && *g >= 0.0))
        {
            return invalid("noncentralities must be finite and nonnegative");
        }
        Ok(WeightedChiSq {
            betas,
            noncentralities,
        })
    }

    /// Central law of `M_α(X, m)²` for a spectrum.
    pub fn central(eigenvalues: &[f64], alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let betas = eigenvalues.iter().map(|l| beta(*l, alpha)).collect();
        Ok(WeightedChiSq {
            betas,
            noncentralities: vec![0.0; eigenvalues.len()],
        })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn noncentralities(&self) -> &[f64] {
        &self.noncentralities
    }

    /// `(Σ β_j(1+γ_j), 2 Σ β_j²(1+2γ_j))`.
    pub fn moments(&self) -> (f64, f64) {
        self.betas
            .iter()
            .zip(&self.noncentralities)
            .fold((0.0, 0.0), |(m, v), (b, g)| {
                (m + b * (1.0 + g), v + 2.0 * b * b * (1.0 + 2.0 * g))
            })
    }

    /// `n_mc` independent draws; identical for a given seed no matter how
    /// the work is scheduled.
    pub fn sample(&self, n_mc: usize, seed: u64) -> Vec<f64> {
        let shifts: Vec<f64> = self.noncentralities.iter().map(|g| g.sqrt()).collect();
        let chunks = n_mc.div_ceil(CHUNK);
        let mut draws: Vec<f64> = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = substream(seed, c as u64);
                let len = CHUNK.min(n_mc - c * CHUNK);
                let shifts = &shifts;
                (0..len)
                    .map(move |_| {
                        self.betas
                            .iter()
                            .zip(shifts)
                            .map(|(b, s)| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                let y = z + s;
                                b * y * y
                            })
                            .sum::<f64>()
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        draws.truncate(n_mc);
        draws
    }
}

fn beta(lambda: f64, alpha: f64) -> f64 {
    let r = lambda / (lambda + alpha);
    r * r
}

/// Law of `M_α(X, target)²` when `X` has the mean and spectrum of `eigsys`.
pub fn wcs_from_model(eigsys: &EigenSystem, alpha: f64, target: &[f64]) -> Result<WeightedChiSq> {
    check_alpha(alpha)?;
    let shift: Vec<f64> = eigsys
        .mean()
        .iter()
        .zip(target)
        .map(|(m, t)| m - t)
        .collect();
    let mu = eigsys.coefficients(&shift)?;
    let betas = eigsys
        .eigenvalues()
        .iter()
        .map(|l| beta(*l, alpha))
        .collect();
    let noncentralities = mu
        .iter()
        .zip(eigsys.eigenvalues())
        .map(|(m, l)| m * m / l)
        .collect();
    Ok(WeightedChiSq {
        betas,
        noncentralities,
    })
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn empirical_quantile(draws: &[f64], q: f64) -> Result<f64> {
    if draws.is_empty() {
        return invalid("quantile of an empty sample");
    }
    if !(0.0..=1.0).contains(&q) {
        return invalid(format!("quantile level must lie in [0,1], got {q}"));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&sorted, q))
}

pub(crate) fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// `√n · M_α(X̄, m0)` for the model fitted on `sample`.
///
/// Under `H₀: m = m0` its square is asymptotically distributed as the
/// central law of the model ([`WeightedChiSq::central`]).
pub fn sqrt_n_mean_stat(
    sample: &FunctionalSample,
    m0: &[f64],
    model: &MahalanobisModel,
) -> Result<f64> {
    let xbar = sample_mean(sample)?;
    let d = model.distance(&xbar, m0)?;
    Ok((sample.len() as f64).sqrt() * d)
}

/// Outcome of [`mean_test`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanTest {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
}

/// Tests `H₀: m = m0` with `√n M_α(X̄, m0)` against Monte Carlo draws of its
/// limiting law; `critical_value` is the `level` quantile of the statistic.
pub fn mean_test(
    sample: &FunctionalSample,
    m0: &[f64],
    model: &MahalanobisModel,
    level: f64,
    n_mc: usize,
    seed: u64,
) -> Result<MeanTest> {
    if n_mc == 0 {
        return invalid("n_mc must be positive");
    }
    let statistic = sqrt_n_mean_stat(sample, m0, model)?;
    let law = WeightedChiSq::central(model.eigsys().eigenvalues(), model.alpha())?;
    let draws = law.sample(n_mc, seed);
    let critical_value = empirical_quantile(&draws, level)?.sqrt();
    let s2 = statistic * statistic;
    let exceed = draws.iter().filter(|d| **d >= s2).count();
    Ok(MeanTest {
        statistic,
        critical_value,
        p_value: exceed as f64 / n_mc as f64,
    })
}

/// Silverman's rule-of-thumb bandwidth `0.9·min(sd, IQR/1.34)·n^{-1/5}`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        // degenerate sample: fall back to a scale relative to the values
        1e-6 * mean.abs().max(1e-12)
    }
}

fn gaussian_kde(values: &[f64], bandwidth: f64, x: f64) -> f64 {
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    values
        .iter()
        .map(|v| {
            let u = (x - v) / bandwidth;
            (-0.5 * u * u).exp()
        })
        .sum::<f64>()
        * norm
}

/// `KL(p ‖ q)` between Gaussian kernel density estimates of two samples.
///
/// Both densities use Silverman bandwidths and are evaluated on 512 points
/// spanning both samples (padded by three bandwidths); the integrand is
/// restricted to points where both densities exceed `1e−12` and integrated
/// with the trapezoid rule.
pub fn kl_divergence_kde(observed: &[f64], reference: &[f64]) -> Result<f64> {
    if observed.len() < 2 || reference.len() < 2 {
        return invalid("KL estimation needs at least two values in each sample");
    }
    let hp = silverman_bandwidth(observed);
    let hq = silverman_bandwidth(reference);
    let pad = 3.0 * hp.max(hq);
    let lo = observed
        .iter()
        .chain(reference)
        .fold(f64::INFINITY, |a, b| a.min(*b))
        - pad;
    let hi = observed
        .iter()
        .chain(reference)
        .fold(f64::NEG_INFINITY, |a, b| a.max(*b))
        + pad;
    const POINTS: usize = 512;
    let step = (hi - lo) / (POINTS - 1) as f64;
    let integrand: Vec<f64> = (0..POINTS)
        .into_par_iter()
        .map(|i| {
            let x = lo + i as f64 * step;
            let p = gaussian_kde(observed, hp, x);
            let q = gaussian_kde(reference, hq, x);
            if p > 1e-12 && q > 1e-12 {
                p * (p / q).ln()
            } else {
                0.0
            }
        })
        .collect();
    let inner: f64 = integrand[1..POINTS - 1].iter().sum();
    Ok(step * (inner + 0.5 * (integrand[0] + integrand[POINTS - 1])))
}

/// Result of [`tune_alpha_kl`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTuning {
    pub alpha: f64,
    /// `(α, KL)` for every candidate, in grid order.
    pub divergences: Vec<(f64, f64)>,
}

/// Picks the α whose observed `M_α²` values are closest, in KL divergence,
/// to draws from the central Gaussian law of the same model.
///
/// Distances are taken from each curve of `sample` to `eigsys.mean()`. The
/// same Monte Carlo seed is used for every candidate. Ties go to the
/// smallest α.
pub fn tune_alpha_kl(
    sample: &FunctionalSample,
    eigsys: &EigenSystem,
    alpha_grid: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<AlphaTuning> {
    if alpha_grid.is_empty() {
        return invalid("alpha grid is empty");
    }
    if sample.len() < 2 {
        return invalid("alpha tuning needs at least two curves");
    }
    if n_mc < 2 {
        return invalid("n_mc must be at least 2");
    }
    for a in alpha_grid {
        check_alpha(*a)?;
    }
    let coeffs: Vec<Vec<f64>> = sample
        .curves()
        .iter()
        .map(|c| eigsys.coefficients(&c.sub(eigsys.mean())))
        .collect::<Result<_>>()?;
    let mut divergences = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        let observed: Vec<f64> = coeffs
            .iter()
            .map(|c| spectral_distance_sq(eigsys.eigenvalues(), c, alpha))
            .collect();
        let reference = WeightedChiSq::central(eigsys.eigenvalues(), alpha)?.sample(n_mc, seed);
        divergences.push((alpha, kl_divergence_kde(&observed, &reference)?));
    }
    let best = divergences
        .iter()
        .copied()
        .reduce(|best, cand| {
            if cand.1 < best.1 || (cand.1 == best.1 && cand.0 < best.0) {
                cand
            } else {
                best
            }
        })
        .expect("nonempty grid");
    Ok(AlphaTuning {
        alpha: best.0,
        divergences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{eigendecompose, CovKernel, DEFAULT_TOL_REL};
    use crate::funcspace::{Curve, Grid};

    #[test]
    fn central_target_has_zero_noncentrality() {
        let g = Grid::uniform(30).unwrap();
        let mean = g.curve_from_fn(|t| t * t);
        let k = CovKernel::from_fn(&g, f64::min);
        let es = eigendecompose(&k, &mean, DEFAULT_TOL_REL, None).unwrap();
        let law = wcs_from_model(&es, 0.01, &mean).unwrap();
        assert!(law.noncentralities().iter().all(|g| *g == 0.0));
        for (b, l) in law.betas().iter().zip(es.eigenvalues()) {
            assert!((b - l * l / ((l + 0.01) * (l + 0.01))).abs() < 1e-12);
            assert!(*b > 0.0 && *b < 1.0);
        }
        assert!(law.betas().windows(2).all(|w| w[0] >= w[1]));
        assert!(wcs_from_model(&es, 0.0, &mean).is_err());
    }

    #[test]
    fn single_mode_closed_form() {
        let g = Grid::uniform(3).unwrap();
        let e1 = Curve::from(vec![1.0, 1.0, 1.0]);
        let es = EigenSystem::new(g, e1.clone(), vec![1.0], vec![e1]).unwrap();
        // m − target = e1
        let law = wcs_from_model(&es, 1.0, &[0.0, 0.0, 0.0]).unwrap();
        assert!((law.betas()[0] - 0.25).abs() < 1e-15);
        assert!((law.noncentralities()[0] - 1.0).abs() < 1e-15);

        let central = WeightedChiSq::central(&[1.0], 1.0).unwrap();
        let (m, v) = central.moments();
        assert!((m - 0.25).abs() < 1e-15 && (v - 0.125).abs() < 1e-15);
        let (m, v) = WeightedChiSq::central(&[1.0, 0.5], 1e12).unwrap().moments();
        assert!(m < 1e-20 && v < 1e-40);
    }

    #[test]
    fn empty_spectrum_draws_zero() {
        let law = WeightedChiSq::new(vec![], vec![]).unwrap();
        assert!(law.sample(100, 1).iter().all(|d| *d == 0.0));
    }

    #[test]
    fn chi_square_one_mean() {
        let law = WeightedChiSq::new(vec![1.0], vec![0.0]).unwrap();
        let d = law.sample(100_000, 9);
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        assert!((mean - 1.0).abs() <= 3.0 * (2.0f64 / 1e5).sqrt());
    }

    #[test]
    fn sampling_is_deterministic() {
        let law = WeightedChiSq::new(vec![0.7, 0.2], vec![0.5, 0.0]).unwrap();
        assert_eq!(law.sample(5000, 3), law.sample(5000, 3));
        assert_ne!(law.sample(10, 3), law.sample(10, 4));
        assert_eq!(law.sample(2500, 3)[..], law.sample(5000, 3)[..2500]);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(
            empirical_quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(),
            3.0
        );
        assert_eq!(empirical_quantile(&[5.0, 1.0, 3.0], 1.0).unwrap(), 5.0);
        assert!((empirical_quantile(&[1.0, 2.0], 0.25).unwrap() - 1.25).abs() < 1e-15);
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&[1.0], 1.5).is_err());
    }

    #[test]
    fn uniform_quantile_matches_analytic() {
        use rand::Rng;
        let mut rng = substream(2, 0);
        let u: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        assert!((empirical_quantile(&u, 0.95).unwrap() - 0.95).abs() <= 0.01);
    }

    #[test]
    fn kl_of_identical_samples_is_near_zero() {
        let law = WeightedChiSq::new(vec![1.0, 0.5], vec![0.0, 0.0]).unwrap();
        let a = law.sample(2000, 1);
        let b = law.sample(2000, 2);
        let same = kl_divergence_kde(&a, &b).unwrap();
        let shifted: Vec<f64> = a.iter().map(|v| v * 3.0).collect();
        let far = kl_divergence_kde(&shifted, &b).unwrap();
        assert!(same.abs() < 0.05, "{same}");
        assert!(far > 10.0 * same.abs());
        assert!(kl_divergence_kde(&[1.0], &b).is_err());
    }
}
