//! Mean and covariance estimation for functional samples, robust FAST-MCD
//! estimation, and eigendecomposition of the covariance operator.
//!
//! The covariance operator `(𝒦f)(s) = ∫ K(s,t) f(t) dt` is discretized with
//! the grid's quadrature weights `W`. Its eigenproblem `K W v = λ v` is not
//! symmetric, so we solve the equivalent symmetric problem for
//! `A = W^{1/2} K W^{1/2}` and map eigenvectors back with `e = W^{-1/2} v`,
//! which makes the eigenfunctions orthonormal in the discrete `L²` product.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Error, Result};
use crate::funcspace::{Curve, FunctionalSample, Grid};
use crate::rng::substream;

/// Relative eigenvalue cut used when callers have no reason to pick another.
pub const DEFAULT_TOL_REL: f64 = 1e-12;

/// Covariance function `K(t_i, t_j)` tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CovKernel {
    grid: Grid,
    matrix: DMatrix<f64>,
}

impl CovKernel {
    pub fn new(grid: Grid, matrix: DMatrix<f64>) -> Result<Self> {
        let p = grid.len();
        if matrix.nrows() != p || matrix.ncols() != p {
            return invalid(format!(
                "covariance matrix is {}x{} but the grid has {p} points",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return invalid("covariance matrix has non-finite entries");
        }
        Ok(CovKernel { grid, matrix })
    }

    /// Tabulates a covariance function on the grid.
    pub fn from_fn(grid: &Grid, k: impl Fn(f64, f64) -> f64) -> Self {
        let t = grid.points();
        let p = t.len();
        let matrix = DMatrix::from_fn(p, p, |i, j| k(t[i], t[j]));
        CovKernel {
            grid: grid.clone(),
            matrix,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `W^{1/2} K W^{1/2}`, the symmetric matrix of the discretized operator.
    pub fn weighted(&self) -> DMatrix<f64> {
        let sw: Vec<f64> = self.grid.weights().iter().map(|w| w.sqrt()).collect();
        let p = sw.len();
        DMatrix::from_fn(p, p, |i, j| sw[i] * self.matrix[(i, j)] * sw[j])
    }

    /// `∫ K(t,t) dt` by quadrature.
    pub fn trace(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.matrix[(i, i)])
            .sum()
    }
}

/// Mean curve plus the retained eigenpairs of the covariance operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EigenSystemRepr")]
pub struct EigenSystem {
    grid: Grid,
    mean: Curve,
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Curve>,
}

#[derive(Deserialize)]
struct EigenSystemRepr {
    grid: Grid,
    mean: Curve,
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Curve>,
}

impl TryFrom<EigenSystemRepr> for EigenSystem {
    type Error = Error;

    fn try_from(r: EigenSystemRepr) -> Result<Self> {
        EigenSystem::new(r.grid, r.mean, r.eigenvalues, r.eigenfunctions)
    }
}

impl EigenSystem {
    /// Assembles an eigensystem from known parts, e.g. an analytic spectrum.
    ///
    /// Eigenvalues must be positive and nonincreasing; eigenfunctions must be
    /// orthonormal in the grid's `L²` product to within `1e−8`.
    pub fn new(
        grid: Grid,
        mean: Curve,
        eigenvalues: Vec<f64>,
        eigenfunctions: Vec<Curve>,
    ) -> Result<Self> {
        grid.check_aligned(&mean, "mean")?;
        if eigenvalues.len() != eigenfunctions.len() {
            return invalid(format!(
                "{} eigenvalues but {} eigenfunctions",
                eigenvalues.len(),
                eigenfunctions.len()
            ));
        }
        if eigenvalues.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return invalid("eigenvalues must be finite and positive");
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return invalid("eigenvalues must be nonincreasing");
        }
        for (i, e) in eigenfunctions.iter().enumerate() {
            grid.check_aligned(e, &format!("eigenfunction {i}"))?;
        }
        for i in 0..eigenfunctions.len() {
            for j in 0..=i {
                let ip = grid.dot(&eigenfunctions[i], &eigenfunctions[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                if (ip - target).abs() > 1e-8 {
                    return invalid(format!(
                        "eigenfunctions {i} and {j} are not orthonormal (inner product {ip})"
                    ));
                }
            }
        }
        Ok(EigenSystem {
            grid,
            mean,
            eigenvalues,
            eigenfunctions,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mean(&self) -> &Curve {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &[Curve] {
        &self.eigenfunctions
    }

    /// Number of retained eigenpairs.
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `⟨x, e_j⟩₂` for every retained eigenfunction.
    pub fn coefficients(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.grid.check_aligned(x, "curve")?;
        Ok(self.coefficients_unchecked(x))
    }

    pub(crate) fn coefficients_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.eigenfunctions
            .iter()
            .map(|e| self.grid.dot(x, e))
            .collect()
    }

    /// `Σ_j λ_j e_j(s) e_j(t)` on the grid.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let p = self.grid.len();
        let mut k = DMatrix::zeros(p, p);
        for (l, e) in self.eigenvalues.iter().zip(&self.eigenfunctions) {
            let v = DVector::from_column_slice(e);
            k += *l * &v * v.transpose();
        }
        k
    }

    /// Keeps only the first `k` eigenpairs.
    pub fn truncated(&self, k: usize) -> EigenSystem {
        let k = k.min(self.rank());
        EigenSystem {
            grid: self.grid.clone(),
            mean: self.mean.clone(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenfunctions: self.eigenfunctions[..k].to_vec(),
        }
    }
}

/// Pointwise mean of the curves.
pub fn sample_mean(sample: &FunctionalSample) -> Result<Curve> {
    let n = sample.len();
    if n == 0 {
        return invalid("cannot take the mean of an empty sample");
    }
    let mut acc = vec![0.0; sample.grid().len()];
    for c in sample.curves() {
        for (a, v) in acc.iter_mut().zip(c.iter()) {
            *a += v;
        }
    }
    let n = n as f64;
    Ok(Curve::from(
        acc.into_iter().map(|a| a / n).collect::<Vec<_>>(),
    ))
}

/// `K̂(t_i,t_j) = n⁻¹ Σ_k (X_k(t_i) − c(t_i))(X_k(t_j) − c(t_j))` with `c` the
/// sample mean unless `center` is given.
pub fn sample_covariance(sample: &FunctionalSample, center: Option<&Curve>) -> Result<CovKernel> {
    let n = sample.len();
    if n < 2 {
        return invalid(format!("covariance needs at least 2 curves, got {n}"));
    }
    let grid = sample.grid();
    let center = match center {
        Some(c) => {
            grid.check_aligned(c, "center")?;
            c.clone()
        }
        None => sample_mean(sample)?,
    };
    let p = grid.len();
    let mut centered = DMatrix::zeros(p, n);
    for (k, c) in sample.curves().iter().enumerate() {
        for i in 0..p {
            centered[(i, k)] = c[i] - center[i];
        }
    }
    let mut matrix = &centered * centered.transpose();
    matrix /= n as f64;
    // exact symmetry regardless of summation order
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(CovKernel {
        grid: grid.clone(),
        matrix,
    })
}

/// Eigendecomposes the covariance operator with quadrature weighting.
///
/// Eigenvalues at or below `tol_rel · λ_max` (including rounding-level
/// negatives) are dropped; at most `max_rank` pairs are kept. Each
/// eigenfunction's sign is fixed so that its largest-magnitude value is
/// positive.
pub fn eigendecompose(
    cov: &CovKernel,
    mean: &Curve,
    tol_rel: f64,
    max_rank: Option<usize>,
) -> Result<EigenSystem> {
    let grid = cov.grid();
    grid.check_aligned(mean, "mean")?;
    if tol_rel.is_nan() || tol_rel < 0.0 {
        return invalid("tol_rel must be nonnegative");
    }
    let k = cov.matrix();
    let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let p = grid.len();
    for i in 0..p {
        for j in 0..i {
            if (k[(i, j)] - k[(j, i)]).abs() > 1e-8 * scale {
                return invalid(format!("covariance matrix is not symmetric at ({i},{j})"));
            }
        }
    }
    let mut a = cov.weighted();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lmax = eig.eigenvalues[order[0]];
    if !lmax.is_finite() {
        return Err(Error::NumericFailure("eigenvalues are not finite".into()));
    }
    let cut = tol_rel * lmax.max(0.0);
    let limit = max_rank.unwrap_or(p);
    let inv_sw: Vec<f64> = grid.weights().iter().map(|w| 1.0 / w.sqrt()).collect();

    let mut eigenvalues = Vec::new();
    let mut eigenfunctions = Vec::new();
    for &j in order.iter().take(limit) {
        let l = eig.eigenvalues[j];
        if l.is_nan() || l <= cut || l <= 0.0 {
            break;
        }
        let v = eig.eigenvectors.column(j);
        let mut e: Vec<f64> = (0..p).map(|i| v[i] * inv_sw[i]).collect();
        let pivot = e.iter().copied().fold(
            0.0f64,
            |best, x| if x.abs() > best.abs() { x } else { best },
        );
        if pivot < 0.0 {
            e.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvalues.push(l);
        eigenfunctions.push(Curve::from(e));
    }
    Ok(EigenSystem {
        grid: grid.clone(),
        mean: mean.clone(),
        eigenvalues,
        eigenfunctions,
    })
}

/// Sample mean, sample covariance and their eigendecomposition in one go.
pub fn fit_empirical(sample: &FunctionalSample) -> Result<EigenSystem> {
    let mean = sample_mean(sample)?;
    let cov = sample_covariance(sample, Some(&mean))?;
    eigendecompose(&cov, &mean, DEFAULT_TOL_REL, None)
}

/// Settings for [`mcd_covariance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McdConfig {
    /// Subset size as a fraction of `n`, in `(0.5, 1]`.
    pub h_fraction: f64,
    /// Number of leading eigen-scores the search runs on; `None` means
    /// `min(10, n/5)`.
    pub k_dims: Option<usize>,
    /// Random starting subsets (at least 20).
    pub restarts: usize,
    /// Rescale the covariance inside the score subspace so it is consistent
    /// for Gaussian data.
    pub consistency: bool,
    pub seed: u64,
}

impl Default for McdConfig {
    fn default() -> Self {
        McdConfig {
            h_fraction: 0.75,
            k_dims: None,
            restarts: 50,
            consistency: true,
            seed: 0,
        }
    }
}

/// Robust location and scatter from FAST-MCD.
#[derive(Debug, Clone)]
pub struct McdEstimate {
    pub cov: CovKernel,
    pub mean: Curve,
    /// Indices of the selected `h`-subset, ascending.
    pub subset: Vec<usize>,
    /// `log det` of the subset covariance in score space.
    pub log_det: f64,
}

/// Minimum covariance determinant estimate of mean and covariance.
///
/// Curves are projected onto the leading `k_dims` empirical eigenfunctions;
/// FAST-MCD (random elemental starts followed by concentration steps) finds
/// the `h`-subset whose score covariance has the smallest determinant, and
/// the mean and covariance are then recomputed from that subset in curve
/// space. With `h = n` this returns the empirical estimates unchanged.
pub fn mcd_covariance(sample: &FunctionalSample, config: &McdConfig) -> Result<McdEstimate> {
    let n = sample.len();
    if !(config.h_fraction > 0.5 && config.h_fraction <= 1.0) {
        return invalid(format!(
            "h_fraction must lie in (0.5, 1], got {}",
            config.h_fraction
        ));
    }
    if n < 2 {
        return invalid(format!("MCD needs at least 2 curves, got {n}"));
    }
    let h = ((config.h_fraction * n as f64).ceil() as usize).min(n);
    if h == n {
        let mean = sample_mean(sample)?;
        let cov = sample_covariance(sample, Some(&mean))?;
        return Ok(McdEstimate {
            cov,
            mean,
            subset: (0..n).collect(),
            log_det: f64::NAN,
        });
    }
    let k = config.k_dims.unwrap_or_else(|| (n / 5).clamp(1, 10));
    if k == 0 || n < 2 * k {
        return invalid(format!(
            "k_dims = {k} needs at least {} curves, got {n}",
            2 * k
        ));
    }
    if h <= k {
        return invalid(format!("subset size {h} must exceed k_dims = {k}"));
    }
    let empirical = fit_empirical(sample)?;
    if empirical.rank() < k {
        return invalid(format!(
            "k_dims = {k} exceeds the empirical covariance rank {}",
            empirical.rank()
        ));
    }
    let basis = empirical.truncated(k);
    let scores: Vec<DVector<f64>> = sample
        .curves()
        .iter()
        .map(|c| DVector::from_vec(basis.coefficients_unchecked(&c.sub(basis.mean()))))
        .collect();

    let restarts = config.restarts.max(20);
    let runs: Vec<(f64, Vec<usize>)> = (0..restarts)
        .into_par_iter()
        .map(|r| concentrate(&scores, h, k, &mut substream(config.seed, r as u64)))
        .collect();
    // smallest determinant; ties go to the lowest restart index
    let (log_det, subset) = runs
        .into_iter()
        .reduce(|best, cand| if cand.0 < best.0 { cand } else { best })
        .expect("at least one restart");

    let chosen = sample.subset(&subset);
    let mean = sample_mean(&chosen)?;
    let mut cov = sample_covariance(&chosen, Some(&mean))?;
    if config.consistency {
        let factor = consistency_factor(h as f64 / n as f64, k);
        rescale_subspace(&mut cov, basis.eigenfunctions(), factor);
    }
    Ok(McdEstimate {
        cov,
        mean,
        subset,
        log_det,
    })
}

/// Gaussian consistency factor for a covariance computed from the fraction
/// `q` of points with the smallest Mahalanobis distances in `k` dimensions.
fn consistency_factor(q: f64, k: usize) -> f64 {
    let chi_k = ChiSquared::new(k as f64).expect("positive dof");
    let chi_k2 = ChiSquared::new(k as f64 + 2.0).expect("positive dof");
    let cutoff = chi_k.inverse_cdf(q);
    q / chi_k2.cdf(cutoff)
}

/// `K ← K + (c − 1)·P K P` with `P` the `L²` projector onto `span(basis)`.
fn rescale_subspace(cov: &mut CovKernel, basis: &[Curve], factor: f64) {
    let p = cov.grid.len();
    let k = basis.len();
    let w = cov.grid.weights();
    // B: p×k basis values, G = Bᵀ W K W B is the operator restricted to the span
    let b = DMatrix::from_fn(p, k, |i, j| basis[j][i]);
    let wb = DMatrix::from_fn(p, k, |i, j| w[i] * basis[j][i]);
    let g = wb.transpose() * &cov.matrix * &wb;
    let update = &b * g * b.transpose() * (factor - 1.0);
    cov.matrix += update;
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (cov.matrix[(i, j)] + cov.matrix[(j, i)]);
            cov.matrix[(i, j)] = v;
            cov.matrix[(j, i)] = v;
        }
    }
}

/// Mean and covariance (divisor = subset size) of the selected score rows.
fn subset_moments(
    scores: &[DVector<f64>],
    subset: &[usize],
    k: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let m = subset.len() as f64;
    let mut mean = DVector::zeros(k);
    for &i in subset {
        mean += &scores[i];
    }
    mean /= m;
    let mut cov = DMatrix::zeros(k, k);
    for &i in subset {
        let d = &scores[i] - &mean;
        cov += &d * d.transpose();
    }
    cov /= m;
    (mean, cov)
}

fn log_det_and_inverse(cov: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    let chol = cov.clone().cholesky()?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return None;
    }
    Some((log_det, chol.inverse()))
}

/// One FAST-MCD run: an elemental start followed by C-steps until the
/// determinant stops decreasing. Returns `(log det, sorted subset)`.
fn concentrate(
    scores: &[DVector<f64>],
    h: usize,
    k: usize,
    rng: &mut impl Rng,
) -> (f64, Vec<usize>) {
    let n = scores.len();
    let mut start = index::sample(rng, n, k + 1).into_vec();
    // grow the elemental set until its covariance is nonsingular
    let (mut mean, mut inv) = loop {
        let (mean, cov) = subset_moments(scores, &start, k);
        if let Some((_, inv)) = log_det_and_inverse(&cov) {
            break (mean, inv);
        }
        if start.len() >= n {
            return (f64::NEG_INFINITY, {
                let mut s = start;
                s.sort_unstable();
                s.truncate(h);
                s
            });
        }
        loop {
            let extra = rng.random_range(0..n);
            if !start.contains(&extra) {
                start.push(extra);
                break;
            }
        }
    };

    let mut best_log_det = f64::INFINITY;
    let mut subset: Vec<usize> = Vec::new();
    for _ in 0..200 {
        let mut dist: Vec<(f64, usize)> = scores
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let d = z - &mean;
                ((d.transpose() * &inv * &d)[(0, 0)], i)
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut next: Vec<usize> = dist[..h].iter().map(|&(_, i)| i).collect();
        next.sort_unstable();
        if next == subset {
            break;
        }
        let (m, cov) = subset_moments(scores, &next, k);
        match log_det_and_inverse(&cov) {
            Some((ld, new_inv)) => {
                if ld >= best_log_det {
                    break;
                }
                best_log_det = ld;
                subset = next;
                mean = m;
                inv = new_inv;
            }
            None => {
                // exact fit: the subset lies in a lower-dimensional affine space
                return (f64::NEG_INFINITY, next);
            }
        }
    }
    (best_log_det, subset)
}
