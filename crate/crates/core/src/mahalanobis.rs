//! The α-regularized functional Mahalanobis distance.
//!
//! For a fitted eigensystem `(λ_j, e_j)` and `α > 0`:
//!
//! * smoothing: `x_α = Σ_j λ_j/(λ_j+α) ⟨x,e_j⟩ e_j`
//! * distance: `M_α(x,m)² = Σ_j λ_j/(λ_j+α)² ⟨x−m,e_j⟩²`
//!
//! All sums run over the retained spectrum; modes dropped by the rank cut
//! have `λ_j = 0` and contribute nothing.

use serde::{Deserialize, Serialize};

use crate::covariance::EigenSystem;
use crate::error::{invalid, Error, Result};
use crate::funcspace::Curve;

/// An eigensystem together with the regularization parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr")]
pub struct MahalanobisModel {
    eigsys: EigenSystem,
    alpha: f64,
}

#[derive(Deserialize)]
struct ModelRepr {
    eigsys: EigenSystem,
    alpha: f64,
}

impl TryFrom<ModelRepr> for MahalanobisModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        MahalanobisModel::new(r.eigsys, r.alpha)
    }
}

impl MahalanobisModel {
    pub fn new(eigsys: EigenSystem, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(MahalanobisModel { eigsys, alpha })
    }

    pub fn eigsys(&self) -> &EigenSystem {
        &self.eigsys
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Same eigensystem, different α.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        MahalanobisModel::new(self.eigsys.clone(), alpha)
    }

    /// The penalized projection `x_α = (𝒦 + αI)⁻¹ 𝒦 x`.
    pub fn smooth(&self, x: &[f64]) -> Result<Curve> {
        let coeffs = self.eigsys.coefficients(x)?;
        let mut out = Curve::zeros(x.len());
        for ((c, l), e) in coeffs
            .iter()
            .zip(self.eigsys.eigenvalues())
            .zip(self.eigsys.eigenfunctions())
        {
            out.axpy(l / (l + self.alpha) * c, e);
        }
        Ok(out)
    }

    /// `M_α(x, m)²`.
    pub fn distance_sq(&self, x: &[f64], m: &[f64]) -> Result<f64> {
        let grid = self.eigsys.grid();
        grid.check_aligned(x, "curve")?;
        grid.check_aligned(m, "reference curve")?;
        let diff: Vec<f64> = x.iter().zip(m).map(|(a, b)| a - b).collect();
        Ok(self.distance_sq_from_coeffs(&self.eigsys.coefficients_unchecked(&diff)))
    }

    /// `M_α(x, m)`.
    pub fn distance(&self, x: &[f64], m: &[f64]) -> Result<f64> {
        Ok(self.distance_sq(x, m)?.sqrt())
    }

    /// `M_α²` from precomputed coefficients `⟨x−m, e_j⟩`.
    pub fn distance_sq_from_coeffs(&self, coeffs: &[f64]) -> f64 {
        spectral_distance_sq(self.eigsys.eigenvalues(), coeffs, self.alpha)
    }

    /// `M_α(x, mean)²` to the model's own mean.
    pub fn distance_sq_to_mean(&self, x: &[f64]) -> Result<f64> {
        self.distance_sq(x, self.eigsys.mean())
    }

    /// Depth `(1 + M_α(x, mean)²)⁻¹`, in `(0, 1]`.
    pub fn depth(&self, x: &[f64]) -> Result<f64> {
        Ok(depth_from_distance_sq(self.distance_sq_to_mean(x)?))
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return invalid(format!("alpha must be finite and positive, got {alpha}"));
    }
    Ok(())
}

pub(crate) fn spectral_distance_sq(eigenvalues: &[f64], coeffs: &[f64], alpha: f64) -> f64 {
    eigenvalues
        .iter()
        .zip(coeffs)
        .map(|(l, c)| {
            let d = l + alpha;
            l / (d * d) * c * c
        })
        .sum()
}

pub fn depth_from_distance_sq(d2: f64) -> f64 {
    1.0 / (1.0 + d2)
}

/// Rank-truncated RKHS norm `(Σ_{j≤r} ⟨x,e_j⟩²/λ_j)^{1/2}`.
///
/// The full series diverges almost surely for trajectories of the process
/// itself; this is the finite-rank surrogate over the retained spectrum.
pub fn rkhs_norm(x: &[f64], eigsys: &EigenSystem) -> Result<f64> {
    let c = eigsys.coefficients(x)?;
    Ok(standardized_sum(eigsys.eigenvalues(), &c, c.len()).sqrt())
}

/// Truncated spectral semidistance `d_FM^k(x,m) = (Σ_{i≤k} ⟨x−m,e_i⟩²/λ_i)^{1/2}`.
pub fn dfm_semidistance(x: &[f64], m: &[f64], eigsys: &EigenSystem, k: usize) -> Result<f64> {
    if k == 0 || k > eigsys.rank() {
        return invalid(format!(
            "k = {k} must lie in 1..={} (retained rank)",
            eigsys.rank()
        ));
    }
    eigsys.grid().check_aligned(m, "reference curve")?;
    let diff: Vec<f64> = x.iter().zip(m).map(|(a, b)| a - b).collect();
    let c = eigsys.coefficients(&diff)?;
    Ok(standardized_sum(eigsys.eigenvalues(), &c, k).sqrt())
}

pub(crate) fn standardized_sum(eigenvalues: &[f64], coeffs: &[f64], k: usize) -> f64 {
    eigenvalues
        .iter()
        .zip(coeffs)
        .take(k)
        .map(|(l, c)| c * c / l)
        .sum()
}
