//! Regularized functional Mahalanobis distance for curves sampled on a grid.
//!
//! The distance between two curves `x` and `m` is computed from the
//! eigen-decomposition `(λ_j, e_j)` of the covariance operator of the
//! process they come from:
//!
//! ```text
//! M_α(x, m)² = Σ_j λ_j / (λ_j + α)² · ⟨x − m, e_j⟩²
//! ```
//!
//! which is the RKHS norm of the difference of the Tikhonov-smoothed curves
//! `x_α = (𝒦 + αI)⁻¹ 𝒦 x`. Unlike the plain RKHS norm the series converges
//! for every square-integrable curve, so `M_α` is a true metric on `L²[0,1]`.
//!
//! Module map:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`funcspace`] | grids, quadrature, discrete `L²` inner products |
//! | [`covariance`] | mean/covariance estimation, FAST-MCD, weighted eigendecomposition |
//! | [`mahalanobis`] | smoothing, `M_α`, RKHS norm, `d_FM^k`, depth |
//! | [`distribution`] | weighted χ² law of `M_α²`, Monte Carlo quantiles, α tuning |
//! | [`outliers`] | outlier detection and functional boxplots |
//! | [`classify`] | binary classification by `M_α`, CV, knn baseline |
//! | [`simulate`] | seeded generators for every benchmark model |

pub mod classify;
pub mod covariance;
pub mod distribution;
pub mod error;
pub mod funcspace;
pub mod mahalanobis;
pub mod outliers;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use funcspace::{Curve, FunctionalSample, Grid};
