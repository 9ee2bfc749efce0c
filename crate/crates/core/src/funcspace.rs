//! Discrete stand-in for `L²[0,1]`: grids with quadrature weights, curves
//! sampled on them, and the weighted inner product every other module uses.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Sampling points in `[0,1]` with trapezoidal quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr")]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct GridRepr {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<GridRepr> for Grid {
    type Error = Error;

    fn try_from(repr: GridRepr) -> Result<Self> {
        Grid::with_weights(repr.points, repr.weights)
    }
}

impl Grid {
    /// `p` equispaced points `t_i = i/(p−1)` including both endpoints.
    pub fn uniform(p: usize) -> Result<Self> {
        if p < 2 {
            return invalid(format!("a grid needs at least 2 points, got {p}"));
        }
        let step = 1.0 / (p - 1) as f64;
        let points = (0..p)
            .map(|i| if i == p - 1 { 1.0 } else { i as f64 * step })
            .collect();
        let mut weights = vec![step; p];
        weights[0] = 0.5 * step;
        weights[p - 1] = 0.5 * step;
        Ok(Grid { points, weights })
    }

    /// Arbitrary strictly increasing points in `[0,1]`, trapezoidal weights.
    ///
    /// The weights integrate over `[t_1, t_p]`, so they sum to `t_p − t_1`.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        let p = points.len();
        if p < 2 {
            return invalid(format!("a grid needs at least 2 points, got {p}"));
        }
        check_points(&points)?;
        let mut weights = vec![0.0; p];
        for i in 0..p - 1 {
            let half = 0.5 * (points[i + 1] - points[i]);
            weights[i] += half;
            weights[i + 1] += half;
        }
        Ok(Grid { points, weights })
    }

    /// Points with caller-supplied positive weights.
    pub fn with_weights(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return invalid(format!(
                "a grid needs at least 2 points, got {}",
                points.len()
            ));
        }
        if points.len() != weights.len() {
            return invalid(format!(
                "{} grid points but {} weights",
                points.len(),
                weights.len()
            ));
        }
        check_points(&points)?;
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return invalid("quadrature weights must be finite and positive");
        }
        Ok(Grid { points, weights })
    }

    /// Keeps the points `≤ cut` and recomputes trapezoidal weights on them.
    pub fn truncate(&self, cut: f64) -> Result<Self> {
        let kept: Vec<f64> = self
            .points
            .iter()
            .copied()
            .take_while(|t| *t <= cut + 1e-12)
            .collect();
        Grid::from_points(kept)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Evaluates `f` at every grid point.
    pub fn curve_from_fn(&self, f: impl Fn(f64) -> f64) -> Curve {
        Curve(self.points.iter().map(|&t| f(t)).collect())
    }

    /// `Σ w_i f_i g_i` without alignment checks.
    pub(crate) fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub(crate) fn check_aligned(&self, values: &[f64], what: &str) -> Result<()> {
        if values.len() != self.len() {
            return invalid(format!(
                "{what} has {} values but the grid has {} points",
                values.len(),
                self.len()
            ));
        }
        Ok(())
    }
}

fn check_points(points: &[f64]) -> Result<()> {
    if points.iter().any(|t| !t.is_finite()) {
        return invalid("grid points must be finite");
    }
    if points[0] < 0.0 || points[points.len() - 1] > 1.0 {
        return invalid("grid points must lie in [0,1]");
    }
    if points.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("grid points must be strictly increasing");
    }
    Ok(())
}

/// Values of a function at the points of some [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Curve(Vec<f64>);

impl Curve {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("curve values must be finite");
        }
        Ok(Curve(values))
    }

    pub fn zeros(p: usize) -> Self {
        Curve(vec![0.0; p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// Pointwise `self − other`.
    pub fn sub(&self, other: &Curve) -> Curve {
        Curve(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Pointwise `self + other`.
    pub fn add(&self, other: &Curve) -> Curve {
        Curve(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scaled(&self, factor: f64) -> Curve {
        Curve(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self += factor · other`.
    pub fn axpy(&mut self, factor: f64, other: &Curve) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }
}

impl std::ops::Deref for Curve {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Curve {
    fn from(values: Vec<f64>) -> Self {
        Curve(values)
    }
}

/// A set of curves on one shared grid, optionally labelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    grid: Grid,
    curves: Vec<Curve>,
    labels: Option<Vec<u32>>,
}

impl FunctionalSample {
    pub fn new(grid: Grid, curves: Vec<Curve>, labels: Option<Vec<u32>>) -> Result<Self> {
        for (i, c) in curves.iter().enumerate() {
            grid.check_aligned(c, &format!("curve {i}"))?;
            if c.iter().any(|v| !v.is_finite()) {
                return invalid(format!("curve {i} has non-finite values"));
            }
        }
        if let Some(l) = &labels {
            if l.len() != curves.len() {
                return invalid(format!("{} labels for {} curves", l.len(), curves.len()));
            }
        }
        Ok(FunctionalSample {
            grid,
            curves,
            labels,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// The curves at `indices`, in that order, with their labels.
    pub fn subset(&self, indices: &[usize]) -> FunctionalSample {
        FunctionalSample {
            grid: self.grid.clone(),
            curves: indices.iter().map(|&i| self.curves[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Curves carrying `label`, unlabelled.
    pub fn class(&self, label: u32) -> Result<FunctionalSample> {
        let Some(labels) = &self.labels else {
            return invalid("sample has no labels");
        };
        let idx: Vec<usize> = (0..self.len()).filter(|&i| labels[i] == label).collect();
        let mut s = self.subset(&idx);
        s.labels = None;
        Ok(s)
    }

    /// Same values restricted to the first `grid.len()` points of each curve.
    pub(crate) fn restrict_to(&self, grid: Grid) -> FunctionalSample {
        let p = grid.len();
        FunctionalSample {
            curves: self
                .curves
                .iter()
                .map(|c| Curve(c.0[..p].to_vec()))
                .collect(),
            grid,
            labels: self.labels.clone(),
        }
    }
}

/// `⟨f, g⟩₂ = Σ w_i f_i g_i`.
pub fn l2_inner(f: &[f64], g: &[f64], grid: &Grid) -> Result<f64> {
    grid.check_aligned(f, "first curve")?;
    grid.check_aligned(g, "second curve")?;
    Ok(grid.dot(f, g))
}

/// `‖f‖₂`.
pub fn l2_norm(f: &[f64], grid: &Grid) -> Result<f64> {
    Ok(l2_inner(f, f, grid)?.sqrt())
}

/// Coefficients `(⟨x, b_1⟩₂, …, ⟨x, b_k⟩₂)`.
pub fn project_coeffs(x: &[f64], basis: &[Curve], grid: &Grid) -> Result<Vec<f64>> {
    grid.check_aligned(x, "curve")?;
    basis
        .iter()
        .enumerate()
        .map(|(j, b)| {
            grid.check_aligned(b, &format!("basis element {j}"))?;
            Ok(grid.dot(x, b))
        })
        .collect()
}
