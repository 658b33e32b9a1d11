//! Finite Borel measures discretized on a uniform one-dimensional trait grid.
//!
//! A [`GridMeasure`] stores the mass of every cell of a [`TraitGrid`]; all
//! integrals use the cell centers (midpoint rule). In one dimension the
//! Wasserstein-1 distance between two measures of equal mass is the L1 norm of
//! the cumulative distribution function of their difference, which on the grid
//! reduces to `dx * sum |Phi_i|`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute mass tolerance below which two measures count as equal-mass.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Uniform partition of `[x_min, x_max]` into `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraitGrid {
    x_min: f64,
    x_max: f64,
    n_cells: usize,
}

impl TraitGrid {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_min >= x_max {
            return Err(Error::InvalidGrid(format!(
                "x_min ({x_min}) must be smaller than x_max ({x_max})"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_cells,
        })
    }

    #[inline]
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    #[inline]
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Cell width.
    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    /// Left edge of cell `i`; `edge(n_cells)` is `x_max`.
    #[inline]
    pub fn edge(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Index of the cell containing `x`, clamped to the grid. `x_max` belongs
    /// to the last cell.
    pub fn cell_of(&self, x: f64) -> usize {
        let raw = ((x - self.x_min) / self.dx()).floor();
        if raw <= 0.0 || raw.is_nan() {
            0
        } else {
            (raw as usize).min(self.n_cells - 1)
        }
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.x_min, self.x_max)
    }
}

/// Non-negative cell weights over a [`TraitGrid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMeasure {
    grid: TraitGrid,
    weights: Vec<f64>,
}

impl GridMeasure {
    pub fn zeros(grid: TraitGrid) -> Self {
        Self {
            grid,
            weights: vec![0.0; grid.n_cells()],
        }
    }

    pub fn from_weights(grid: TraitGrid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.n_cells() {
            return Err(Error::InvalidMeasure(format!(
                "expected {} weights, got {}",
                grid.n_cells(),
                weights.len()
            )));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidMeasure(format!(
                "weight {i} is {w}, weights must be finite and non-negative"
            )));
        }
        Ok(Self { grid, weights })
    }

    /// Point mass placed in the cell that contains `x`.
    pub fn point_mass(grid: TraitGrid, x: f64, mass: f64) -> Self {
        let mut weights = vec![0.0; grid.n_cells()];
        weights[grid.cell_of(x)] = mass;
        Self { grid, weights }
    }

    /// Point mass at `x` split linearly between the two nearest cell centers,
    /// so that both mass and first moment are exact.
    pub fn interpolated_atom(grid: TraitGrid, x: f64, mass: f64) -> Self {
        let mut measure = Self::zeros(grid);
        measure.deposit(x, mass);
        measure
    }

    /// Uniform distribution of `mass` on `[lo, hi]`, weighted by cell overlap.
    pub fn uniform(grid: TraitGrid, lo: f64, hi: f64, mass: f64) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidMeasure(format!(
                "uniform needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        let weights: Vec<f64> = (0..grid.n_cells())
            .map(|i| {
                let a = grid.edge(i).max(lo);
                let b = grid.edge(i + 1).min(hi);
                (b - a).max(0.0)
            })
            .collect();
        Self::from_weights(grid, weights)?.with_mass(mass)
    }

    /// Normal density with the given mean and standard deviation sampled at
    /// cell centers and rescaled to `mass`.
    pub fn gaussian(grid: TraitGrid, mean: f64, sd: f64, mass: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(Error::InvalidMeasure(format!("sd must be positive, got {sd}")));
        }
        Self::from_density(grid, |z| (-0.5 * ((z - mean) / sd).powi(2)).exp(), mass)
    }

    /// Samples an (unnormalized) density at the cell centers and rescales the
    /// result to `mass`.
    pub fn from_density(grid: TraitGrid, density: impl Fn(f64) -> f64, mass: f64) -> Result<Self> {
        let weights = (0..grid.n_cells())
            .map(|i| density(grid.center(i)))
            .collect();
        Self::from_weights(grid, weights)?.with_mass(mass)
    }

    #[inline]
    pub fn grid(&self) -> &TraitGrid {
        &self.grid
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Raw moment `sum_i z_i^k w_i`.
    pub fn moment(&self, k: u32) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| self.grid.center(i).powi(k as i32) * w)
            .sum()
    }

    /// Absolute moment `sum_i |z_i|^gamma w_i`.
    pub fn abs_moment(&self, gamma: f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| self.grid.center(i).abs().powf(gamma) * w)
            .sum()
    }

    /// Mean of the normalized measure.
    pub fn mean(&self) -> Result<f64> {
        let mass = self.total_mass();
        if mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        Ok(self.moment(1) / mass)
    }

    /// Variance of the normalized measure.
    pub fn variance(&self) -> Result<f64> {
        let mean = self.mean()?;
        let mass = self.total_mass();
        Ok(self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| (self.grid.center(i) - mean).powi(2) * w)
            .sum::<f64>()
            / mass)
    }

    /// Returns the probability measure together with the original mass.
    pub fn normalize(&self) -> Result<(GridMeasure, f64)> {
        let mass = self.total_mass();
        if !(mass > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok((self.scaled(1.0 / mass), mass))
    }

    /// Same shape rescaled to total mass `mass`.
    pub fn with_mass(self, mass: f64) -> Result<Self> {
        if mass == 0.0 {
            return Ok(Self::zeros(self.grid));
        }
        let (unit, _) = self.normalize()?;
        Ok(unit.scaled(mass))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            weights: self.weights.iter().map(|w| w * factor).collect(),
        }
    }

    /// `self + factor * other`, rejected if the result would be negative.
    pub fn add_scaled(&self, other: &GridMeasure, factor: f64) -> Result<Self> {
        self.check_grid(other)?;
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| a + factor * b)
            .collect();
        Self::from_weights(self.grid, weights)
    }

    /// Convex combination `(1 - theta) * self + theta * other`.
    pub fn mix(&self, other: &GridMeasure, theta: f64) -> Result<Self> {
        self.check_grid(other)?;
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect();
        Self::from_weights(self.grid, weights)
    }

    /// Mixes in an interpolated atom so that the normalized mean becomes
    /// `target` while the total mass is unchanged. The atom weight starts at
    /// 10% and grows until the atom position fits inside the grid.
    pub fn with_mean(&self, target: f64) -> Result<Self> {
        let (unit, mass) = self.normalize()?;
        let current = unit.moment(1);
        if (current - target).abs() <= f64::EPSILON * (1.0 + target.abs()) {
            return Ok(self.clone());
        }
        if !(target > self.grid.center(0) && target < self.grid.center(self.grid.n_cells() - 1)) {
            return Err(Error::InvalidMeasure(format!(
                "target mean {target} lies outside the grid centers"
            )));
        }
        let mut theta = 0.1;
        loop {
            let position = (target - (1.0 - theta) * current) / theta;
            if position >= self.grid.center(0) && position <= self.grid.center(self.grid.n_cells() - 1) {
                let mut out = unit.scaled(1.0 - theta);
                out.deposit(position, theta);
                return Ok(out.scaled(mass));
            }
            theta = (theta * 1.5).min(1.0);
        }
    }

    /// Adds `mass` at `x` split between the two nearest cell centers.
    pub(crate) fn deposit(&mut self, x: f64, mass: f64) {
        let n = self.grid.n_cells();
        let pos = (x - self.grid.x_min()) / self.grid.dx() - 0.5;
        if pos <= 0.0 {
            self.weights[0] += mass;
        } else if pos >= (n - 1) as f64 {
            self.weights[n - 1] += mass;
        } else {
            let lower = pos.floor() as usize;
            let frac = pos - lower as f64;
            self.weights[lower] += mass * (1.0 - frac);
            self.weights[lower + 1] += mass * frac;
        }
    }

    pub(crate) fn check_grid(&self, other: &GridMeasure) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Cumulative distribution function of `self - other` at the cell centers.
    pub fn signed_cdf(&self, other: &GridMeasure) -> Result<SignedCdf> {
        self.check_grid(other)?;
        let mut running = 0.0;
        let values = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| {
                running += a - b;
                running
            })
            .collect();
        Ok(SignedCdf {
            grid: self.grid,
            values,
        })
    }

    /// Wasserstein-1 distance with the default mass tolerance.
    pub fn wasserstein1(&self, other: &GridMeasure) -> Result<f64> {
        self.wasserstein1_with_tolerance(other, MASS_TOLERANCE)
    }

    pub fn wasserstein1_with_tolerance(&self, other: &GridMeasure, mass_tol: f64) -> Result<f64> {
        self.check_grid(other)?;
        let (left, right) = (self.total_mass(), other.total_mass());
        if (left - right).abs() > mass_tol {
            return Err(Error::MassMismatch { left, right });
        }
        Ok(self.signed_cdf(other)?.l1_norm())
    }

    /// Total variation distance `sum_i |a_i - b_i|`.
    pub fn total_variation(&self, other: &GridMeasure) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }
}

/// CDF of a signed measure `mu - nu` sampled at the cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedCdf {
    grid: TraitGrid,
    values: Vec<f64>,
}

impl SignedCdf {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid(&self) -> &TraitGrid {
        &self.grid
    }

    /// `integral |Phi(x)| dx` for a piecewise-constant CDF.
    pub fn l1_norm(&self) -> f64 {
        self.grid.dx() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }
}

pub fn wasserstein1(a: &GridMeasure, b: &GridMeasure) -> Result<f64> {
    a.wasserstein1(b)
}

pub fn total_variation(a: &GridMeasure, b: &GridMeasure) -> Result<f64> {
    a.total_variation(b)
}
