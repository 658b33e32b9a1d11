//! Sampled certificates for the two kernel hypotheses that make the birth
//! operator contract, and for the mean-parent condition.
//!
//! Condition (i) bounds `int |d/dx K(a, y, z) - d/dx K(b, y, z)| dz` below 1,
//! where `K(x, y, .)` is the CDF of `k(x, y, .)`. Condition (ii) asks for a
//! moment bound `int |z|^g P(mu, nu)(dz) <= C + L max(int |x|^g mu, int |x|^g nu)`
//! with `L < 1` over measures whose means lie in `[alpha, beta]`. Both are
//! checked on finitely many samples, so a pass is evidence, not a proof.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::upper_hull_slope;
use crate::measures::{GridMeasure, TraitGrid};

use super::{row_mean, BirthOperator, InheritanceKernel};

/// Rows losing more than this to truncation are skipped by the mean check.
const MEAN_CHECK_TAIL_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisConfig {
    /// Number of sampled `(a, b, y)` triples for condition (i).
    pub triples: usize,
    /// Number of sampled measure pairs for condition (ii).
    pub pairs: usize,
    /// Number of sampled parent pairs for the mean condition.
    pub mean_samples: usize,
    pub gamma: f64,
    /// Trait interval the samples are drawn from; defaults to the middle half
    /// of the grid.
    pub region: Option<(f64, f64)>,
    /// `[alpha, beta]` for the means of the condition (ii) measures; defaults
    /// to the middle quarter of the region.
    pub mean_range: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        Self {
            triples: 64,
            pairs: 200,
            mean_samples: 64,
            gamma: 2.0,
            region: None,
            mean_range: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionTwo {
    pub gamma: f64,
    pub c_est: f64,
    pub l_est: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub condition_i_max: f64,
    pub condition_ii: ConditionTwo,
    pub mean_condition_max_error: f64,
    pub samples: usize,
    /// Largest mass a birth-operator row lost at the grid ends.
    pub max_tail_mass: f64,
}

/// `int |d/dx K(a, y, z) - d/dx K(b, y, z)| dz`, with the derivative taken by
/// central differences of step `dx / 2` on the grid CDFs of the rows.
pub fn condition_i_contribution(
    kernel: &InheritanceKernel,
    a: f64,
    b: f64,
    y: f64,
    grid: &TraitGrid,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let h = 0.5 * grid.dx();
    let da = cdf_derivative(kernel, a, y, h, grid)?;
    let db = cdf_derivative(kernel, b, y, h, grid)?;
    Ok(grid.dx() * da.iter().zip(&db).map(|(u, v)| (u - v).abs()).sum::<f64>())
}

fn cdf_derivative(
    kernel: &InheritanceKernel,
    x: f64,
    y: f64,
    h: f64,
    grid: &TraitGrid,
) -> Result<Vec<f64>> {
    let plus = kernel.row(x + h, y, grid)?.masses;
    let minus = kernel.row(x - h, y, grid)?.masses;
    let (mut cp, mut cm) = (0.0, 0.0);
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| {
            cp += p;
            cm += m;
            (cp - cm) / (2.0 * h)
        })
        .collect())
}

/// Largest `|mean(k(x, y, .)) - (x + y) / 2|` over `samples` random parent
/// pairs in `region`. Rows that lose more than `1e-6` to truncation are
/// skipped; if all are skipped the result is 0.
pub fn mean_condition_error(
    kernel: &InheritanceKernel,
    grid: &TraitGrid,
    region: (f64, f64),
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = rng.random_range(region.0..=region.1);
        let y = rng.random_range(region.0..=region.1);
        let row = kernel.row(x, y, grid)?;
        if row.tail_mass > MEAN_CHECK_TAIL_LIMIT {
            continue;
        }
        worst = worst.max((row_mean(&row, grid) - 0.5 * (x + y)).abs());
    }
    Ok(worst)
}

pub fn check_hypotheses(
    kernel: &InheritanceKernel,
    grid: &TraitGrid,
    config: &HypothesisConfig,
) -> Result<HypothesisReport> {
    if !kernel.has_density() {
        return Err(Error::UnsupportedKernel(
            "hypothesis checks need kernel densities".into(),
        ));
    }
    if !(config.gamma > 1.0) {
        return Err(Error::InvalidParameters(format!(
            "gamma must exceed 1, got {}",
            config.gamma
        )));
    }
    let width = grid.x_max() - grid.x_min();
    let region = config.region.unwrap_or((
        grid.x_min() + 0.25 * width,
        grid.x_max() - 0.25 * width,
    ));
    if !(region.0 < region.1) || !grid.contains(region.0) || !grid.contains(region.1) {
        return Err(Error::InvalidParameters(format!(
            "sampling region {region:?} must be a nonempty interval inside the grid"
        )));
    }
    let mid = 0.5 * (region.0 + region.1);
    let span = region.1 - region.0;
    let mean_range = config
        .mean_range
        .unwrap_or((mid - span / 8.0, mid + span / 8.0));
    if !(mean_range.0 <= mean_range.1 && mean_range.0 > region.0 && mean_range.1 < region.1) {
        return Err(Error::InvalidParameters(format!(
            "mean range {mean_range:?} must lie strictly inside the region {region:?}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut condition_i_max: f64 = 0.0;
    for _ in 0..config.triples {
        let a = rng.random_range(region.0..=region.1);
        let b = rng.random_range(region.0..=region.1);
        let y = rng.random_range(region.0..=region.1);
        condition_i_max = condition_i_max.max(condition_i_contribution(kernel, a, b, y, grid)?);
    }

    let op = BirthOperator::new(kernel, *grid)?;
    let mut points = Vec::with_capacity(config.pairs);
    for _ in 0..config.pairs {
        // Diagonal pairs: with independent parents the output moment
        // scatters below the line and the hull tail turns over.
        let mu = two_atom_measure(*grid, region, mean_range, &mut rng);
        let x = mu.abs_moment(config.gamma);
        let y = op.apply(&mu, &mu)?.abs_moment(config.gamma);
        points.push((x, y));
    }
    let l_est = upper_hull_slope(&points, 0.75);
    let c_est = points
        .iter()
        .map(|(x, y)| y - l_est * x)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);

    let mean_condition_max_error =
        mean_condition_error(kernel, grid, region, config.mean_samples, rng.random())?;

    Ok(HypothesisReport {
        condition_i_max,
        condition_ii: ConditionTwo {
            gamma: config.gamma,
            c_est,
            l_est,
            holds: l_est < 1.0,
        },
        mean_condition_max_error,
        samples: 3 * config.triples + config.pairs + config.mean_samples,
        max_tail_mass: op.max_tail_mass(),
    })
}

/// Probability measure with two interpolated atoms in `region` and mean drawn
/// from `mean_range`.
fn two_atom_measure<R: Rng + ?Sized>(
    grid: TraitGrid,
    region: (f64, f64),
    mean_range: (f64, f64),
    rng: &mut R,
) -> GridMeasure {
    let mean = rng.random_range(mean_range.0..=mean_range.1);
    let lo = rng.random_range(region.0..mean);
    let hi = rng.random_range(mean..=region.1);
    let w = (hi - mean) / (hi - lo);
    let mut out = GridMeasure::interpolated_atom(grid, lo, w);
    out.deposit(hi, 1.0 - w);
    out
}
