//! Inheritance kernels `k(x, y, dz)`: the law of an offspring trait given the
//! parental traits `x` and `y`.
//!
//! Two families are built in. With additive noise the offspring trait is
//! `(x + y) / 2 + Z`; with multiplicative noise it is `(x + y) * Z` for a
//! `[0, 1]`-valued `Z` of mean one half. Both satisfy the mean-parent
//! condition `E[z] = (x + y) / 2`. On a grid a kernel row is the vector of
//! cell probabilities, truncated to the grid and renormalized.

mod birth;
mod hypotheses;
mod noise;

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::measures::{GridMeasure, TraitGrid};

pub use birth::{birth_operator, birth_operator_exact, BirthOperator};
pub use hypotheses::{
    check_hypotheses, condition_i_contribution, mean_condition_error, ConditionTwo,
    HypothesisConfig, HypothesisReport,
};
pub use noise::{NoiseDensity, TabulatedDensity};

/// Density `kappa(x, y, z)` of a user supplied kernel.
pub type DensityFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// Sampler for kernels that only expose draws.
pub type SamplerFn = Arc<dyn Fn(f64, f64, &mut dyn RngCore) -> f64 + Send + Sync>;

/// Points used to invert the CDF of a custom kernel when sampling.
const CUSTOM_SAMPLING_POINTS: usize = 4096;

#[derive(Clone)]
pub enum InheritanceKernel {
    AdditiveNoise(NoiseDensity),
    MultiplicativeNoise(NoiseDensity),
    Custom(CustomKernel),
    SamplingOnly(SamplerFn),
}

/// Kernel given by a density in `z` supported on `support`.
#[derive(Clone)]
pub struct CustomKernel {
    density: DensityFn,
    support: (f64, f64),
}

impl fmt::Debug for InheritanceKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AdditiveNoise(h) => f.debug_tuple("AdditiveNoise").field(h).finish(),
            Self::MultiplicativeNoise(h) => f.debug_tuple("MultiplicativeNoise").field(h).finish(),
            Self::Custom(c) => f
                .debug_struct("Custom")
                .field("support", &c.support)
                .finish_non_exhaustive(),
            Self::SamplingOnly(_) => f.write_str("SamplingOnly"),
        }
    }
}

/// Cell probabilities of one kernel row together with the mass lost to
/// truncation before renormalization.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRow {
    pub masses: Vec<f64>,
    pub tail_mass: f64,
}

impl InheritanceKernel {
    /// Offspring trait `(x + y) / 2 + Z` with `Z ~ h`.
    pub fn additive(h: NoiseDensity) -> Self {
        Self::AdditiveNoise(h)
    }

    /// Offspring trait `(x + y) * Z`; `Z ~ h` must live on `[0, 1]` and have
    /// mean one half.
    pub fn multiplicative(h: NoiseDensity) -> Result<Self> {
        let (lo, hi) = h.support();
        if lo < 0.0 || hi > 1.0 {
            return Err(Error::InvalidKernel(format!(
                "multiplicative noise must be supported in [0, 1], got [{lo}, {hi}]"
            )));
        }
        if (h.mean() - 0.5).abs() > 1e-9 {
            return Err(Error::InvalidKernel(format!(
                "multiplicative noise must have mean 1/2, got {}",
                h.mean()
            )));
        }
        Ok(Self::MultiplicativeNoise(h))
    }

    pub fn custom(
        density: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
    ) -> Result<Self> {
        if !(support.0 < support.1) {
            return Err(Error::InvalidKernel(format!(
                "custom kernel support must satisfy lo < hi, got {support:?}"
            )));
        }
        Ok(Self::Custom(CustomKernel {
            density: Arc::new(density),
            support,
        }))
    }

    pub fn sampling_only(
        sampler: impl Fn(f64, f64, &mut dyn RngCore) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::SamplingOnly(Arc::new(sampler))
    }

    /// Loads a kernel tabulated as CSV with header `x,y,z,density`. Rows
    /// sharing the same parental pair form one density in `z`; lookups use the
    /// nearest tabulated pair, with `(x, y)` and `(y, x)` treated alike.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::InvalidKernel(format!("{}: {e}", path.display())))?;
        let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
        for record in reader.deserialize() {
            let row: (f64, f64, f64, f64) = record
                .map_err(|e| Error::InvalidKernel(format!("{}: {e}", path.display())))?;
            rows.push(row);
        }
        let table = TabulatedKernel::from_rows(rows)?;
        let support = table.support;
        Self::custom(move |x, y, z| table.density(x, y, z), support)
    }

    /// Whether the kernel exposes densities (and therefore grid rows).
    pub fn has_density(&self) -> bool {
        !matches!(self, Self::SamplingOnly(_))
    }

    /// Grid cell probabilities of `k(x, y, .)`, renormalized after truncation.
    pub fn row(&self, x: f64, y: f64, grid: &TraitGrid) -> Result<KernelRow> {
        let n = grid.n_cells();
        let raw: Vec<f64> = match self {
            Self::AdditiveNoise(h) => {
                let mid = 0.5 * (x + y);
                (0..n)
                    .map(|i| h.interval_prob(grid.edge(i) - mid, grid.edge(i + 1) - mid))
                    .collect()
            }
            Self::MultiplicativeNoise(h) => multiplicative_masses(h, x + y, grid),
            Self::Custom(c) => {
                let dx = grid.dx();
                (0..n)
                    .map(|i| ((c.density)(x, y, grid.center(i)) * dx).max(0.0))
                    .collect()
            }
            Self::SamplingOnly(_) => {
                return Err(Error::UnsupportedKernel(
                    "sampling-only kernels have no density rows".into(),
                ))
            }
        };
        normalize_row(raw, x, y)
    }

    /// Density values of `k(x, y, .)` at the cell centers; they sum to
    /// `1 / dx`.
    pub fn density_row(&self, x: f64, y: f64, grid: &TraitGrid) -> Result<Vec<f64>> {
        let dx = grid.dx();
        Ok(self
            .row(x, y, grid)?
            .masses
            .into_iter()
            .map(|m| m / dx)
            .collect())
    }

    /// Draws an offspring trait for parents `x` and `y`.
    pub fn sample_offspring<R: Rng + ?Sized>(&self, x: f64, y: f64, rng: &mut R) -> f64 {
        match self {
            Self::AdditiveNoise(h) => 0.5 * (x + y) + h.sample(rng),
            Self::MultiplicativeNoise(h) => (x + y) * h.sample(rng),
            Self::Custom(c) => c.sample(x, y, rng),
            Self::SamplingOnly(f) => {
                let mut wrapped = DynRng(rng);
                f(x, y, &mut wrapped)
            }
        }
    }
}

struct DynRng<'a, R: ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for DynRng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

impl CustomKernel {
    fn sample<R: Rng + ?Sized>(&self, x: f64, y: f64, rng: &mut R) -> f64 {
        let (lo, hi) = self.support;
        let step = (hi - lo) / CUSTOM_SAMPLING_POINTS as f64;
        let mut cumulative = Vec::with_capacity(CUSTOM_SAMPLING_POINTS);
        let mut acc = 0.0;
        for i in 0..CUSTOM_SAMPLING_POINTS {
            acc += (self.density)(x, y, lo + (i as f64 + 0.5) * step).max(0.0);
            cumulative.push(acc);
        }
        let u = rng.random::<f64>() * acc;
        let i = cumulative.partition_point(|c| *c <= u).min(CUSTOM_SAMPLING_POINTS - 1);
        let below = if i == 0 { 0.0 } else { cumulative[i - 1] };
        let cell = cumulative[i] - below;
        let frac = if cell > 0.0 { (u - below) / cell } else { 0.5 };
        lo + (i as f64 + frac) * step
    }
}

/// Cell probabilities of `s * Z` for `Z ~ h` on `[0, 1]`.
pub(crate) fn multiplicative_masses(h: &NoiseDensity, s: f64, grid: &TraitGrid) -> Vec<f64> {
    let n = grid.n_cells();
    if s == 0.0 {
        let mut masses = vec![0.0; n];
        if grid.contains(0.0) {
            masses[grid.cell_of(0.0)] = 1.0;
        }
        return masses;
    }
    (0..n)
        .map(|i| {
            let (a, b) = (grid.edge(i) / s, grid.edge(i + 1) / s);
            if s > 0.0 {
                h.interval_prob(a, b)
            } else {
                h.interval_prob(b, a)
            }
        })
        .collect()
}

pub(crate) fn normalize_row(mut raw: Vec<f64>, x: f64, y: f64) -> Result<KernelRow> {
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateRow { x, y });
    }
    raw.iter_mut().for_each(|m| *m /= total);
    Ok(KernelRow {
        masses: raw,
        tail_mass: (1.0 - total).max(0.0),
    })
}

/// Kernel rows read from a table, one density in `z` per parental pair.
struct TabulatedKernel {
    pairs: Vec<(f64, f64)>,
    densities: Vec<TabulatedDensity>,
    support: (f64, f64),
}

impl TabulatedKernel {
    fn from_rows(mut rows: Vec<(f64, f64, f64, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidKernel("kernel table is empty".into()));
        }
        rows.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.total_cmp(&b.2))
        });
        let mut pairs = Vec::new();
        let mut densities = Vec::new();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut start = 0;
        while start < rows.len() {
            let (x, y) = (rows[start].0, rows[start].1);
            let end = start + rows[start..]
                .iter()
                .take_while(|r| r.0 == x && r.1 == y)
                .count();
            let zs: Vec<f64> = rows[start..end].iter().map(|r| r.2).collect();
            let ds: Vec<f64> = rows[start..end].iter().map(|r| r.3).collect();
            lo = lo.min(zs[0]);
            hi = hi.max(zs[zs.len() - 1]);
            densities.push(TabulatedDensity::new(zs, ds)?);
            pairs.push((x, y));
            start = end;
        }
        Ok(Self {
            pairs,
            densities,
            support: (lo, hi),
        })
    }

    fn density(&self, x: f64, y: f64, z: f64) -> f64 {
        let distance = |&(a, b): &(f64, f64)| {
            let direct = (a - x).powi(2) + (b - y).powi(2);
            let swapped = (a - y).powi(2) + (b - x).powi(2);
            direct.min(swapped)
        };
        let best = self
            .pairs
            .iter()
            .enumerate()
            .min_by(|a, b| distance(a.1).total_cmp(&distance(b.1)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.densities[best].pdf(z)
    }
}

/// Mean of a kernel row.
pub fn row_mean(row: &KernelRow, grid: &TraitGrid) -> f64 {
    row.masses
        .iter()
        .enumerate()
        .map(|(i, m)| grid.center(i) * m)
        .sum()
}

/// Histogram of offspring draws as a probability measure on the grid.
pub fn offspring_histogram<R: Rng + ?Sized>(
    kernel: &InheritanceKernel,
    x: f64,
    y: f64,
    grid: TraitGrid,
    draws: usize,
    rng: &mut R,
) -> Result<GridMeasure> {
    let mut weights = vec![0.0; grid.n_cells()];
    for _ in 0..draws {
        weights[grid.cell_of(kernel.sample_offspring(x, y, rng))] += 1.0;
    }
    GridMeasure::from_weights(grid, weights)?.with_mass(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian(sigma: f64) -> InheritanceKernel {
        InheritanceKernel::additive(NoiseDensity::gaussian(sigma).unwrap())
    }

    #[test]
    fn additive_row_mean() {
        let grid = TraitGrid::new(-8.0, 12.0, 400).unwrap();
        let row = gaussian(1.0).row(1.0, 3.0, &grid).unwrap();
        assert!((row_mean(&row, &grid) - 2.0).abs() < 1e-3);
        let density = gaussian(1.0).density_row(1.0, 3.0, &grid).unwrap();
        let integral: f64 = density.iter().sum::<f64>() * grid.dx();
        assert!((integral - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rows_are_symmetric_in_parents() {
        let grid = TraitGrid::new(0.0, 6.0, 60).unwrap();
        let kernels = [
            gaussian(0.4),
            InheritanceKernel::multiplicative(NoiseDensity::uniform(0.0, 1.0).unwrap()).unwrap(),
            InheritanceKernel::custom(
                |x, y, z| (-(z - 0.5 * (x + y)).powi(2)).exp(),
                (0.0, 6.0),
            )
            .unwrap(),
        ];
        for k in &kernels {
            let a = k.density_row(1.3, 2.9, &grid).unwrap();
            let b = k.density_row(2.9, 1.3, &grid).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn multiplicative_at_zero_is_point_mass() {
        let grid = TraitGrid::new(0.0, 4.0, 40).unwrap();
        let k = InheritanceKernel::multiplicative(NoiseDensity::uniform(0.0, 1.0).unwrap()).unwrap();
        let row = k.row(0.0, 0.0, &grid).unwrap();
        assert_eq!(row.masses[0], 1.0);
        assert_eq!(row.masses.iter().sum::<f64>(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(k.sample_offspring(0.0, 0.0, &mut rng), 0.0);
        }
    }

    #[test]
    fn multiplicative_rejects_bad_noise() {
        assert!(InheritanceKernel::multiplicative(NoiseDensity::uniform(0.0, 0.8).unwrap()).is_err());
        assert!(InheritanceKernel::multiplicative(NoiseDensity::gaussian(0.1).unwrap()).is_err());
    }

    #[test]
    fn multiplicative_draws_stay_in_range() {
        let k = InheritanceKernel::multiplicative(NoiseDensity::uniform(0.0, 1.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let z = k.sample_offspring(1.0, 1.0, &mut rng);
            assert!((0.0..=2.0).contains(&z));
        }
    }

    #[test]
    fn degenerate_row_is_reported() {
        let grid = TraitGrid::new(0.0, 1.0, 10).unwrap();
        let k = InheritanceKernel::additive(NoiseDensity::uniform(5.0, 6.0).unwrap());
        assert!(matches!(k.row(0.5, 0.5, &grid), Err(Error::DegenerateRow { .. })));
    }

    #[test]
    fn sampling_only_has_no_rows() {
        let grid = TraitGrid::new(0.0, 1.0, 10).unwrap();
        let k = InheritanceKernel::sampling_only(|x, y, _| 0.5 * (x + y));
        assert!(matches!(k.row(0.5, 0.5, &grid), Err(Error::UnsupportedKernel(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(k.sample_offspring(0.2, 0.4, &mut rng), 0.30000000000000004);
    }

    #[test]
    fn custom_sampling_follows_density() {
        let k = InheritanceKernel::custom(
            |x, y, z| if (z - 0.5 * (x + y)).abs() <= 0.5 { 1.0 } else { 0.0 },
            (-2.0, 4.0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mean = (0..n).map(|_| k.sample_offspring(0.0, 2.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01);
    }
}
