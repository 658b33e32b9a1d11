use crate::error::{Error, Result};
use crate::measures::{GridMeasure, TraitGrid};

use super::{multiplicative_masses, normalize_row, InheritanceKernel, KernelRow};

/// Row entries below this fraction of the row maximum are dropped.
const TRIM_RELATIVE: f64 = 1e-16;

/// The bilinear map `P(mu, nu)(dz) = sum_ij k(z_i, z_j, dz) mu_i nu_j` on a
/// fixed grid.
///
/// For the additive and multiplicative families a row depends on the parents
/// only through `i + j`, so `P` factors into the discrete convolution
/// `S[s] = sum_{i+j=s} mu_i nu_j` followed by one row per `s`.
#[derive(Debug, Clone)]
pub struct BirthOperator {
    grid: TraitGrid,
    rows: RowSource,
    max_tail_mass: f64,
}

#[derive(Debug, Clone)]
enum RowSource {
    BySum(Vec<SparseRow>),
    PerPair(InheritanceKernel),
}

#[derive(Debug, Clone)]
struct SparseRow {
    start: usize,
    masses: Vec<f64>,
}

impl SparseRow {
    fn from_row(row: KernelRow) -> Self {
        let peak = row.masses.iter().cloned().fold(0.0, f64::max);
        let cut = peak * TRIM_RELATIVE;
        let first = row.masses.iter().position(|m| *m > cut).unwrap_or(0);
        let last = row.masses.iter().rposition(|m| *m > cut).unwrap_or(0);
        let mut masses: Vec<f64> = row.masses[first..=last]
            .iter()
            .map(|m| if *m > cut { *m } else { 0.0 })
            .collect();
        let total: f64 = masses.iter().sum();
        masses.iter_mut().for_each(|m| *m /= total);
        Self {
            start: first,
            masses,
        }
    }

    fn accumulate(&self, weight: f64, out: &mut [f64]) {
        for (o, m) in out[self.start..self.start + self.masses.len()]
            .iter_mut()
            .zip(&self.masses)
        {
            *o += weight * m;
        }
    }
}

impl BirthOperator {
    pub fn new(kernel: &InheritanceKernel, grid: TraitGrid) -> Result<Self> {
        let n = grid.n_cells();
        let dx = grid.dx();
        let by_sum = |make: &dyn Fn(usize) -> Vec<f64>| -> Result<(RowSource, f64)> {
            let mut rows = Vec::with_capacity(2 * n - 1);
            let mut max_tail: f64 = 0.0;
            for s in 0..2 * n - 1 {
                let mid = grid.x_min() + (s as f64 + 1.0) * 0.5 * dx;
                let row = normalize_row(make(s), mid, mid)?;
                max_tail = max_tail.max(row.tail_mass);
                rows.push(SparseRow::from_row(row));
            }
            Ok((RowSource::BySum(rows), max_tail))
        };
        let (rows, max_tail_mass) = match kernel {
            InheritanceKernel::AdditiveNoise(h) => by_sum(&|s| {
                // Edge e sits at (2e - s - 1) dx / 2 from the parental midpoint;
                // integer offsets keep mirrored cells bit-identical.
                (0..n)
                    .map(|e| {
                        let lo = (2.0 * e as f64 - s as f64 - 1.0) * 0.5 * dx;
                        h.interval_prob(lo, lo + dx)
                    })
                    .collect()
            })?,
            InheritanceKernel::MultiplicativeNoise(h) => by_sum(&|s| {
                let sum = 2.0 * grid.x_min() + (s as f64 + 1.0) * dx;
                multiplicative_masses(h, sum, &grid)
            })?,
            InheritanceKernel::Custom(_) => {
                let mut max_tail: f64 = 0.0;
                for i in 0..n {
                    for j in i..n {
                        let row = kernel.row(grid.center(i), grid.center(j), &grid)?;
                        max_tail = max_tail.max(row.tail_mass);
                    }
                }
                (RowSource::PerPair(kernel.clone()), max_tail)
            }
            InheritanceKernel::SamplingOnly(_) => {
                return Err(Error::UnsupportedKernel(
                    "the birth operator needs kernel densities".into(),
                ))
            }
        };
        Ok(Self {
            grid,
            rows,
            max_tail_mass,
        })
    }

    pub fn grid(&self) -> &TraitGrid {
        &self.grid
    }

    /// Largest probability mass any row lost to truncation at the grid ends.
    pub fn max_tail_mass(&self) -> f64 {
        self.max_tail_mass
    }

    pub fn apply(&self, mu: &GridMeasure, nu: &GridMeasure) -> Result<GridMeasure> {
        if *mu.grid() != self.grid || *nu.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let out = self.apply_weights(mu.weights(), nu.weights())?;
        GridMeasure::from_weights(self.grid, out)
    }

    /// `P` on raw weight vectors; used by integrators whose stages may carry
    /// round-off negatives.
    pub(crate) fn apply_weights(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.n_cells();
        let mut out = vec![0.0; n];
        match &self.rows {
            RowSource::BySum(rows) => {
                let mut sums = vec![0.0; 2 * n - 1];
                for (i, &ai) in a.iter().enumerate() {
                    if ai == 0.0 {
                        continue;
                    }
                    for (s, &bj) in sums[i..i + n].iter_mut().zip(b) {
                        *s += ai * bj;
                    }
                }
                for (row, &w) in rows.iter().zip(&sums) {
                    if w != 0.0 {
                        row.accumulate(w, &mut out);
                    }
                }
            }
            RowSource::PerPair(kernel) => {
                for (i, &ai) in a.iter().enumerate() {
                    for (j, &bj) in b.iter().enumerate() {
                        let w = ai * bj;
                        if w == 0.0 {
                            continue;
                        }
                        let row = kernel.row(self.grid.center(i), self.grid.center(j), &self.grid)?;
                        for (o, m) in out.iter_mut().zip(&row.masses) {
                            *o += w * m;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `P(mu, nu)` for a one-off evaluation.
pub fn birth_operator(
    kernel: &InheritanceKernel,
    mu: &GridMeasure,
    nu: &GridMeasure,
) -> Result<GridMeasure> {
    mu.check_grid(nu)?;
    BirthOperator::new(kernel, *mu.grid())?.apply(mu, nu)
}

/// Plain tensor contraction over all parent pairs, evaluating every row from
/// the kernel. Slow; kept as a reference for the factored operator.
pub fn birth_operator_exact(
    kernel: &InheritanceKernel,
    mu: &GridMeasure,
    nu: &GridMeasure,
) -> Result<GridMeasure> {
    mu.check_grid(nu)?;
    let grid = *mu.grid();
    let mut out = vec![0.0; grid.n_cells()];
    for (i, &ai) in mu.weights().iter().enumerate() {
        for (j, &bj) in nu.weights().iter().enumerate() {
            if ai * bj == 0.0 {
                continue;
            }
            let row = kernel.row(grid.center(i), grid.center(j), &grid)?;
            for (o, m) in out.iter_mut().zip(&row.masses) {
                *o += ai * bj * m;
            }
        }
    }
    GridMeasure::from_weights(grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::NoiseDensity;

    fn additive(sigma: f64) -> InheritanceKernel {
        InheritanceKernel::additive(NoiseDensity::gaussian(sigma).unwrap())
    }

    #[test]
    fn point_masses_give_kernel_row() {
        let grid = TraitGrid::new(-5.0, 5.0, 50).unwrap();
        let k = additive(0.7);
        let a = GridMeasure::point_mass(grid, -1.1, 1.0);
        let b = GridMeasure::point_mass(grid, 2.3, 1.0);
        let p = birth_operator(&k, &a, &b).unwrap();
        let row = k.row(grid.center(grid.cell_of(-1.1)), grid.center(grid.cell_of(2.3)), &grid).unwrap();
        for (u, v) in p.weights().iter().zip(&row.masses) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn factored_matches_exact() {
        let grid = TraitGrid::new(0.0, 8.0, 40).unwrap();
        let mu = GridMeasure::gaussian(grid, 3.0, 0.8, 1.5).unwrap();
        let nu = GridMeasure::uniform(grid, 2.0, 6.0, 0.7).unwrap();
        let kernels = [
            additive(0.5),
            InheritanceKernel::multiplicative(NoiseDensity::uniform(0.0, 1.0).unwrap()).unwrap(),
        ];
        for k in &kernels {
            let fast = birth_operator(k, &mu, &nu).unwrap();
            let slow = birth_operator_exact(k, &mu, &nu).unwrap();
            assert!(fast.total_variation(&slow).unwrap() < 1e-12);
        }
    }

    #[test]
    fn mass_is_product_and_mean_is_average() {
        let grid = TraitGrid::new(-8.0, 8.0, 256).unwrap();
        let k = additive(0.5);
        let mu = GridMeasure::gaussian(grid, -1.0, 0.7, 1.0).unwrap();
        let nu = GridMeasure::gaussian(grid, 2.0, 1.1, 1.0).unwrap();
        let p = birth_operator(&k, &mu, &nu).unwrap();
        assert!((p.total_mass() - 1.0).abs() < 1e-12);
        let expected = 0.5 * (mu.mean().unwrap() + nu.mean().unwrap());
        assert!((p.mean().unwrap() - expected).abs() < 1e-9);
        let scaled = birth_operator(&k, &mu.scaled(2.0), &nu.scaled(3.0)).unwrap();
        assert!((scaled.total_mass() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn custom_kernel_uses_pairwise_rows() {
        let grid = TraitGrid::new(-4.0, 4.0, 32).unwrap();
        let k = InheritanceKernel::custom(
            |x, y, z| (-2.0 * (z - 0.5 * (x + y)).powi(2)).exp(),
            (-4.0, 4.0),
        )
        .unwrap();
        let mu = GridMeasure::gaussian(grid, 0.5, 0.6, 1.0).unwrap();
        let op = BirthOperator::new(&k, grid).unwrap();
        let fast = op.apply(&mu, &mu).unwrap();
        let slow = birth_operator_exact(&k, &mu, &mu).unwrap();
        assert!(fast.total_variation(&slow).unwrap() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_grids() {
        let g1 = TraitGrid::new(0.0, 1.0, 10).unwrap();
        let g2 = TraitGrid::new(0.0, 1.0, 11).unwrap();
        let k = additive(0.1);
        let a = GridMeasure::point_mass(g1, 0.5, 1.0);
        let b = GridMeasure::point_mass(g2, 0.5, 1.0);
        assert!(matches!(birth_operator(&k, &a, &b), Err(Error::GridMismatch)));
    }
}
