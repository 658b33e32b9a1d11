//! The common limiting trait law `mu*` with `P(mu*, mu*) = mu*`, convergence
//! diagnostics for normalized trajectories, and the comparison of
//! individual-based runs against the deterministic limit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{log_linear_fit, LinearFit};
use crate::ibm::{initial_population, simulate, EventCounts, IbmParams, IbmTrajectory};
use crate::kernels::{mean_condition_error, BirthOperator, InheritanceKernel};
use crate::macro_solver::{integrate, MacroModel, MacroState, SolverConfig, Trajectory};
use crate::measures::{GridMeasure, TraitGrid, MASS_TOLERANCE};
use crate::rates::RateSet;

/// Kernels whose row means miss `(x + y) / 2` by more than this many cell
/// widths are refused by the fixed-point solver.
pub const MEAN_CONDITION_CELLS: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the new iterate once damping engages.
    pub theta: f64,
    /// Damping engages after this many iterations without a smaller step.
    pub patience: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            theta: 0.5,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub mu_star: GridMeasure,
    pub iterations: usize,
    pub final_step_distance: f64,
    pub mean: f64,
    pub variance: f64,
    pub damped: bool,
    /// Wasserstein distance between consecutive iterates.
    pub steps: Vec<f64>,
}

/// Iterates `mu <- P(mu, mu)` from `mu0` after checking the mean-parent
/// condition of `kernel` on the middle half of the grid.
pub fn fixed_point(
    kernel: &InheritanceKernel,
    mu0: &GridMeasure,
    config: &FixedPointConfig,
) -> Result<FixedPointResult> {
    let grid = *mu0.grid();
    let width = grid.x_max() - grid.x_min();
    let region = (grid.x_min() + 0.25 * width, grid.x_max() - 0.25 * width);
    let error = mean_condition_error(kernel, &grid, region, 32, 0)?;
    let allowed = MEAN_CONDITION_CELLS * grid.dx();
    if error > allowed {
        return Err(Error::MeanConditionViolated { error, allowed });
    }
    let op = BirthOperator::new(kernel, grid)?;
    fixed_point_with(&op, mu0, config)
}

/// Fixed-point iteration with a prebuilt operator and no kernel checks.
pub fn fixed_point_with(
    op: &BirthOperator,
    mu0: &GridMeasure,
    config: &FixedPointConfig,
) -> Result<FixedPointResult> {
    if (mu0.total_mass() - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::InvalidMeasure(format!(
            "the starting law must be a probability measure, mass is {}",
            mu0.total_mass()
        )));
    }
    // P(mu, mu) has mass mass(mu)^2, so round-off in the mass doubles every
    // iteration unless each iterate is renormalized.
    let mut mu = mu0.clone().with_mass(1.0)?;
    let mut steps = Vec::new();
    let mut damped = false;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for k in 1..=config.max_iter {
        let image = op.apply(&mu, &mu)?.with_mass(1.0)?;
        let next = if damped {
            mu.mix(&image, config.theta)?
        } else {
            image
        };
        let step = next.wasserstein1(&mu)?;
        steps.push(step);
        mu = next;
        if step < config.tol {
            let (mean, variance) = (mu.mean()?, mu.variance()?);
            return Ok(FixedPointResult {
                mu_star: mu,
                iterations: k,
                final_step_distance: step,
                mean,
                variance,
                damped,
                steps,
            });
        }
        if step < best {
            best = step;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                damped = true;
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: config.max_iter,
        last_step: steps.last().copied().unwrap_or(f64::NAN),
        last_iterate: Box::new(mu),
    })
}

/// Common limiting mean `(A m0 + n0) / (A + 1)` of the normalized system.
pub fn limiting_mean(a: f64, m0: f64, n0: f64) -> f64 {
    (a * m0 + n0) / (a + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub times: Vec<f64>,
    /// `d(mu_t, nu_t)`.
    pub pair_distance: Vec<f64>,
    pub mu_distance: Vec<f64>,
    pub nu_distance: Vec<f64>,
    /// `max(d(mu_t, mu*), d(nu_t, mu*))`.
    pub max_distance: Vec<f64>,
    /// Log-linear fit of `max_distance` over the second half of the run.
    pub fit: Option<LinearFit>,
    /// `max_distance` never increases by more than round-off.
    pub monotone: bool,
}

/// Distances of a normalized trajectory to `mu_star` and between its
/// components.
pub fn convergence_report(snapshots: &[MacroState], mu_star: &GridMeasure) -> Result<ConvergenceReport> {
    let mut report = ConvergenceReport {
        times: Vec::with_capacity(snapshots.len()),
        pair_distance: Vec::with_capacity(snapshots.len()),
        mu_distance: Vec::with_capacity(snapshots.len()),
        nu_distance: Vec::with_capacity(snapshots.len()),
        max_distance: Vec::with_capacity(snapshots.len()),
        fit: None,
        monotone: true,
    };
    for s in snapshots {
        let (dm, dn) = (s.m.wasserstein1(mu_star)?, s.f.wasserstein1(mu_star)?);
        report.times.push(s.t);
        report.pair_distance.push(s.m.wasserstein1(&s.f)?);
        report.mu_distance.push(dm);
        report.nu_distance.push(dn);
        report.max_distance.push(dm.max(dn));
    }
    report.monotone = report.max_distance.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let half = report.times.len() / 2;
    let tail: Vec<(f64, f64)> = report.times[half..]
        .iter()
        .zip(&report.max_distance[half..])
        .filter(|(_, d)| **d > 1e-12)
        .map(|(t, d)| (*t, *d))
        .collect();
    let (ts, ds): (Vec<f64>, Vec<f64>) = tail.into_iter().unzip();
    report.fit = log_linear_fit(&ts, &ds);
    Ok(report)
}

/// Smooth random probability measure: a mixture of two or three Gaussians
/// centred in `region`.
pub fn random_law<R: Rng + ?Sized>(grid: TraitGrid, region: (f64, f64), rng: &mut R) -> Result<GridMeasure> {
    let parts = rng.random_range(2..=3);
    let span = region.1 - region.0;
    let mut out = GridMeasure::zeros(grid);
    for _ in 0..parts {
        let mean = rng.random_range(region.0..region.1);
        let sd = rng.random_range(0.05..0.25) * span;
        let weight = rng.random_range(0.2..1.0);
        out = out.add_scaled(&GridMeasure::gaussian(grid, mean, sd, 1.0)?, weight)?;
    }
    out.with_mass(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub trials: usize,
    pub violations: usize,
    /// Smallest `max(d(mu1, mu2), d(nu1, nu2)) - d(P(mu1, nu1), P(mu2, nu2))`.
    pub min_margin: f64,
    /// Largest ratio of the output distance to the input distance.
    pub max_ratio: f64,
}

/// Checks `d(P(mu1, nu1), P(mu2, nu2)) < max(d(mu1, mu2), d(nu1, nu2))` over
/// random pairs with `mean(mu1) = mean(mu2)` and `mean(nu1) = mean(nu2)`.
pub fn contraction_probe(
    op: &BirthOperator,
    region: (f64, f64),
    trials: usize,
    seed: u64,
) -> Result<ContractionReport> {
    let grid = *op.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ContractionReport {
        trials,
        violations: 0,
        min_margin: f64::INFINITY,
        max_ratio: 0.0,
    };
    for _ in 0..trials {
        let mu1 = random_law(grid, region, &mut rng)?;
        let mu2 = random_law(grid, region, &mut rng)?.with_mean(mu1.mean()?)?;
        let nu1 = random_law(grid, region, &mut rng)?;
        let nu2 = random_law(grid, region, &mut rng)?.with_mean(nu1.mean()?)?;
        let input = mu1.wasserstein1(&mu2)?.max(nu1.wasserstein1(&nu2)?);
        let output = op.apply(&mu1, &nu1)?.wasserstein1(&op.apply(&mu2, &nu2)?)?;
        if !(output < input) {
            report.violations += 1;
        }
        report.min_margin = report.min_margin.min(input - output);
        if input > 0.0 {
            report.max_ratio = report.max_ratio.max(output / input);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnRow {
    pub scale: usize,
    pub time: f64,
    pub replicas: usize,
    /// Mean over replicas of `(d_male + d_female) / 2` between normalized
    /// empirical and deterministic laws.
    pub mean_error: f64,
    /// Standard deviation of the replica errors.
    pub spread: f64,
    pub std_error: f64,
}

/// Error table of individual-based replicas against a deterministic
/// trajectory. `runs` pairs each scale `N` with its replicas.
pub fn lln_compare(
    runs: &[(usize, Vec<IbmTrajectory>)],
    reference: &Trajectory,
    checkpoints: &[f64],
) -> Result<Vec<LlnRow>> {
    let mut rows = Vec::new();
    for (scale, replicas) in runs {
        if replicas.len() < 3 {
            return Err(Error::InsufficientReplicas {
                scale: *scale,
                got: replicas.len(),
            });
        }
        for &t in checkpoints {
            let target = reference.at(t)?;
            let (mu, _) = target.m.normalize()?;
            let (nu, _) = target.f.normalize()?;
            let errors = replicas
                .iter()
                .map(|r| {
                    let snap = r.at(t)?;
                    let (em, _) = snap.males.normalize()?;
                    let (ef, _) = snap.females.normalize()?;
                    Ok(0.5 * (em.wasserstein1(&mu)? + ef.wasserstein1(&nu)?))
                })
                .collect::<Result<Vec<f64>>>()?;
            let n = errors.len() as f64;
            let mean = errors.iter().sum::<f64>() / n;
            let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
            rows.push(LlnRow {
                scale: *scale,
                time: t,
                replicas: errors.len(),
                mean_error: mean,
                spread: var.sqrt(),
                std_error: (var / n).sqrt(),
            });
        }
    }
    Ok(rows)
}

/// Full law-of-large-numbers experiment.
#[derive(Debug, Clone)]
pub struct LlnExperiment {
    pub rates: RateSet,
    pub kernel: InheritanceKernel,
    pub grid: TraitGrid,
    pub m0: GridMeasure,
    pub f0: GridMeasure,
    pub scales: Vec<usize>,
    pub replicas: usize,
    pub checkpoints: Vec<f64>,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct LlnReport {
    pub rows: Vec<LlnRow>,
    /// Event counts of every replica, grouped by scale.
    pub counts: Vec<(usize, Vec<EventCounts>)>,
    pub reference: Trajectory,
}

/// Seed of replica `replica` at scale `scale`, derived from the base seed.
pub fn replica_seed(seed: u64, scale: usize, replica: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (scale as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (replica as u64).wrapping_mul(0x94D0_49BB_1331_11EB)
}

/// Runs the deterministic reference and all replicas (in parallel on the
/// current rayon pool) and tabulates the errors.
pub fn run_lln(exp: &LlnExperiment) -> Result<LlnReport> {
    let t_end = exp.checkpoints.iter().cloned().fold(0.0, f64::max);
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameters("need a positive checkpoint".into()));
    }
    let model = MacroModel::new(exp.rates.clone(), &exp.kernel, exp.grid)?;
    let state0 = MacroState {
        t: 0.0,
        m: exp.m0.clone(),
        f: exp.f0.clone(),
    };
    let reference = integrate(&state0, &model, &SolverConfig::new(exp.dt, t_end))?;
    let jobs: Vec<(usize, usize)> = exp
        .scales
        .iter()
        .flat_map(|&s| (0..exp.replicas).map(move |r| (s, r)))
        .collect();
    let results: Vec<((usize, usize), IbmTrajectory)> = jobs
        .par_iter()
        .map(|&(scale, replica)| {
            let params = IbmParams {
                rates: exp.rates.clone(),
                kernel: exp.kernel.clone(),
                grid: exp.grid,
                scale,
                t_end,
                sample_times: exp.checkpoints.clone(),
                seed: replica_seed(exp.seed, scale, replica),
                max_events: None,
            };
            let start = initial_population(&exp.m0, &exp.f0, scale)?;
            Ok(((scale, replica), simulate(&params, &start)?))
        })
        .collect::<Result<_>>()?;
    let mut runs: Vec<(usize, Vec<IbmTrajectory>)> = exp.scales.iter().map(|&s| (s, Vec::new())).collect();
    for ((scale, _), traj) in results {
        let slot = runs.iter_mut().find(|(s, _)| *s == scale).expect("scale listed");
        slot.1.push(traj);
    }
    let rows = lln_compare(&runs, &reference, &exp.checkpoints)?;
    let counts = runs
        .iter()
        .map(|(s, rs)| (*s, rs.iter().map(|r| r.counts).collect()))
        .collect();
    Ok(LlnReport {
        rows,
        counts,
        reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::NoiseDensity;

    #[test]
    fn limiting_mean_examples() {
        assert_eq!(limiting_mean(1.0, 0.0, 1.0), 0.5);
        assert_eq!(limiting_mean(2.0, 1.0, 4.0), 2.0);
        assert_eq!(limiting_mean(3.7, 1.25, 1.25), 1.25);
    }

    #[test]
    fn gaussian_fixed_point() {
        let grid = TraitGrid::new(-8.0, 8.0, 256).unwrap();
        let k = InheritanceKernel::additive(NoiseDensity::gaussian(0.7).unwrap());
        let mu0 = GridMeasure::gaussian(grid, 0.4, 1.5, 1.0).unwrap();
        let r = fixed_point(&k, &mu0, &FixedPointConfig::default()).unwrap();
        assert!((r.mean - mu0.mean().unwrap()).abs() < 1e-8);
        assert!((r.variance / (2.0 * 0.49) - 1.0).abs() < 0.02, "{}", r.variance);
    }

    #[test]
    fn biased_kernel_is_refused() {
        let grid = TraitGrid::new(-8.0, 8.0, 128).unwrap();
        let k = InheritanceKernel::additive(NoiseDensity::uniform(0.0, 1.0).unwrap());
        let mu0 = GridMeasure::gaussian(grid, 0.0, 1.0, 1.0).unwrap();
        let err = fixed_point(&k, &mu0, &FixedPointConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MeanConditionViolated { .. }));
    }

    #[test]
    fn too_few_iterations_report_the_last_iterate() {
        let grid = TraitGrid::new(-8.0, 8.0, 128).unwrap();
        let k = InheritanceKernel::additive(NoiseDensity::gaussian(0.5).unwrap());
        let mu0 = GridMeasure::gaussian(grid, 0.0, 2.0, 1.0).unwrap();
        let config = FixedPointConfig {
            max_iter: 3,
            ..FixedPointConfig::default()
        };
        match fixed_point(&k, &mu0, &config) {
            Err(Error::NoConvergence { iterations, last_iterate, .. }) => {
                assert_eq!(iterations, 3);
                assert!((last_iterate.total_mass() - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn replicas_are_required() {
        let grid = TraitGrid::new(0.0, 1.0, 4).unwrap();
        let m = GridMeasure::uniform(grid, 0.0, 1.0, 1.0).unwrap();
        let reference = Trajectory {
            snapshots: vec![MacroState { t: 0.0, m: m.clone(), f: m }],
            diagnostics: Default::default(),
        };
        let err = lln_compare(&[(10, Vec::new())], &reference, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::InsufficientReplicas { scale: 10, got: 0 }));
    }
}
