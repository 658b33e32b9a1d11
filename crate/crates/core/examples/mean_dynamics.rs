//! Normalized trait laws under a fixed sex ratio `A`: the means meet at
//! `(A m0 + n0) / (A + 1)` and both laws settle on the stationary law.

use dimorph::kernels::{BirthOperator, InheritanceKernel, NoiseDensity};
use dimorph::macro_solver::{integrate_normalized, SexRatio, SolverConfig};
use dimorph::stability::{convergence_report, fixed_point, limiting_mean, FixedPointConfig};
use dimorph::{GridMeasure, TraitGrid};

fn main() -> anyhow::Result<()> {
    let grid = TraitGrid::new(-4.0, 9.0, 260)?;
    let kernel = InheritanceKernel::additive(NoiseDensity::gaussian(0.5)?);
    let op = BirthOperator::new(&kernel, grid)?;
    let (m0, n0) = (1.0, 4.0);
    let mu0 = GridMeasure::gaussian(grid, m0, 0.5, 1.0)?;
    let nu0 = GridMeasure::gaussian(grid, n0, 0.5, 1.0)?;
    for a in [0.5, 2.0, 5.0] {
        let dt = 0.1 / f64::max(a, 1.0);
        let traj = integrate_normalized(&mu0, &nu0, &SexRatio::Constant(a), &op, &SolverConfig::new(dt, 15.0))?;
        let end = traj.last();
        let target = limiting_mean(a, m0, n0);
        let star = fixed_point(&kernel, &mu0.mix(&nu0, 1.0 / (1.0 + a))?, &FixedPointConfig::default())?;
        let report = convergence_report(&traj.snapshots, &star.mu_star)?;
        let rate = report.fit.map(|f| -f.slope).unwrap_or(f64::NAN);
        println!(
            "A = {a:<3} means ({:.5}, {:.5}) -> {target:.5}  W1 to mu* {:.2e}  decay rate {rate:.3}",
            end.m.mean()?,
            end.f.mean()?,
            report.max_distance.last().unwrap()
        );
    }
    Ok(())
}
