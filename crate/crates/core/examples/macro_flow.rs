//! Deterministic trait dynamics of both sexes on a grid.

use dimorph::kernels::{InheritanceKernel, NoiseDensity};
use dimorph::macro_solver::{integrate, MacroModel, MacroState, SolverConfig};
use dimorph::rates::ConstantRates;
use dimorph::{GridMeasure, TraitGrid};

fn main() -> anyhow::Result<()> {
    let grid = TraitGrid::new(-6.0, 6.0, 240)?;
    let rates = ConstantRates {
        p_f: 2.5,
        p_m: 1.5,
        d_f: 1.0,
        d_m: 0.7,
        u_ff: 0.3,
        u_fm: 0.25,
        u_mf: 0.2,
        u_mm: 0.35,
    };
    let kernel = InheritanceKernel::additive(NoiseDensity::gaussian(0.5)?);
    let model = MacroModel::new(rates.into(), &kernel, grid)?;
    let state0 = MacroState {
        t: 0.0,
        m: GridMeasure::gaussian(grid, -1.5, 0.5, 0.3)?,
        f: GridMeasure::uniform(grid, 0.5, 2.5, 1.2)?,
    };
    let dt = model.dt_max(&state0.m, &state0.f)?.min(0.01);
    let traj = integrate(&state0, &model, &SolverConfig::new(dt, 20.0).sampled_at_interval(2.0))?;
    println!("{:>5} {:>8} {:>8} {:>8} {:>8} {:>8}", "t", "M", "F", "mean m", "mean f", "var m");
    for s in &traj.snapshots {
        println!(
            "{:>5.1} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            s.t,
            s.m.total_mass(),
            s.f.total_mass(),
            s.m.mean()?,
            s.f.mean()?,
            s.m.variance()?
        );
    }
    let d = &traj.diagnostics;
    println!("{} steps, dt_max {:.4}, clipped mass {:.2e}", d.steps, d.dt_max, d.clipped_mass);
    Ok(())
}
