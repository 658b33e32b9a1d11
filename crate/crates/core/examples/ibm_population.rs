//! One run of the individual-based model: population sizes and trait means.

use dimorph::ibm::{initial_population, simulate, IbmParams};
use dimorph::kernels::{InheritanceKernel, NoiseDensity};
use dimorph::rates::ConstantRates;
use dimorph::{GridMeasure, TraitGrid};

fn main() -> anyhow::Result<()> {
    let grid = TraitGrid::new(-6.0, 6.0, 120)?;
    let scale = 2000;
    let params = IbmParams {
        rates: ConstantRates::symmetric(2.0, 1.0, 0.5).into(),
        kernel: InheritanceKernel::additive(NoiseDensity::gaussian(0.5)?),
        grid,
        scale,
        t_end: 10.0,
        sample_times: (0..=10).map(f64::from).collect(),
        seed: 7,
        max_events: None,
    };
    let start = initial_population(
        &GridMeasure::gaussian(grid, -1.0, 0.6, 0.5)?,
        &GridMeasure::gaussian(grid, 1.5, 0.6, 0.5)?,
        scale,
    )?;
    let traj = simulate(&params, &start)?;
    println!("{:>5} {:>8} {:>8} {:>9} {:>9}", "t", "males", "females", "mean m", "mean f");
    for s in &traj.snapshots {
        let mean = |m: &GridMeasure| m.mean().unwrap_or(f64::NAN);
        println!(
            "{:>5.1} {:>8} {:>8} {:>9.4} {:>9.4}",
            s.t,
            s.n_males,
            s.n_females,
            mean(&s.males),
            mean(&s.females)
        );
    }
    let c = traj.counts;
    println!("births {} ({} female), deaths {}", c.births, c.female_births, c.deaths);
    Ok(())
}
