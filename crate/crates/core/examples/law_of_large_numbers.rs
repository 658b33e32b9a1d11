//! Replicas of the particle system at growing scale against the
//! deterministic solution: the error shrinks roughly like `N^(-1/2)`.

use dimorph::kernels::{InheritanceKernel, NoiseDensity};
use dimorph::rates::ConstantRates;
use dimorph::stability::{run_lln, LlnExperiment};
use dimorph::{GridMeasure, TraitGrid};

fn main() -> anyhow::Result<()> {
    let grid = TraitGrid::new(-6.0, 6.0, 120)?;
    let exp = LlnExperiment {
        rates: ConstantRates::symmetric(2.0, 1.0, 0.5).into(),
        kernel: InheritanceKernel::additive(NoiseDensity::gaussian(0.5)?),
        grid,
        m0: GridMeasure::gaussian(grid, -0.5, 0.7, 1.0)?,
        f0: GridMeasure::gaussian(grid, 0.5, 0.7, 1.0)?,
        scales: vec![100, 1000, 10_000],
        replicas: 6,
        checkpoints: vec![1.0, 3.0],
        dt: 0.01,
        seed: 1,
    };
    let report = run_lln(&exp)?;
    println!("{:>6} {:>5} {:>10} {:>10} {:>12}", "N", "t", "error", "spread", "error*sqrtN");
    for row in &report.rows {
        println!(
            "{:>6} {:>5.1} {:>10.4} {:>10.4} {:>12.3}",
            row.scale,
            row.time,
            row.mean_error,
            row.spread,
            row.mean_error * (row.scale as f64).sqrt()
        );
    }
    Ok(())
}
