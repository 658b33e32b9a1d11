//! Multiplicative inheritance: the offspring trait is `(x + y) Z` with `Z` in
//! `[0, 1]` of mean 1/2. Checks the kernel hypotheses numerically and
//! probes the contraction of the birth operator.

use dimorph::kernels::{check_hypotheses, BirthOperator, HypothesisConfig, InheritanceKernel, NoiseDensity};
use dimorph::stability::contraction_probe;
use dimorph::TraitGrid;

fn main() -> anyhow::Result<()> {
    let grid = TraitGrid::new(0.0, 16.0, 320)?;
    let kernel = InheritanceKernel::multiplicative(NoiseDensity::uniform(0.25, 0.75)?)?;
    let report = check_hypotheses(
        &kernel,
        &grid,
        &HypothesisConfig {
            region: Some((1.0, 7.0)),
            ..HypothesisConfig::default()
        },
    )?;
    println!("condition (i) max      {:.4}", report.condition_i_max);
    println!(
        "condition (ii) gamma {}  C {:.4}  L {:.4}  holds {}",
        report.condition_ii.gamma, report.condition_ii.c_est, report.condition_ii.l_est, report.condition_ii.holds
    );
    println!("mean condition error   {:.2e} (dx = {})", report.mean_condition_max_error, grid.dx());

    let op = BirthOperator::new(&kernel, grid)?;
    let probe = contraction_probe(&op, (2.0, 6.0), 100, 3)?;
    println!(
        "contraction: {} violations in {} trials, largest ratio {:.3}",
        probe.violations, probe.trials, probe.max_ratio
    );
    Ok(())
}
