//! With Gaussian noise the fixed point of `mu -> P(mu, mu)` is Gaussian with
//! variance `2 sigma^2`, whatever the starting law.

use dimorph::kernels::{InheritanceKernel, NoiseDensity};
use dimorph::stability::{fixed_point, FixedPointConfig};
use dimorph::{GridMeasure, TraitGrid};

fn main() -> anyhow::Result<()> {
    for sigma in [0.3, 0.5, 1.0] {
        // Wide enough that truncated rows do not bias the mean.
        let half_width = f64::max(8.0, 12.0 * sigma);
        let grid = TraitGrid::new(-half_width, half_width, (64.0 * half_width) as usize)?;
        let kernel = InheritanceKernel::additive(NoiseDensity::gaussian(sigma)?);
        let starts = [
            ("N(0.5, 1)", GridMeasure::gaussian(grid, 0.5, 1.0, 1.0)?),
            ("U[-1.5, 2.5]", GridMeasure::uniform(grid, -1.5, 2.5, 1.0)?),
        ];
        for (name, mu0) in starts {
            let fp = fixed_point(&kernel, &mu0, &FixedPointConfig::default())?;
            let reference = GridMeasure::gaussian(grid, fp.mean, (2.0f64).sqrt() * sigma, 1.0)?;
            println!(
                "sigma {sigma:.1} from {name:<13} {:>3} iterations  mean {:+.6}  var {:.6} (2 sigma^2 = {:.6})  W1 to Gaussian {:.2e}",
                fp.iterations,
                fp.mean,
                fp.variance,
                2.0 * sigma * sigma,
                fp.mu_star.wasserstein1(&reference)?
            );
        }
    }
    Ok(())
}
