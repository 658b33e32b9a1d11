use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Law of the noise variable `Z` used by the built-in inheritance kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDensity {
    Gaussian { sigma: f64 },
    Uniform { lo: f64, hi: f64 },
    Tabulated(TabulatedDensity),
}

impl NoiseDensity {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self::Gaussian { sigma })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidKernel(format!(
                "uniform noise needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self::Uniform { lo, hi })
    }

    pub fn tabulated(points: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        Ok(Self::Tabulated(TabulatedDensity::new(points, density)?))
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match self {
            Self::Gaussian { sigma } => {
                let u = z / sigma;
                (-0.5 * u * u).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            Self::Uniform { lo, hi } => {
                if z >= *lo && z <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Self::Tabulated(t) => t.pdf(z),
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match self {
            Self::Gaussian { sigma } => {
                let u = z / (sigma * std::f64::consts::SQRT_2);
                if u >= 0.0 {
                    1.0 - 0.5 * libm::erfc(u)
                } else {
                    0.5 * libm::erfc(-u)
                }
            }
            Self::Uniform { lo, hi } => ((z - lo) / (hi - lo)).clamp(0.0, 1.0),
            Self::Tabulated(t) => t.cdf(z),
        }
    }

    /// `P(a < Z <= b)`. The Gaussian branch works on tail probabilities so
    /// mirrored intervals get bit-identical masses.
    pub fn interval_prob(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self {
            Self::Gaussian { sigma } => {
                let s = sigma * std::f64::consts::SQRT_2;
                if a >= 0.0 {
                    0.5 * (libm::erfc(a / s) - libm::erfc(b / s))
                } else if b <= 0.0 {
                    0.5 * (libm::erfc(-b / s) - libm::erfc(-a / s))
                } else {
                    1.0 - 0.5 * (libm::erfc(-a / s) + libm::erfc(b / s))
                }
            }
            _ => (self.cdf(b) - self.cdf(a)).max(0.0),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Gaussian { .. } => 0.0,
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Tabulated(t) => t.mean,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            Self::Gaussian { sigma } => sigma * sigma,
            Self::Uniform { lo, hi } => (hi * hi + hi * lo + lo * lo) / 3.0,
            Self::Tabulated(t) => t.second_moment,
        }
    }

    /// Smallest interval outside of which the density vanishes.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Self::Uniform { lo, hi } => (*lo, *hi),
            Self::Tabulated(t) => (t.points[0], t.points[t.points.len() - 1]),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian { sigma } => Normal::new(0.0, *sigma)
                .expect("sigma validated at construction")
                .sample(rng),
            Self::Uniform { lo, hi } => rng.random_range(*lo..*hi),
            Self::Tabulated(t) => t.quantile(rng.random::<f64>()),
        }
    }
}

/// Piecewise-linear density through `(points[i], density[i])`, renormalized
/// to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    points: Vec<f64>,
    density: Vec<f64>,
    cumulative: Vec<f64>,
    mean: f64,
    second_moment: f64,
}

impl TabulatedDensity {
    pub fn new(points: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.len() != density.len() {
            return Err(Error::InvalidKernel(
                "tabulated density needs at least two (point, density) pairs".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidKernel(
                "tabulated density points must be strictly increasing".into(),
            ));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidKernel(
                "tabulated density values must be finite and non-negative".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for k in 1..points.len() {
            let area = 0.5 * (density[k] + density[k - 1]) * (points[k] - points[k - 1]);
            cumulative.push(cumulative[k - 1] + area);
        }
        let total = *cumulative.last().unwrap();
        if !(total > 0.0) {
            return Err(Error::InvalidKernel("tabulated density has zero mass".into()));
        }
        let density: Vec<f64> = density.iter().map(|d| d / total).collect();
        let cumulative: Vec<f64> = cumulative.iter().map(|c| c / total).collect();

        // z * f and z^2 * f are at most cubic on each segment, so Simpson is exact.
        let (mut mean, mut second_moment) = (0.0, 0.0);
        for k in 1..points.len() {
            let (a, b) = (points[k - 1], points[k]);
            let (fa, fb) = (density[k - 1], density[k]);
            let m = 0.5 * (a + b);
            let fm = 0.5 * (fa + fb);
            let h = (b - a) / 6.0;
            mean += h * (a * fa + 4.0 * m * fm + b * fb);
            second_moment += h * (a * a * fa + 4.0 * m * m * fm + b * b * fb);
        }
        Ok(Self {
            points,
            density,
            cumulative,
            mean,
            second_moment,
        })
    }

    fn segment(&self, z: f64) -> usize {
        let k = self.points.partition_point(|p| *p <= z);
        k.clamp(1, self.points.len() - 1) - 1
    }

    pub fn pdf(&self, z: f64) -> f64 {
        let (first, last) = (self.points[0], self.points[self.points.len() - 1]);
        if z < first || z > last {
            return 0.0;
        }
        let k = self.segment(z);
        let t = (z - self.points[k]) / (self.points[k + 1] - self.points[k]);
        self.density[k] * (1.0 - t) + self.density[k + 1] * t
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z <= self.points[0] {
            return 0.0;
        }
        if z >= self.points[self.points.len() - 1] {
            return 1.0;
        }
        let k = self.segment(z);
        self.cumulative[k] + 0.5 * (self.density[k] + self.pdf(z)) * (z - self.points[k])
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self
            .cumulative
            .partition_point(|c| *c < u)
            .clamp(1, self.points.len() - 1)
            - 1;
        let width = self.points[k + 1] - self.points[k];
        let slope = (self.density[k + 1] - self.density[k]) / width;
        let remaining = (u - self.cumulative[k]).max(0.0);
        let d0 = self.density[k];
        // Solve d0 t + slope t^2 / 2 = remaining in the cancellation-free form.
        let disc = (d0 * d0 + 2.0 * slope * remaining).max(0.0);
        let denom = d0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * remaining / denom } else { 0.0 };
        self.points[k] + t.clamp(0.0, width)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_cdf_and_moments() {
        let g = NoiseDensity::gaussian(2.0).unwrap();
        assert!((g.cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((g.interval_prob(-2.0, 2.0) - 0.682_689_492_137_085_9).abs() < 1e-12);
        assert_eq!(g.interval_prob(0.5, 1.5), g.interval_prob(-1.5, -0.5));
        assert_eq!(g.second_moment(), 4.0);
        assert!(NoiseDensity::gaussian(0.0).is_err());
    }

    #[test]
    fn uniform_moments() {
        let u = NoiseDensity::uniform(0.0, 1.0).unwrap();
        assert_eq!(u.mean(), 0.5);
        assert!((u.second_moment() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(u.cdf(0.25), 0.25);
    }

    #[test]
    fn tabulated_triangle() {
        // Symmetric triangle on [0, 1] peaking at 1/2.
        let t = TabulatedDensity::new(vec![0.0, 0.5, 1.0], vec![0.0, 7.0, 0.0]).unwrap();
        assert!((t.cdf(1.0) - 1.0).abs() < 1e-15);
        assert!((t.cdf(0.5) - 0.5).abs() < 1e-15);
        assert!((t.mean - 0.5).abs() < 1e-15);
        // Var of a symmetric triangular law on [0, 1] is 1/24.
        assert!((t.second_moment - 0.25 - 1.0 / 24.0).abs() < 1e-14);
        for u in [0.01, 0.2, 0.5, 0.77, 0.99] {
            assert!((t.cdf(t.quantile(u)) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn tabulated_rejects_garbage() {
        assert!(TabulatedDensity::new(vec![0.0], vec![1.0]).is_err());
        assert!(TabulatedDensity::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(TabulatedDensity::new(vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn sampling_stays_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = NoiseDensity::uniform(0.0, 1.0).unwrap();
        let t = NoiseDensity::tabulated(vec![0.0, 0.5, 1.0], vec![0.0, 2.0, 0.0]).unwrap();
        for _ in 0..1000 {
            let a = u.sample(&mut rng);
            let b = t.sample(&mut rng);
            assert!((0.0..1.0).contains(&a));
            assert!((0.0..=1.0).contains(&b));
        }
    }
}
