//! Deterministic integration of the macroscopic male/female trait measures.
//!
//! Raw system, per sex `s` with trait measure `m_s`:
//!
//! ```text
//! m_s' = B - (D_s + U_sm * m + U_sf * f) m_s
//! B    = 1/2 [ P(p_f f, q_m) + P(q_f, p_m m) ],   q = p m / int p dm
//! ```
//!
//! where `q` is the partner distribution of a sex. The normalized systems
//! evolve probability measures: `mu' = P(mu, nu) - mu`, `nu' = A (P(mu, nu) - nu)`
//! with a constant or time-dependent sex ratio `A`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{BirthOperator, InheritanceKernel};
use crate::measures::{GridMeasure, TraitGrid, MASS_TOLERANCE};
use crate::ode::{step_count, step_span, Scheme};
use crate::rates::{PairFn, RateSet, TraitFn};
use crate::totals::{classify, Classification};

/// The largest admissible step is this fraction of the fastest per-capita
/// rate's time scale.
pub const DT_SAFETY: f64 = 0.1;
/// Masses below this count as extinct in coupled runs.
pub const EXTINCTION_MASS: f64 = 1e-8;
const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub t: f64,
    /// Male trait measure (or `mu` in normalized runs).
    pub m: GridMeasure,
    /// Female trait measure (or `nu` in normalized runs).
    pub f: GridMeasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Positivity {
    /// Zero out negative weights; normalized runs also rescale to unit mass.
    #[default]
    Clip,
    /// Retry a step with halved `dt` when it produces negative weights.
    RejectStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub positivity: Positivity,
    /// Record a snapshot every `sample_every` steps (and at the end).
    #[serde(default = "default_stride")]
    pub sample_every: usize,
}

fn default_stride() -> usize {
    1
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            scheme: Scheme::Rk4,
            positivity: Positivity::Clip,
            sample_every: 1,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_positivity(mut self, positivity: Positivity) -> Self {
        self.positivity = positivity;
        self
    }

    pub fn sampled_every(mut self, stride: usize) -> Self {
        self.sample_every = stride;
        self
    }

    /// Stride that puts snapshots `interval` apart.
    pub fn sampled_at_interval(self, interval: f64) -> Self {
        let stride = (interval / self.dt).round().max(1.0) as usize;
        self.sampled_every(stride)
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameters(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParameters("sample_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps. When `dt` does not divide `t_end` the last step is
    /// shortened so runs always end at `t_end`.
    fn steps(&self) -> usize {
        step_count(self.t_end, self.dt)
    }

    /// Start and length of step `k` out of `steps`, measured from zero.
    fn span(&self, k: usize, steps: usize) -> (f64, f64) {
        step_span(self.t_end, self.dt, k, steps)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub dt_max: f64,
    /// Total negative mass removed by clipping.
    pub clipped_mass: f64,
    pub clip_events: usize,
    /// Right-hand side evaluations where a sex was absent, so no births.
    pub empty_sex_evaluations: usize,
    pub step_halvings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<MacroState>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn last(&self) -> &MacroState {
        self.snapshots.last().expect("trajectories hold the initial state")
    }

    /// Snapshot recorded at time `t`.
    pub fn at(&self, t: f64) -> Result<&MacroState> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.snapshots
            .iter()
            .find(|s| (s.t - t).abs() <= tol)
            .ok_or(Error::MissingSnapshot { time: t })
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }
}

#[derive(Debug, Clone)]
enum Interaction {
    Constant { ff: f64, fm: f64, mf: f64, mm: f64 },
    Matrix { ff: Vec<f64>, fm: Vec<f64>, mf: Vec<f64>, mm: Vec<f64> },
}

/// Rates evaluated on the grid together with the birth operator.
#[derive(Debug, Clone)]
pub struct MacroModel {
    grid: TraitGrid,
    birth: BirthOperator,
    p_f: Vec<f64>,
    p_m: Vec<f64>,
    d_f: Vec<f64>,
    d_m: Vec<f64>,
    constant_mating: bool,
    interaction: Interaction,
    rates: RateSet,
}

/// Right-hand side of the raw system at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Rhs {
    pub dm: Vec<f64>,
    pub df: Vec<f64>,
    /// Mass of the birth term of either sex, `lambda` for constant rates.
    pub birth_mass: f64,
    pub empty_sex: bool,
}

impl MacroModel {
    pub fn new(rates: RateSet, kernel: &InheritanceKernel, grid: TraitGrid) -> Result<Self> {
        let birth = BirthOperator::new(kernel, grid)?;
        Self::with_operator(rates, birth)
    }

    pub fn with_operator(rates: RateSet, birth: BirthOperator) -> Result<Self> {
        let grid = *birth.grid();
        let centers = grid.centers();
        let on_grid = |r: &TraitFn, name: &str| -> Result<Vec<f64>> {
            let v: Vec<f64> = centers.iter().map(|&x| r.eval(x)).collect();
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidParameters(format!(
                    "{name} must be finite and non-negative on the grid"
                )));
            }
            Ok(v)
        };
        let p_f = on_grid(&rates.p_f, "p_f")?;
        let p_m = on_grid(&rates.p_m, "p_m")?;
        let d_f = on_grid(&rates.d_f, "D_f")?;
        let d_m = on_grid(&rates.d_m, "D_m")?;
        let interaction = match (
            rates.u_ff.constant(),
            rates.u_fm.constant(),
            rates.u_mf.constant(),
            rates.u_mm.constant(),
        ) {
            (Some(ff), Some(fm), Some(mf), Some(mm)) => Interaction::Constant { ff, fm, mf, mm },
            _ => {
                let table = |u: &PairFn| -> Vec<f64> {
                    centers
                        .iter()
                        .flat_map(|&x| centers.iter().map(move |&y| (x, y)))
                        .map(|(x, y)| u.eval(x, y))
                        .collect()
                };
                Interaction::Matrix {
                    ff: table(&rates.u_ff),
                    fm: table(&rates.u_fm),
                    mf: table(&rates.u_mf),
                    mm: table(&rates.u_mm),
                }
            }
        };
        Ok(Self {
            grid,
            birth,
            p_f,
            p_m,
            d_f,
            d_m,
            constant_mating: rates.p_f.constant().is_some() && rates.p_m.constant().is_some(),
            interaction,
            rates,
        })
    }

    pub fn grid(&self) -> &TraitGrid {
        &self.grid
    }

    pub fn rates(&self) -> &RateSet {
        &self.rates
    }

    pub fn birth_operator(&self) -> &BirthOperator {
        &self.birth
    }

    /// Birth measure shared by both sexes; `None` when a sex is absent.
    fn birth_weights(&self, m: &[f64], f: &[f64]) -> Result<Option<Vec<f64>>> {
        let mass_m: f64 = m.iter().sum();
        let mass_f: f64 = f.iter().sum();
        if !(mass_m > 0.0 && mass_f > 0.0) {
            return Ok(None);
        }
        if self.constant_mating {
            let coef = 0.5 * (self.p_f[0] / mass_m + self.p_m[0] / mass_f);
            let mut b = self.birth.apply_weights(f, m)?;
            b.iter_mut().for_each(|x| *x *= coef);
            return Ok(Some(b));
        }
        let weighted = |p: &[f64], w: &[f64]| -> Vec<f64> { p.iter().zip(w).map(|(a, b)| a * b).collect() };
        let pf_f = weighted(&self.p_f, f);
        let pm_m = weighted(&self.p_m, m);
        let partner = |pw: &[f64], w: &[f64], mass: f64| -> Vec<f64> {
            let total: f64 = pw.iter().sum();
            if total > 0.0 {
                pw.iter().map(|x| x / total).collect()
            } else {
                w.iter().map(|x| x / mass).collect()
            }
        };
        let q_m = partner(&pm_m, m, mass_m);
        let q_f = partner(&pf_f, f, mass_f);
        let a = self.birth.apply_weights(&pf_f, &q_m)?;
        let b = self.birth.apply_weights(&q_f, &pm_m)?;
        Ok(Some(a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect()))
    }

    /// Per-capita death rates of males and females at every cell.
    fn death_rates(&self, m: &[f64], f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.n_cells();
        match &self.interaction {
            Interaction::Constant { ff, fm, mf, mm } => {
                let mass_m: f64 = m.iter().sum();
                let mass_f: f64 = f.iter().sum();
                let extra_m = mm * mass_m + mf * mass_f;
                let extra_f = fm * mass_m + ff * mass_f;
                (
                    self.d_m.iter().map(|d| d + extra_m).collect(),
                    self.d_f.iter().map(|d| d + extra_f).collect(),
                )
            }
            Interaction::Matrix { ff, fm, mf, mm } => {
                let dot = |row: &[f64], w: &[f64]| row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
                let dm = (0..n)
                    .map(|i| self.d_m[i] + dot(&mm[i * n..(i + 1) * n], m) + dot(&mf[i * n..(i + 1) * n], f))
                    .collect();
                let df = (0..n)
                    .map(|i| self.d_f[i] + dot(&fm[i * n..(i + 1) * n], m) + dot(&ff[i * n..(i + 1) * n], f))
                    .collect();
                (dm, df)
            }
        }
    }

    fn rhs_weights(&self, m: &[f64], f: &[f64]) -> Result<Rhs> {
        let birth = self.birth_weights(m, f)?;
        let (death_m, death_f) = self.death_rates(m, f);
        let empty_sex = birth.is_none();
        let birth = birth.unwrap_or_else(|| vec![0.0; m.len()]);
        let dm = birth.iter().zip(&death_m).zip(m).map(|((b, d), x)| b - d * x).collect();
        let df = birth.iter().zip(&death_f).zip(f).map(|((b, d), x)| b - d * x).collect();
        Ok(Rhs {
            dm,
            df,
            birth_mass: birth.iter().sum(),
            empty_sex,
        })
    }

    /// Right-hand side of the raw system. A missing sex is not an error: the
    /// birth term vanishes and `empty_sex` is set.
    pub fn rhs(&self, m: &GridMeasure, f: &GridMeasure) -> Result<Rhs> {
        if *m.grid() != self.grid || *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        self.rhs_weights(m.weights(), f.weights())
    }

    /// Fastest per-capita rate at a state: the largest death rate plus the
    /// larger of the per-capita birth rates `B / M`, `B / F`.
    pub fn max_per_capita_rate(&self, m: &GridMeasure, f: &GridMeasure) -> Result<f64> {
        let rhs = self.rhs(m, f)?;
        let (death_m, death_f) = self.death_rates(m.weights(), f.weights());
        let max_death = death_m.iter().chain(&death_f).cloned().fold(0.0, f64::max);
        let (mass_m, mass_f) = (m.total_mass(), f.total_mass());
        let per_capita_birth = if rhs.empty_sex {
            0.0
        } else {
            (rhs.birth_mass / mass_m).max(rhs.birth_mass / mass_f)
        };
        Ok(max_death + per_capita_birth)
    }

    /// Largest stable step for a run started at `(m, f)`.
    pub fn dt_max(&self, m: &GridMeasure, f: &GridMeasure) -> Result<f64> {
        let rate = self.max_per_capita_rate(m, f)?;
        Ok(if rate > 0.0 { DT_SAFETY / rate } else { f64::INFINITY })
    }
}

/// One-off evaluation of the raw right-hand side.
pub fn rhs_general(state: &MacroState, rates: RateSet, kernel: &InheritanceKernel) -> Result<Rhs> {
    MacroModel::new(rates, kernel, *state.m.grid())?.rhs(&state.m, &state.f)
}

/// Sex ratio `A` of the normalized system.
#[derive(Debug, Clone, PartialEq)]
pub enum SexRatio {
    Constant(f64),
    /// Piecewise linear through `(times[i], values[i])`, constant beyond the ends.
    Series { times: Vec<f64>, values: Vec<f64> },
}

impl SexRatio {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant(a) => *a,
            Self::Series { times, values } => {
                let k = times.partition_point(|s| *s <= t);
                if k == 0 {
                    values[0]
                } else if k == times.len() {
                    values[values.len() - 1]
                } else {
                    let (t0, t1) = (times[k - 1], times[k]);
                    let w = (t - t0) / (t1 - t0);
                    values[k - 1] * (1.0 - w) + values[k] * w
                }
            }
        }
    }

    fn max(&self) -> f64 {
        match self {
            Self::Constant(a) => *a,
            Self::Series { values, .. } => values.iter().cloned().fold(0.0, f64::max),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |a: f64| !(a > 0.0 && a.is_finite());
        match self {
            Self::Constant(a) if bad(*a) => Err(Error::InvalidParameters(format!(
                "sex ratio A must be positive, got {a}"
            ))),
            Self::Series { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::InvalidParameters(
                        "sex ratio series needs matching nonempty times and values".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidParameters(
                        "sex ratio series times must be strictly increasing".into(),
                    ));
                }
                if values.iter().any(|a| bad(*a)) {
                    return Err(Error::InvalidParameters(
                        "sex ratio series values must be positive".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Time stepping shared by the raw and normalized systems.
struct Stepper<'a> {
    scheme: Scheme,
    positivity: Positivity,
    renormalize: bool,
    diagnostics: &'a mut Diagnostics,
}

impl Stepper<'_> {
    fn advance<F>(&mut self, t: f64, y: &[f64], dt: f64, f: &mut F) -> Result<Vec<f64>>
    where
        F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    {
        self.advance_depth(t, y, dt, f, 0)
    }

    fn advance_depth<F>(&mut self, t: f64, y: &[f64], dt: f64, f: &mut F, depth: u32) -> Result<Vec<f64>>
    where
        F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    {
        let mut next = self.scheme.step(t, y, dt, &mut *f)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "solution became non-finite at t = {t}"
            )));
        }
        if next.iter().all(|v| *v >= 0.0) {
            return Ok(next);
        }
        match self.positivity {
            Positivity::RejectStep => {
                if depth >= MAX_HALVINGS {
                    return Err(Error::StepRejected {
                        time: t,
                        halvings: depth,
                    });
                }
                self.diagnostics.step_halvings += 1;
                let half = 0.5 * dt;
                let mid = self.advance_depth(t, y, half, f, depth + 1)?;
                self.advance_depth(t + half, &mid, half, f, depth + 1)
            }
            Positivity::Clip => {
                self.diagnostics.clip_events += 1;
                let n = next.len() / 2;
                for v in next.iter_mut().filter(|v| **v < 0.0) {
                    self.diagnostics.clipped_mass += -*v;
                    *v = 0.0;
                }
                if self.renormalize {
                    let (first, second) = next.split_at_mut(n);
                    for half in [first, second] {
                        let total: f64 = half.iter().sum();
                        if total > 0.0 {
                            half.iter_mut().for_each(|v| *v /= total);
                        }
                    }
                }
                Ok(next)
            }
        }
    }
}

fn split(grid: TraitGrid, t: f64, y: &[f64]) -> Result<MacroState> {
    let n = grid.n_cells();
    Ok(MacroState {
        t,
        m: GridMeasure::from_weights(grid, y[..n].to_vec())?,
        f: GridMeasure::from_weights(grid, y[n..].to_vec())?,
    })
}

fn join(state: &MacroState) -> Vec<f64> {
    state.m.weights().iter().chain(state.f.weights()).copied().collect()
}

fn check_dt(dt: f64, dt_max: f64) -> Result<()> {
    if dt > dt_max * (1.0 + 1e-12) {
        Err(Error::StepTooLarge { dt, dt_max })
    } else {
        Ok(())
    }
}

/// Integrates the raw system. Every step is checked against
/// `dt <= 0.1 / (fastest per-capita rate)` evaluated at the initial state.
pub fn integrate(state0: &MacroState, model: &MacroModel, config: &SolverConfig) -> Result<Trajectory> {
    run_raw(state0, model, config, |_, _| Ok(()))
}

fn run_raw<H>(state0: &MacroState, model: &MacroModel, config: &SolverConfig, mut hook: H) -> Result<Trajectory>
where
    H: FnMut(f64, &[f64]) -> Result<()>,
{
    config.validate()?;
    let grid = *model.grid();
    if *state0.m.grid() != grid || *state0.f.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let dt_max = model.dt_max(&state0.m, &state0.f)?;
    check_dt(config.dt, dt_max)?;
    let n = grid.n_cells();
    let mut diagnostics = Diagnostics {
        dt_max,
        ..Diagnostics::default()
    };
    let mut snapshots = vec![state0.clone()];
    let mut y = join(state0);
    hook(state0.t, &y)?;
    let steps = config.steps();
    let mut empty = 0;
    for k in 0..steps {
        let (offset, h) = config.span(k, steps);
        let t = state0.t + offset;
        let mut rhs = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
            let r = model.rhs_weights(&y[..n], &y[n..])?;
            if r.empty_sex {
                empty += 1;
            }
            Ok(r.dm.into_iter().chain(r.df).collect())
        };
        let mut stepper = Stepper {
            scheme: config.scheme,
            positivity: config.positivity,
            renormalize: false,
            diagnostics: &mut diagnostics,
        };
        y = stepper.advance(t, &y, h, &mut rhs)?;
        let t_next = state0.t + offset + h;
        hook(t_next, &y)?;
        if (k + 1) % config.sample_every == 0 || k + 1 == steps {
            snapshots.push(split(grid, t_next, &y)?);
        }
    }
    diagnostics.steps = steps;
    diagnostics.empty_sex_evaluations = empty;
    Ok(Trajectory {
        snapshots,
        diagnostics,
    })
}

/// Integrates the normalized system from probability measures `mu0`, `nu0`.
/// Both components are rescaled to unit mass after every step.
pub fn integrate_normalized(
    mu0: &GridMeasure,
    nu0: &GridMeasure,
    a: &SexRatio,
    birth: &BirthOperator,
    config: &SolverConfig,
) -> Result<Trajectory> {
    config.validate()?;
    a.validate()?;
    let grid = *birth.grid();
    if *mu0.grid() != grid || *nu0.grid() != grid {
        return Err(Error::GridMismatch);
    }
    for (name, m) in [("mu0", mu0), ("nu0", nu0)] {
        if (m.total_mass() - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!(
                "{name} must be a probability measure, mass is {}",
                m.total_mass()
            )));
        }
    }
    let dt_max = DT_SAFETY / a.max().max(1.0);
    check_dt(config.dt, dt_max)?;
    let n = grid.n_cells();
    let mut diagnostics = Diagnostics {
        dt_max,
        ..Diagnostics::default()
    };
    let state0 = MacroState {
        t: 0.0,
        m: mu0.clone(),
        f: nu0.clone(),
    };
    let mut snapshots = vec![state0.clone()];
    let mut y = join(&state0);
    let steps = config.steps();
    let mut rhs = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let p = birth.apply_weights(&y[..n], &y[n..])?;
        let at = a.eval(t);
        let dmu = p.iter().zip(&y[..n]).map(|(p, u)| p - u);
        let dnu = p.iter().zip(&y[n..]).map(|(p, v)| at * (p - v));
        Ok(dmu.chain(dnu).collect())
    };
    for k in 0..steps {
        let (t, h) = config.span(k, steps);
        let mut stepper = Stepper {
            scheme: config.scheme,
            positivity: config.positivity,
            renormalize: true,
            diagnostics: &mut diagnostics,
        };
        y = stepper.advance(t, &y, h, &mut rhs)?;
        // Unit mass is neutrally stable at best: a mass defect grows like
        // exp(sqrt(A) t), so it is projected out after every step.
        let (first, second) = y.split_at_mut(n);
        for half in [first, second] {
            let total: f64 = half.iter().sum();
            half.iter_mut().for_each(|v| *v /= total);
        }
        if (k + 1) % config.sample_every == 0 || k + 1 == steps {
            snapshots.push(split(grid, t + h, &y)?);
        }
    }
    diagnostics.steps = steps;
    Ok(Trajectory {
        snapshots,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    pub raw: Trajectory,
    /// Normalized male and female distributions at the raw snapshot times.
    pub normalized: Vec<MacroState>,
    /// `int_0^t lambda / M ds` at the snapshot times: the clock of the
    /// normalized system.
    pub rescaled_times: Vec<f64>,
    /// `(t, M(t) / F(t))` at the snapshot times.
    pub sex_ratio: Vec<(f64, f64)>,
    /// `(d(mu_t, mu*), d(nu_t, mu*))` when a reference law was given.
    pub distances: Option<Vec<(f64, f64)>>,
}

/// Runs the raw system and extracts the normalized view: the trait
/// distributions, the sex ratio `A(t)`, and the rescaled clock.
pub fn coupled_full_run(
    m0: &GridMeasure,
    f0: &GridMeasure,
    model: &MacroModel,
    config: &SolverConfig,
    mu_star: Option<&GridMeasure>,
) -> Result<CoupledRun> {
    if let Some(r) = model.rates().constants() {
        if classify(&r) == Classification::Extinction {
            return Err(Error::InvalidParameters(
                "coupled runs need rates in the persistence regime".into(),
            ));
        }
    }
    let n = model.grid().n_cells();
    let mut clock = Vec::new();
    let mut elapsed = 0.0;
    let mut previous: Option<(f64, f64)> = None;
    let hook = |t: f64, y: &[f64]| -> Result<()> {
        let (mass_m, mass_f): (f64, f64) = (y[..n].iter().sum(), y[n..].iter().sum());
        if mass_m < EXTINCTION_MASS || mass_f < EXTINCTION_MASS {
            return Err(Error::ExtinctionDetected {
                time: t,
                male: mass_m,
                female: mass_f,
            });
        }
        let birth: f64 = model
            .birth_weights(&y[..n], &y[n..])?
            .map(|b| b.iter().sum())
            .unwrap_or(0.0);
        let rate = birth / mass_m;
        if let Some((t0, r0)) = previous {
            elapsed += 0.5 * (rate + r0) * (t - t0);
        }
        previous = Some((t, rate));
        clock.push((t, elapsed));
        Ok(())
    };
    let state0 = MacroState {
        t: 0.0,
        m: m0.clone(),
        f: f0.clone(),
    };
    let raw = run_raw(&state0, model, config, hook)?;
    let mut normalized = Vec::with_capacity(raw.snapshots.len());
    let mut sex_ratio = Vec::with_capacity(raw.snapshots.len());
    let mut rescaled_times = Vec::with_capacity(raw.snapshots.len());
    for s in &raw.snapshots {
        let (mu, mass_m) = s.m.normalize()?;
        let (nu, mass_f) = s.f.normalize()?;
        sex_ratio.push((s.t, mass_m / mass_f));
        let tol = 1e-9 * s.t.abs().max(1.0);
        let tau = clock
            .iter()
            .find(|(t, _)| (t - s.t).abs() <= tol)
            .map(|(_, tau)| *tau)
            .unwrap_or(elapsed);
        rescaled_times.push(tau);
        normalized.push(MacroState { t: s.t, m: mu, f: nu });
    }
    let distances = match mu_star {
        Some(star) => Some(
            normalized
                .iter()
                .map(|s| Ok((s.m.wasserstein1(star)?, s.f.wasserstein1(star)?)))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    Ok(CoupledRun {
        raw,
        normalized,
        rescaled_times,
        sex_ratio,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::NoiseDensity;
    use crate::rates::ConstantRates;

    fn setup(rates: ConstantRates) -> (MacroModel, TraitGrid) {
        let grid = TraitGrid::new(-6.0, 6.0, 48).unwrap();
        let kernel = InheritanceKernel::additive(NoiseDensity::gaussian(0.5).unwrap());
        (MacroModel::new(rates.into(), &kernel, grid).unwrap(), grid)
    }

    #[test]
    fn empty_state_is_stationary() {
        let (model, grid) = setup(ConstantRates::symmetric(2.0, 1.0, 0.25));
        let z = GridMeasure::zeros(grid);
        let rhs = model.rhs(&z, &z).unwrap();
        assert!(rhs.empty_sex);
        assert!(rhs.dm.iter().chain(&rhs.df).all(|v| *v == 0.0));
    }

    #[test]
    fn integrated_rhs_is_totals_rhs() {
        let r = ConstantRates {
            p_f: 1.5,
            p_m: 2.5,
            d_f: 0.7,
            d_m: 1.1,
            u_ff: 0.2,
            u_fm: 0.3,
            u_mf: 0.4,
            u_mm: 0.1,
        };
        let (model, grid) = setup(r);
        let m = GridMeasure::gaussian(grid, 0.5, 1.0, 1.7).unwrap();
        let f = GridMeasure::gaussian(grid, -0.5, 0.8, 0.9).unwrap();
        let rhs = model.rhs(&m, &f).unwrap();
        let s = crate::totals::TotalsState::new(1.7, 0.9);
        let (dm, df) = crate::totals::totals_rhs(s, &r);
        assert!((rhs.dm.iter().sum::<f64>() - dm).abs() < 1e-12);
        assert!((rhs.df.iter().sum::<f64>() - df).abs() < 1e-12);
        assert!((rhs.birth_mass - s.lambda(&r)).abs() < 1e-12);
    }

    #[test]
    fn missing_sex_means_pure_death() {
        let (model, grid) = setup(ConstantRates::symmetric(2.0, 1.0, 0.25));
        let m = GridMeasure::gaussian(grid, 0.0, 1.0, 1.0).unwrap();
        let rhs = model.rhs(&m, &GridMeasure::zeros(grid)).unwrap();
        assert!(rhs.empty_sex);
        assert_eq!(rhs.birth_mass, 0.0);
        assert!((rhs.dm.iter().sum::<f64>() + 1.25).abs() < 1e-12);
    }

    #[test]
    fn oversized_step_is_refused() {
        let (model, grid) = setup(ConstantRates::symmetric(2.0, 1.0, 0.25));
        let m = GridMeasure::gaussian(grid, 0.0, 1.0, 1.0).unwrap();
        let s = MacroState { t: 0.0, m: m.clone(), f: m };
        let err = integrate(&s, &model, &SolverConfig::new(1.0, 2.0)).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn sex_ratio_series_interpolates() {
        let a = SexRatio::Series {
            times: vec![0.0, 1.0, 3.0],
            values: vec![1.0, 2.0, 4.0],
        };
        assert_eq!(a.eval(-1.0), 1.0);
        assert_eq!(a.eval(0.5), 1.5);
        assert_eq!(a.eval(2.0), 3.0);
        assert_eq!(a.eval(10.0), 4.0);
    }

    #[test]
    fn varying_mating_uses_partner_distributions() {
        let mut rates: RateSet = ConstantRates::symmetric(1.0, 1.0, 0.1).into();
        rates.p_f = TraitFn::function(|x: f64| 1.0 + 0.5 * x.tanh());
        rates.p_m = TraitFn::function(|x: f64| 1.0 - 0.3 * x.tanh());
        let grid = TraitGrid::new(-6.0, 6.0, 48).unwrap();
        let kernel = InheritanceKernel::additive(NoiseDensity::gaussian(0.5).unwrap());
        let model = MacroModel::new(rates.clone(), &kernel, grid).unwrap();
        let m = GridMeasure::gaussian(grid, 0.5, 1.0, 2.0).unwrap();
        let f = GridMeasure::gaussian(grid, -0.5, 0.8, 1.0).unwrap();
        let rhs = model.rhs(&m, &f).unwrap();
        let pf: f64 = f.weights().iter().zip(grid.centers()).map(|(w, x)| w * rates.p_f.eval(x)).sum();
        let pm: f64 = m.weights().iter().zip(grid.centers()).map(|(w, x)| w * rates.p_m.eval(x)).sum();
        assert!((rhs.birth_mass - 0.5 * (pf + pm)).abs() < 1e-12);
    }
}
