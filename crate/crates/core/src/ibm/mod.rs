//! Exact continuous-time simulation of the individual-based model.
//!
//! Every female initiates mating at rate `p_f(x)` with a male drawn
//! proportionally to `p_m`, and symmetrically for males. Each mating yields
//! one newborn, female or male with probability one half, whose trait is
//! drawn from the inheritance kernel. Deaths combine natural death `D` and
//! competition `(1 / N) sum_j U`.

mod fenwick;
mod population;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::InheritanceKernel;
use crate::measures::{GridMeasure, TraitGrid};
use crate::rates::RateSet;

pub use population::{Event, Individual, RateSummary, ScaledPopulation, Sex};

#[derive(Debug, Clone)]
pub struct IbmParams {
    pub rates: RateSet,
    pub kernel: InheritanceKernel,
    /// Trait grid used for clamping newborns and binning snapshots.
    pub grid: TraitGrid,
    pub scale: usize,
    pub t_end: f64,
    pub sample_times: Vec<f64>,
    pub seed: u64,
    /// Stop after this many events (a guard against runaway growth).
    pub max_events: Option<u64>,
}

impl IbmParams {
    fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.sample_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameters("sample_times must be sorted".into()));
        }
        if self
            .sample_times
            .iter()
            .any(|t| !(*t >= 0.0 && *t <= self.t_end))
        {
            return Err(Error::InvalidParameters(
                "sample_times must lie within [0, t_end]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub births: u64,
    pub female_births: u64,
    pub male_births: u64,
    pub deaths: u64,
    /// Newborn traits that fell outside the grid and were clamped.
    pub clamped: u64,
}

impl EventCounts {
    pub fn events(&self) -> u64 {
        self.births + self.deaths
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbmSnapshot {
    pub t: f64,
    pub males: GridMeasure,
    pub females: GridMeasure,
    pub n_males: usize,
    pub n_females: usize,
}

#[derive(Debug, Clone)]
pub struct IbmTrajectory {
    pub snapshots: Vec<IbmSnapshot>,
    pub counts: EventCounts,
    pub initial_size: usize,
    pub final_size: usize,
    /// Time at which the population died out, if it did.
    pub extinct_at: Option<f64>,
    /// Time at which all rates vanished with individuals still present.
    pub frozen_at: Option<f64>,
    /// Whether `max_events` cut the run short.
    pub truncated: bool,
}

impl IbmTrajectory {
    pub fn at(&self, t: f64) -> Result<&IbmSnapshot> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.snapshots
            .iter()
            .find(|s| (s.t - t).abs() <= tol)
            .ok_or(Error::MissingSnapshot { time: t })
    }
}

/// A running simulation: population, clock and random stream.
#[derive(Debug, Clone)]
pub struct Simulation {
    population: ScaledPopulation,
    kernel: InheritanceKernel,
    grid: TraitGrid,
    rng: ChaCha8Rng,
    time: f64,
    counts: EventCounts,
}

impl Simulation {
    pub fn new(
        individuals: &[Individual],
        scale: usize,
        rates: RateSet,
        kernel: InheritanceKernel,
        grid: TraitGrid,
        seed: u64,
    ) -> Result<Self> {
        let outside = individuals.iter().find(|i| !grid.contains(i.phenotype));
        if let Some(ind) = outside {
            return Err(Error::InvalidParameters(format!(
                "initial phenotype {} lies outside the grid",
                ind.phenotype
            )));
        }
        Ok(Self {
            population: ScaledPopulation::new(individuals, scale, rates)?,
            kernel,
            grid,
            rng: ChaCha8Rng::seed_from_u64(seed),
            time: 0.0,
            counts: EventCounts::default(),
        })
    }

    pub fn population(&self) -> &ScaledPopulation {
        &self.population
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn counts(&self) -> EventCounts {
        self.counts
    }

    pub fn event_rates(&self) -> RateSummary {
        self.population.event_rates()
    }

    /// Waits an exponential time with the total rate and performs one event.
    pub fn step(&mut self) -> Result<(f64, Event)> {
        let rates = self.population.event_rates();
        let total = rates.total();
        if !(total > 0.0) {
            return Err(Error::ExtinctPopulation { time: self.time });
        }
        let dt = self.draw_waiting_time(total);
        self.time += dt;
        let event = self.perform(&rates);
        Ok((dt, event))
    }

    fn draw_waiting_time(&mut self, total: f64) -> f64 {
        let u: f64 = self.rng.random();
        -(1.0 - u).ln() / total
    }

    fn perform(&mut self, rates: &RateSummary) -> Event {
        let (event, clamped) =
            self.population
                .apply_random_event(rates, &self.kernel, &self.grid, &mut self.rng);
        match &event {
            Event::Mating { offspring, .. } => {
                self.counts.births += 1;
                match offspring.sex {
                    Sex::Female => self.counts.female_births += 1,
                    Sex::Male => self.counts.male_births += 1,
                }
                if clamped {
                    self.counts.clamped += 1;
                }
            }
            Event::Death { .. } => self.counts.deaths += 1,
        }
        event
    }

    pub fn snapshot(&self, t: f64) -> IbmSnapshot {
        IbmSnapshot {
            t,
            males: self.population.empirical(Sex::Male, self.grid),
            females: self.population.empirical(Sex::Female, self.grid),
            n_males: self.population.count(Sex::Male),
            n_females: self.population.count(Sex::Female),
        }
    }
}

/// Runs one replica from `initial`, recording the empirical measures at the
/// requested sample times.
pub fn simulate(params: &IbmParams, initial: &[Individual]) -> Result<IbmTrajectory> {
    params.validate()?;
    if initial.is_empty() {
        return Err(Error::InvalidParameters("initial population is empty".into()));
    }
    let mut sim = Simulation::new(
        initial,
        params.scale,
        params.rates.clone(),
        params.kernel.clone(),
        params.grid,
        params.seed,
    )?;
    let mut snapshots = Vec::with_capacity(params.sample_times.len());
    let mut pending = params.sample_times.iter().copied().peekable();
    let (mut extinct_at, mut frozen_at, mut truncated) = (None, None, false);
    loop {
        let rates = sim.population.event_rates();
        let total = rates.total();
        if !(total > 0.0) {
            if sim.population.is_empty() {
                extinct_at = Some(sim.time);
            } else {
                frozen_at = Some(sim.time);
                for t in pending.by_ref() {
                    snapshots.push(sim.snapshot(t));
                }
            }
            break;
        }
        if params.max_events.is_some_and(|m| sim.counts.events() >= m) {
            truncated = true;
            break;
        }
        let next = sim.time + sim.draw_waiting_time(total);
        while let Some(&t) = pending.peek() {
            if t < next {
                snapshots.push(sim.snapshot(t));
                pending.next();
            } else {
                break;
            }
        }
        if next > params.t_end {
            sim.time = params.t_end;
            break;
        }
        sim.time = next;
        sim.perform(&rates);
    }
    Ok(IbmTrajectory {
        snapshots,
        counts: sim.counts,
        initial_size: initial.len(),
        final_size: sim.population.len(),
        extinct_at,
        frozen_at,
        truncated,
    })
}

/// `round(N * mass)` individuals per sex placed at cell centers by the
/// midpoint quantiles of each measure, so the empirical measures approach
/// `m0` and `f0` as `N` grows.
pub fn initial_population(m0: &GridMeasure, f0: &GridMeasure, scale: usize) -> Result<Vec<Individual>> {
    m0.check_grid(f0)?;
    let mut out = Vec::new();
    for (measure, sex) in [(f0, Sex::Female), (m0, Sex::Male)] {
        let mass = measure.total_mass();
        let count = (mass * scale as f64).round() as usize;
        if count == 0 {
            continue;
        }
        let grid = measure.grid();
        let mut cumulative = Vec::with_capacity(grid.n_cells());
        let mut acc = 0.0;
        for w in measure.weights() {
            acc += w / mass;
            cumulative.push(acc);
        }
        for k in 0..count {
            let u = (k as f64 + 0.5) / count as f64;
            let cell = cumulative.partition_point(|c| *c < u).min(grid.n_cells() - 1);
            out.push(Individual {
                phenotype: grid.center(cell),
                sex,
            });
        }
    }
    Ok(out)
}
