use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::InheritanceKernel;
use crate::measures::{GridMeasure, TraitGrid};
use crate::rates::{PairFn, RateSet};

use super::fenwick::Fenwick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    fn index(self) -> usize {
        match self {
            Self::Female => 0,
            Self::Male => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Individual {
    pub phenotype: f64,
    pub sex: Sex,
}

impl Individual {
    pub fn female(phenotype: f64) -> Self {
        Self {
            phenotype,
            sex: Sex::Female,
        }
    }

    pub fn male(phenotype: f64) -> Self {
        Self {
            phenotype,
            sex: Sex::Male,
        }
    }
}

/// Event rates summed over the population.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RateSummary {
    /// Matings initiated by females, `sum_f p_f`, when a male exists.
    pub female_initiated: f64,
    /// Matings initiated by males, `sum_m p_m`, when a female exists.
    pub male_initiated: f64,
    pub natural_death: f64,
    pub competition_death: f64,
}

impl RateSummary {
    pub fn mating(&self) -> f64 {
        self.female_initiated + self.male_initiated
    }

    pub fn death(&self) -> f64 {
        self.natural_death + self.competition_death
    }

    pub fn total(&self) -> f64 {
        self.mating() + self.death()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// Female `female` and male `male` (indices before the birth) produced
    /// `offspring`.
    Mating {
        female: usize,
        male: usize,
        offspring: Individual,
    },
    Death { individual: Individual },
}

/// Individuals of one sex with cached rate sums.
#[derive(Debug, Clone, Default)]
struct Group {
    phenotypes: Vec<f64>,
    mating: Fenwick,
    death: Fenwick,
    /// Per-individual competition rates; only kept when `U` varies with trait.
    load: Option<Fenwick>,
}

impl Group {
    fn len(&self) -> usize {
        self.phenotypes.len()
    }
}

/// Finite population with atoms of mass `1 / N`.
///
/// An individual of sex `a` at trait `x` dies at rate
/// `D_a(x) + (1 / N) sum_j U_{a, s_j}(x, x_j)`, the sum running over the whole
/// population including the individual itself.
#[derive(Debug, Clone)]
pub struct ScaledPopulation {
    scale: usize,
    groups: [Group; 2],
    rates: RateSet,
    /// `U_ab` as `[a][b]` with index 0 for females.
    constant_u: Option<[[f64; 2]; 2]>,
}

impl ScaledPopulation {
    pub fn new(individuals: &[Individual], scale: usize, rates: RateSet) -> Result<Self> {
        if scale == 0 {
            return Err(Error::InvalidParameters("scale N must be positive".into()));
        }
        let constant_u = match (
            rates.u_ff.constant(),
            rates.u_fm.constant(),
            rates.u_mf.constant(),
            rates.u_mm.constant(),
        ) {
            (Some(ff), Some(fm), Some(mf), Some(mm)) => Some([[ff, fm], [mf, mm]]),
            _ => None,
        };
        let mut pop = Self {
            scale,
            groups: [Group::default(), Group::default()],
            rates,
            constant_u,
        };
        for ind in individuals {
            if !ind.phenotype.is_finite() {
                return Err(Error::InvalidParameters("phenotypes must be finite".into()));
            }
            let g = &mut pop.groups[ind.sex.index()];
            g.phenotypes.push(ind.phenotype);
            let (p, d) = match ind.sex {
                Sex::Female => (pop.rates.p_f.eval(ind.phenotype), pop.rates.d_f.eval(ind.phenotype)),
                Sex::Male => (pop.rates.p_m.eval(ind.phenotype), pop.rates.d_m.eval(ind.phenotype)),
            };
            if !(p >= 0.0 && d >= 0.0 && p.is_finite() && d.is_finite()) {
                return Err(Error::InvalidParameters(format!(
                    "rates at phenotype {} must be finite and non-negative",
                    ind.phenotype
                )));
            }
            g.mating.push(p);
            g.death.push(d);
        }
        if pop.constant_u.is_none() {
            for sex in [Sex::Female, Sex::Male] {
                let loads = pop.recompute_loads(sex);
                pop.groups[sex.index()].load = Some(Fenwick::from_values(loads));
            }
        }
        Ok(pop)
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn count(&self, sex: Sex) -> usize {
        self.groups[sex.index()].len()
    }

    pub fn len(&self) -> usize {
        self.count(Sex::Female) + self.count(Sex::Male)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phenotypes(&self, sex: Sex) -> &[f64] {
        &self.groups[sex.index()].phenotypes
    }

    pub fn individuals(&self) -> Vec<Individual> {
        let f = self.phenotypes(Sex::Female).iter().map(|&x| Individual::female(x));
        let m = self.phenotypes(Sex::Male).iter().map(|&x| Individual::male(x));
        f.chain(m).collect()
    }

    fn u(&self, a: Sex, b: Sex) -> &PairFn {
        match (a, b) {
            (Sex::Female, Sex::Female) => &self.rates.u_ff,
            (Sex::Female, Sex::Male) => &self.rates.u_fm,
            (Sex::Male, Sex::Female) => &self.rates.u_mf,
            (Sex::Male, Sex::Male) => &self.rates.u_mm,
        }
    }

    fn recompute_loads(&self, sex: Sex) -> Vec<f64> {
        let n = self.scale as f64;
        self.phenotypes(sex)
            .iter()
            .map(|&x| {
                let mut load = 0.0;
                for other in [Sex::Female, Sex::Male] {
                    let u = self.u(sex, other);
                    load += self.phenotypes(other).iter().map(|&y| u.eval(x, y)).sum::<f64>();
                }
                load / n
            })
            .collect()
    }

    /// Competition rate of one individual of `sex` when `U` is constant.
    fn constant_load(&self, sex: Sex) -> f64 {
        let u = self.constant_u.expect("constant competition");
        let row = u[sex.index()];
        (row[0] * self.count(Sex::Female) as f64 + row[1] * self.count(Sex::Male) as f64)
            / self.scale as f64
    }

    fn competition_total(&self, sex: Sex) -> f64 {
        match &self.groups[sex.index()].load {
            Some(load) => load.total().max(0.0),
            None => self.count(sex) as f64 * self.constant_load(sex),
        }
    }

    pub fn event_rates(&self) -> RateSummary {
        let [females, males] = &self.groups;
        let both = !females.phenotypes.is_empty() && !males.phenotypes.is_empty();
        RateSummary {
            female_initiated: if both { females.mating.total().max(0.0) } else { 0.0 },
            male_initiated: if both { males.mating.total().max(0.0) } else { 0.0 },
            natural_death: (females.death.total() + males.death.total()).max(0.0),
            competition_death: self.competition_total(Sex::Female) + self.competition_total(Sex::Male),
        }
    }

    /// Total death rate of individual `i` of `sex`.
    pub fn death_rate(&self, sex: Sex, i: usize) -> f64 {
        let g = &self.groups[sex.index()];
        let load = match &g.load {
            Some(load) => load.get(i),
            None => self.constant_load(sex),
        };
        g.death.get(i) + load
    }

    fn add(&mut self, ind: Individual) {
        let x = ind.phenotype;
        let (p, d) = match ind.sex {
            Sex::Female => (self.rates.p_f.eval(x), self.rates.d_f.eval(x)),
            Sex::Male => (self.rates.p_m.eval(x), self.rates.d_m.eval(x)),
        };
        if self.constant_u.is_none() {
            self.shift_loads(ind, 1.0);
        }
        let g = &mut self.groups[ind.sex.index()];
        g.phenotypes.push(x);
        g.mating.push(p.max(0.0));
        g.death.push(d.max(0.0));
        if self.constant_u.is_none() {
            let n = self.scale as f64;
            let own: f64 = [Sex::Female, Sex::Male]
                .iter()
                .map(|&other| {
                    let u = self.u(ind.sex, other);
                    self.phenotypes(other).iter().map(|&y| u.eval(x, y)).sum::<f64>()
                })
                .sum();
            self.groups[ind.sex.index()]
                .load
                .as_mut()
                .expect("loads are tracked")
                .push(own / n);
        }
    }

    fn remove(&mut self, sex: Sex, i: usize) -> Individual {
        let g = &mut self.groups[sex.index()];
        let x = g.phenotypes.swap_remove(i);
        g.mating.swap_remove(i);
        g.death.swap_remove(i);
        if let Some(load) = g.load.as_mut() {
            load.swap_remove(i);
        }
        let ind = Individual { phenotype: x, sex };
        if self.constant_u.is_none() {
            self.shift_loads(ind, -1.0);
        }
        ind
    }

    /// Adds (`sign = 1`) or removes (`sign = -1`) the competition pressure of
    /// `source` on everybody else currently present.
    fn shift_loads(&mut self, source: Individual, sign: f64) {
        let n = self.scale as f64;
        for sex in [Sex::Female, Sex::Male] {
            let u = self.u(sex, source.sex).clone();
            let g = &mut self.groups[sex.index()];
            let load = g.load.as_mut().expect("loads are tracked");
            let values: Vec<f64> = g
                .phenotypes
                .iter()
                .zip(load.values())
                .map(|(&x, &l)| l + sign * u.eval(x, source.phenotype) / n)
                .collect();
            *load = Fenwick::from_values(values);
        }
    }

    /// Draws the next event given `rates`, applies it, and returns it. The
    /// offspring trait is clamped into `grid`; the bool reports a clamp.
    pub(crate) fn apply_random_event<R: Rng + ?Sized>(
        &mut self,
        rates: &RateSummary,
        kernel: &InheritanceKernel,
        grid: &TraitGrid,
        rng: &mut R,
    ) -> (Event, bool) {
        let mut u = rng.random::<f64>() * rates.total();
        if u < rates.mating() {
            let (female, male) = if u < rates.female_initiated {
                let f = self.groups[0].mating.find(u);
                (f, self.pick_partner(Sex::Male, rng))
            } else {
                u -= rates.female_initiated;
                let m = self.groups[1].mating.find(u.min(rates.male_initiated));
                (self.pick_partner(Sex::Female, rng), m)
            };
            let x = self.groups[0].phenotypes[female];
            let y = self.groups[1].phenotypes[male];
            let raw = kernel.sample_offspring(x, y, rng);
            let phenotype = grid.clamp(raw);
            let sex = if rng.random::<bool>() { Sex::Female } else { Sex::Male };
            let offspring = Individual { phenotype, sex };
            self.add(offspring);
            return (
                Event::Mating {
                    female,
                    male,
                    offspring,
                },
                phenotype != raw,
            );
        }
        u -= rates.mating();
        let (sex, i) = if u < rates.natural_death {
            let female_total = self.groups[0].death.total();
            if u < female_total {
                (Sex::Female, self.groups[0].death.find(u))
            } else {
                (Sex::Male, self.groups[1].death.find(u - female_total))
            }
        } else {
            u -= rates.natural_death;
            let female_total = self.competition_total(Sex::Female);
            let (sex, v) = if u < female_total && self.count(Sex::Female) > 0 {
                (Sex::Female, u)
            } else {
                (Sex::Male, (u - female_total).max(0.0))
            };
            let i = match &self.groups[sex.index()].load {
                Some(load) => load.find(v),
                None => rng.random_range(0..self.count(sex)),
            };
            (sex, i)
        };
        let individual = self.remove(sex, i);
        (Event::Death { individual }, false)
    }

    /// Partner of `sex` drawn proportionally to its mating capability, or
    /// uniformly if all capabilities vanish.
    fn pick_partner<R: Rng + ?Sized>(&self, sex: Sex, rng: &mut R) -> usize {
        let g = &self.groups[sex.index()];
        let total = g.mating.total();
        if total > 0.0 {
            g.mating.find(rng.random::<f64>() * total)
        } else {
            rng.random_range(0..g.len())
        }
    }

    /// Largest relative difference between the cached rate sums and a full
    /// recomputation.
    pub fn verify_caches(&self) -> f64 {
        let rel = |cached: f64, exact: f64| {
            if cached == exact {
                0.0
            } else {
                (cached - exact).abs() / exact.abs().max(cached.abs()).max(f64::MIN_POSITIVE)
            }
        };
        let mut worst: f64 = 0.0;
        for sex in [Sex::Female, Sex::Male] {
            let g = &self.groups[sex.index()];
            let (p, d) = match sex {
                Sex::Female => (&self.rates.p_f, &self.rates.d_f),
                Sex::Male => (&self.rates.p_m, &self.rates.d_m),
            };
            let p_sum: f64 = g.phenotypes.iter().map(|&x| p.eval(x)).sum();
            let d_sum: f64 = g.phenotypes.iter().map(|&x| d.eval(x)).sum();
            worst = worst.max(rel(g.mating.total(), p_sum));
            worst = worst.max(rel(g.death.total(), d_sum));
            if let Some(load) = &g.load {
                let exact = self.recompute_loads(sex);
                worst = worst.max(rel(load.total(), exact.iter().sum()));
                for (c, e) in load.values().iter().zip(&exact) {
                    worst = worst.max(rel(*c, *e));
                }
            }
        }
        worst
    }

    /// Empirical measure of one sex: mass `1 / N` per individual, binned to
    /// grid cells.
    pub fn empirical(&self, sex: Sex, grid: TraitGrid) -> GridMeasure {
        let mut weights = vec![0.0; grid.n_cells()];
        let atom = 1.0 / self.scale as f64;
        for &x in self.phenotypes(sex) {
            weights[grid.cell_of(x)] += atom;
        }
        GridMeasure::from_weights(grid, weights).expect("non-negative weights")
    }
}
