//! Reproduction checks. Each criterion runs a fixed scenario and compares
//! the outcome with a closed-form value, an independent solver, or a
//! statistical band. Used by the `acceptance` test target and subcommand.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::ibm::{initial_population, simulate, IbmParams, Individual, Simulation};
use crate::kernels::{check_hypotheses, BirthOperator, HypothesisConfig, InheritanceKernel, NoiseDensity};
use crate::macro_solver::{integrate, integrate_normalized, MacroModel, MacroState, SexRatio, SolverConfig};
use crate::measures::{GridMeasure, TraitGrid};
use crate::rates::{ConstantRates, PairFn, RateSet, TraitFn};
use crate::stability::{
    contraction_probe, convergence_report, fixed_point, limiting_mean, run_lln, FixedPointConfig,
    LlnExperiment,
};
use crate::totals::{
    classify, integrate_totals, relative_residual, stationary_from, stationary_point,
    Classification, StationaryResult, TotalsState,
};

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    #[serde(serialize_with = "seconds")]
    pub elapsed: Duration,
}

fn seconds<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

type Check = fn() -> Result<(bool, String)>;

pub const CRITERIA: [(u8, &str, Check); 10] = [
    (1, "persistence threshold", persistence_threshold),
    (2, "stationary point uniqueness", stationary_uniqueness),
    (3, "mean dynamics", mean_dynamics),
    (4, "limiting mean", limiting_mean_check),
    (5, "gaussian stationary law", gaussian_stationary_law),
    (6, "contraction of the birth operator", contraction),
    (7, "kernel hypothesis checkers", hypothesis_checkers),
    (8, "law of large numbers", law_of_large_numbers),
    (9, "individual-based exactness", ibm_exactness),
    (10, "trait system vs totals", cross_consistency),
];

pub fn run(id: u8) -> Option<Verdict> {
    let (id, title, check) = CRITERIA.iter().copied().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(outcome) => outcome,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(Verdict {
        id,
        title,
        passed,
        detail,
        elapsed: start.elapsed(),
    })
}

/// Runs the selected criteria (all when `only` is empty), in order.
pub fn run_all(only: &[u8]) -> Vec<Verdict> {
    CRITERIA
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.0))
        .filter_map(|c| run(c.0))
        .collect()
}

pub fn format_line(v: &Verdict) -> String {
    format!(
        "[{}] {:>2} {:<34} {:>8.2}s  {}",
        if v.passed { "PASS" } else { "FAIL" },
        v.id,
        v.title,
        v.elapsed.as_secs_f64(),
        v.detail
    )
}

pub fn format_table(verdicts: &[Verdict]) -> String {
    let mut out = String::new();
    for v in verdicts {
        let _ = writeln!(out, "{}", format_line(v));
    }
    let passed = verdicts.iter().filter(|v| v.passed).count();
    let _ = writeln!(out, "{passed}/{} criteria passed", verdicts.len());
    out
}

fn gaussian_kernel(sigma: f64) -> InheritanceKernel {
    InheritanceKernel::additive(NoiseDensity::gaussian(sigma).expect("positive sigma"))
}

fn uniform_multiplicative() -> InheritanceKernel {
    InheritanceKernel::multiplicative(NoiseDensity::uniform(0.0, 1.0).expect("valid interval"))
        .expect("uniform on [0, 1] has mean 1/2")
}

fn persistence_threshold() -> Result<(bool, String)> {
    let mut lopsided = ConstantRates::symmetric(0.0, 5.0, 0.25);
    lopsided.p_f = 3.0;
    lopsided.d_f = 1.0;
    let labels = [
        (ConstantRates::symmetric(1.0, 1.0, 0.25), Classification::Extinction),
        (ConstantRates::symmetric(2.0, 1.0, 0.25), Classification::Persistence),
        (lopsided, Classification::Persistence),
    ];
    let labels_ok = labels.iter().all(|(r, want)| classify(r) == *want);

    let start = Instant::now();
    let persist = ConstantRates::symmetric(2.0, 1.0, 0.25);
    let traj = integrate_totals(TotalsState::new(1.0, 1.0), &persist, 60.0, 0.01)?;
    let end = traj.last().expect("nonempty").1;
    let persist_err = (end.m - 2.0).abs().max((end.f - 2.0).abs());
    let persist_time = start.elapsed().as_secs_f64();
    let persist_ok = persist_err <= 1e-6 && persist_time < 1.0;

    let extinct = ConstantRates::symmetric(1.0, 1.0, 0.25);
    let traj = integrate_totals(TotalsState::new(1.0, 1.0), &extinct, 100.0, 0.01)?;
    let end = traj.last().expect("nonempty").1;
    let extinct_ok = end.m < 1e-6 && end.f < 1e-6;
    // Strictly inside the extinction region the decay is exponential.
    let strict = ConstantRates::symmetric(0.9, 1.0, 0.25);
    let strict_end = integrate_totals(TotalsState::new(1.0, 1.0), &strict, 100.0, 0.01)?
        .last()
        .expect("nonempty")
        .1;

    Ok((
        labels_ok && persist_ok && extinct_ok,
        format!(
            "labels {}; persistence |(M,F)-(2,2)| = {persist_err:.1e} in {persist_time:.3}s; \
             boundary p/D sum = 2 gives (M,F)(100) = ({:.3e}, {:.3e}) (algebraic decay); \
             p = 0.9 gives {:.1e}",
            if labels_ok { "ok" } else { "wrong" },
            end.m,
            end.f,
            strict_end.m.max(strict_end.f)
        ),
    ))
}

fn stationary_uniqueness() -> Result<(bool, String)> {
    let start = Instant::now();
    let asymmetric = ConstantRates {
        p_f: 3.0,
        p_m: 1.5,
        d_f: 1.0,
        d_m: 0.8,
        u_ff: 0.3,
        u_fm: 0.2,
        u_mf: 0.15,
        u_mm: 0.4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_spread: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for r in [ConstantRates::symmetric(2.0, 1.0, 0.25), asymmetric] {
        let StationaryResult::Persistent { m_bar, f_bar, residual } = stationary_point(&r)? else {
            return Ok((false, "persistence rates reported ExtinctOnly".into()));
        };
        worst_residual = worst_residual.max(residual);
        let side = 10.0 * m_bar;
        for _ in 0..100 {
            let s0 = TotalsState::new(rng.random_range(0.0..side).max(1e-6), rng.random_range(0.0..side).max(1e-6));
            let s = stationary_from(&r, s0)?;
            worst_spread = worst_spread.max((s.m - m_bar).abs().max((s.f - f_bar).abs()));
            worst_residual = worst_residual.max(relative_residual(s, &r));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok((
        worst_spread <= 1e-8 && worst_residual < 1e-10 && elapsed < 1.0,
        format!(
            "200 starts over 2 rate sets: spread {worst_spread:.1e}, residual {worst_residual:.1e}, {elapsed:.3}s"
        ),
    ))
}

/// Normalized run with `A = 2` from laws with means 1 and 4.
fn mean_scenario() -> Result<(Vec<MacroState>, f64, f64, f64)> {
    let grid = TraitGrid::new(-4.0, 9.0, 128)?;
    let mu0 = GridMeasure::gaussian(grid, 1.0, 0.5, 1.0)?;
    let nu0 = GridMeasure::gaussian(grid, 4.0, 0.5, 1.0)?;
    let op = BirthOperator::new(&gaussian_kernel(0.5), grid)?;
    let config = SolverConfig::new(1e-3, 10.0).sampled_every(10);
    let traj = integrate_normalized(&mu0, &nu0, &SexRatio::Constant(2.0), &op, &config)?;
    Ok((traj.snapshots, 2.0, mu0.mean()?, nu0.mean()?))
}

fn mean_dynamics() -> Result<(bool, String)> {
    let start = Instant::now();
    let (snapshots, a, m0, n0) = mean_scenario()?;
    let elapsed = start.elapsed().as_secs_f64();
    let (mut gap_err, mut conserved_err): (f64, f64) = (0.0, 0.0);
    for s in &snapshots {
        let (m, n) = (s.m.mean()?, s.f.mean()?);
        gap_err = gap_err.max(((m - n) - (m0 - n0) * (-(1.0 + a) * s.t / 2.0).exp()).abs());
        conserved_err = conserved_err.max((a * m + n - (a * m0 + n0)).abs());
    }
    let start_err = (m0 - 1.0).abs().max((n0 - 4.0).abs());
    Ok((
        gap_err <= 1e-4 && conserved_err <= 1e-6 && start_err < 1e-9 && elapsed < 10.0,
        format!(
            "max |gap - (m0-n0)e^(-1.5t)| = {gap_err:.1e}, max |Am+n-6| = {conserved_err:.1e}, \
             {} snapshots, {elapsed:.2}s",
            snapshots.len()
        ),
    ))
}

fn limiting_mean_check() -> Result<(bool, String)> {
    let (snapshots, a, m0, n0) = mean_scenario()?;
    let target = limiting_mean(a, m0, n0);
    let last = snapshots.last().expect("nonempty");
    let (m, n) = (last.m.mean()?, last.f.mean()?);
    let err = (m - target).abs().max((n - target).abs());
    Ok((
        err <= 1e-3 && (target - 2.0).abs() < 1e-9,
        format!("target {target:.6}, terminal means ({m:.6}, {n:.6})"),
    ))
}

fn gaussian_stationary_law() -> Result<(bool, String)> {
    let start = Instant::now();
    let sigma = 0.5;
    let grid = TraitGrid::new(-8.0, 8.0, 512)?;
    let kernel = gaussian_kernel(sigma);
    let mu0 = GridMeasure::gaussian(grid, 0.5, 1.0, 1.0)?;
    let fp = fixed_point(&kernel, &mu0, &FixedPointConfig::default())?;
    let var_rel = (fp.variance / (2.0 * sigma * sigma) - 1.0).abs();
    let mean_err = (fp.mean - mu0.mean()?).abs();

    let nu0 = GridMeasure::uniform(grid, -1.5, 2.5, 1.0)?;
    let op = BirthOperator::new(&kernel, grid)?;
    let config = SolverConfig::new(0.05, 30.0).sampled_every(20);
    let traj = integrate_normalized(&mu0, &nu0, &SexRatio::Constant(2.0), &op, &config)?;
    let report = convergence_report(&traj.snapshots, &fp.mu_star)?;
    let final_distance = *report.max_distance.last().expect("nonempty");
    let elapsed = start.elapsed().as_secs_f64();
    Ok((
        var_rel <= 0.02 && mean_err <= 1e-3 && final_distance < 5.0 * grid.dx() && elapsed < 60.0,
        format!(
            "variance {:.5} (rel err {var_rel:.1e}) after {} iterations, mean err {mean_err:.1e}; \
             d(., mu*) at t=30 = {final_distance:.1e} (< {:.3}), monotone {}, {elapsed:.2}s",
            fp.variance,
            fp.iterations,
            5.0 * grid.dx(),
            report.monotone
        ),
    ))
}

fn contraction() -> Result<(bool, String)> {
    let additive = BirthOperator::new(&gaussian_kernel(0.5), TraitGrid::new(-8.0, 8.0, 256)?)?;
    let multiplicative = BirthOperator::new(&uniform_multiplicative(), TraitGrid::new(0.0, 12.0, 240)?)?;
    let a = contraction_probe(&additive, (-3.0, 3.0), 200, 6)?;
    let m = contraction_probe(&multiplicative, (1.0, 5.0), 200, 7)?;
    Ok((
        a.violations == 0 && m.violations == 0,
        format!(
            "additive: {} violations, max ratio {:.3}; multiplicative: {} violations, max ratio {:.3}",
            a.violations, a.max_ratio, m.violations, m.max_ratio
        ),
    ))
}

fn hypothesis_checkers() -> Result<(bool, String)> {
    let additive = check_hypotheses(
        &gaussian_kernel(1.0),
        &TraitGrid::new(-12.0, 12.0, 480)?,
        &HypothesisConfig {
            region: Some((-4.0, 4.0)),
            ..HypothesisConfig::default()
        },
    )?;
    let multiplicative = check_hypotheses(
        &uniform_multiplicative(),
        &TraitGrid::new(0.0, 16.0, 320)?,
        &HypothesisConfig {
            region: Some((1.0, 7.0)),
            ..HypothesisConfig::default()
        },
    )?;
    let ok = additive.condition_i_max < 1.0
        && additive.condition_ii.l_est <= 0.55
        && multiplicative.condition_ii.l_est < 1.0;
    Ok((
        ok,
        format!(
            "additive: (i) max {:.3}, L {:.3}, C {:.2}; multiplicative: (i) max {:.3}, L {:.3}, C {:.2}",
            additive.condition_i_max,
            additive.condition_ii.l_est,
            additive.condition_ii.c_est,
            multiplicative.condition_i_max,
            multiplicative.condition_ii.l_est,
            multiplicative.condition_ii.c_est
        ),
    ))
}

fn law_of_large_numbers() -> Result<(bool, String)> {
    let start = Instant::now();
    let grid = TraitGrid::new(-6.0, 6.0, 240)?;
    let exp = LlnExperiment {
        rates: ConstantRates::symmetric(2.0, 1.0, 0.5).into(),
        kernel: gaussian_kernel(0.5),
        grid,
        m0: GridMeasure::gaussian(grid, -0.5, 0.7, 1.0)?,
        f0: GridMeasure::gaussian(grid, 0.5, 0.7, 1.0)?,
        scales: vec![100, 1000, 10_000],
        replicas: 10,
        checkpoints: vec![1.0, 3.0],
        dt: 0.01,
        seed: 8,
    };
    let report = run_lln(&exp)?;
    let mut decreasing = true;
    let mut detail = String::new();
    for &t in &exp.checkpoints {
        let errors: Vec<f64> = exp
            .scales
            .iter()
            .map(|&s| {
                report
                    .rows
                    .iter()
                    .find(|r| r.scale == s && r.time == t)
                    .map(|r| r.mean_error)
                    .unwrap_or(f64::NAN)
            })
            .collect();
        decreasing &= errors.windows(2).all(|w| w[1] < w[0]);
        let shown: Vec<String> = errors.iter().map(|e| format!("{e:.2e}")).collect();
        let _ = write!(detail, "t={t}: [{}]; ", shown.join(", "));
    }
    let mut worst_z: f64 = 0.0;
    for (_, counts) in &report.counts {
        for c in counts {
            let births = c.births as f64;
            let z = (c.female_births as f64 / births - 0.5).abs() / (0.25 / births).sqrt();
            worst_z = worst_z.max(z);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let _ = write!(detail, "worst sex-ratio z {worst_z:.2}, {elapsed:.1}s");
    Ok((decreasing && worst_z <= 4.0 && elapsed < 300.0, detail))
}

fn ibm_exactness() -> Result<(bool, String)> {
    let grid = TraitGrid::new(-5.0, 5.0, 100)?;
    let mut rates: RateSet = ConstantRates::symmetric(2.0, 1.0, 0.5).into();
    rates.p_f = TraitFn::function(|x| 2.0 + 0.5 * (x).tanh());
    rates.u_ff = PairFn::function(|x, y| 0.5 * (-0.5 * (x - y).powi(2)).exp());
    rates.u_mf = PairFn::function(|x, y| 0.4 + 0.1 * (x - y).abs().min(2.0));
    let kernel = gaussian_kernel(0.4);
    let m0 = GridMeasure::gaussian(grid, 0.0, 1.0, 1.0)?;
    let f0 = GridMeasure::gaussian(grid, 0.3, 1.0, 1.0)?;
    let start = initial_population(&m0, &f0, 200)?;

    let mut sim = Simulation::new(&start, 200, rates.clone(), kernel.clone(), grid, 9)?;
    for _ in 0..10_000 {
        sim.step()?;
    }
    let cache_err = sim.population().verify_caches();
    let counts = sim.counts();
    let accounting = sim.population().len() as i64 - start.len() as i64
        == counts.births as i64 - counts.deaths as i64;

    let params = IbmParams {
        rates,
        kernel,
        grid,
        scale: 200,
        t_end: 3.0,
        sample_times: vec![0.0, 1.0, 2.0, 3.0],
        seed: 19,
        max_events: None,
    };
    let replay = |individuals: &[Individual]| -> Result<Vec<u8>> {
        let traj = simulate(&params, individuals)?;
        let mut bytes = Vec::new();
        for s in &traj.snapshots {
            for (name, m) in [("female", &s.females), ("male", &s.males)] {
                for (i, w) in m.weights().iter().enumerate() {
                    let _ = writeln!(
                        ByteSink(&mut bytes),
                        "{:.16e},{name},{:.16e},{:.16e}",
                        s.t,
                        grid.center(i),
                        w
                    );
                }
            }
        }
        Ok(bytes)
    };
    let identical = replay(&start)? == replay(&start)?;
    Ok((
        cache_err <= 1e-6 && accounting && identical,
        format!(
            "cache rel err {cache_err:.1e} after 10^4 events, births {} deaths {} accounting {}, replay {}",
            counts.births,
            counts.deaths,
            if accounting { "exact" } else { "broken" },
            if identical { "byte-identical" } else { "differs" }
        ),
    ))
}

struct ByteSink<'a>(&'a mut Vec<u8>);

impl std::fmt::Write for ByteSink<'_> {
    fn write_str(&mut self, s: &str) -> std::fmt::Result {
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

fn cross_consistency() -> Result<(bool, String)> {
    let r = ConstantRates {
        p_f: 2.5,
        p_m: 1.5,
        d_f: 1.0,
        d_m: 0.7,
        u_ff: 0.3,
        u_fm: 0.25,
        u_mf: 0.2,
        u_mm: 0.35,
    };
    let grid = TraitGrid::new(-6.0, 6.0, 128)?;
    let model = MacroModel::new(r.into(), &gaussian_kernel(0.5), grid)?;
    let m0 = GridMeasure::gaussian(grid, -1.0, 0.8, 0.4)?;
    let f0 = GridMeasure::gaussian(grid, 1.0, 0.6, 1.7)?;
    let dt = 0.01;
    let state0 = MacroState { t: 0.0, m: m0, f: f0 };
    let traj = integrate(&state0, &model, &SolverConfig::new(dt, 20.0))?;
    let totals = integrate_totals(TotalsState::new(0.4, 1.7), &r, 20.0, dt)?;
    let mut worst: f64 = 0.0;
    for (s, (t, tot)) in traj.snapshots.iter().zip(&totals) {
        debug_assert!((s.t - t).abs() < 1e-9);
        worst = worst
            .max((s.m.total_mass() - tot.m).abs())
            .max((s.f.total_mass() - tot.f).abs());
    }
    Ok((
        worst <= 1e-6 && traj.snapshots.len() == totals.len(),
        format!("max mass difference {worst:.1e} over {} steps", totals.len() - 1),
    ))
}
