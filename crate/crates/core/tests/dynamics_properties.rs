//! Invariants of the deterministic solvers and the particle system.

use dimorph::error::Error;
use dimorph::ibm::{initial_population, simulate, IbmParams};
use dimorph::kernels::{BirthOperator, InheritanceKernel, NoiseDensity};
use dimorph::macro_solver::{integrate, integrate_normalized, MacroModel, MacroState, Positivity, SexRatio, SolverConfig};
use dimorph::ode::Scheme;
use dimorph::rates::ConstantRates;
use dimorph::{GridMeasure, TraitGrid};
use proptest::prelude::*;

fn grid() -> TraitGrid {
    TraitGrid::new(-8.0, 8.0, 64).unwrap()
}

fn kernel() -> InheritanceKernel {
    InheritanceKernel::additive(NoiseDensity::gaussian(0.5).unwrap())
}

fn rates() -> impl Strategy<Value = ConstantRates> {
    (0.0f64..3.0, 0.0f64..3.0, 0.2f64..2.0, 0.2f64..2.0, 0.05f64..1.0, 0.05f64..1.0).prop_map(
        |(p_f, p_m, d_f, d_m, u, v)| ConstantRates {
            p_f,
            p_m,
            d_f,
            d_m,
            u_ff: u,
            u_fm: v,
            u_mf: v,
            u_mm: u,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn full_system_weights_stay_non_negative(
        r in rates(),
        mean in -2.0f64..2.0,
        mass_m in 0.05f64..3.0,
        mass_f in 0.05f64..3.0,
        euler in any::<bool>(),
        reject in any::<bool>(),
    ) {
        let model = MacroModel::new(r.into(), &kernel(), grid()).unwrap();
        let state0 = MacroState {
            t: 0.0,
            m: GridMeasure::gaussian(grid(), mean, 0.6, mass_m).unwrap(),
            f: GridMeasure::uniform(grid(), -1.0, 1.5, mass_f).unwrap(),
        };
        let dt = model.dt_max(&state0.m, &state0.f).unwrap();
        let config = SolverConfig::new(dt, 3.0)
            .with_scheme(if euler { Scheme::Euler } else { Scheme::Rk4 })
            .with_positivity(if reject { Positivity::RejectStep } else { Positivity::Clip });
        let traj = integrate(&state0, &model, &config).unwrap();
        for s in &traj.snapshots {
            prop_assert!(s.m.weights().iter().chain(s.f.weights()).all(|w| *w >= 0.0));
        }
        prop_assert!((traj.last().t - 3.0).abs() < 1e-12);
    }

    /// With a mean-preserving kernel `A * mean(mu) + mean(nu)` is constant
    /// along the normalized flow, the mean gap decays like
    /// `exp(-(1 + A) t / 2)`, and both components keep unit mass.
    #[test]
    fn normalized_flow_mean_laws(a in 0.2f64..3.0, m1 in -2.0f64..2.0, m2 in -2.0f64..2.0) {
        let op = BirthOperator::new(&kernel(), grid()).unwrap();
        let mu0 = GridMeasure::gaussian(grid(), m1, 0.7, 1.0).unwrap();
        let nu0 = GridMeasure::uniform(grid(), m2 - 1.0, m2 + 1.0, 1.0).unwrap();
        let dt = 0.1 / a.max(1.0);
        let traj = integrate_normalized(&mu0, &nu0, &SexRatio::Constant(a), &op, &SolverConfig::new(dt, 6.0)).unwrap();
        let invariant = |s: &MacroState| a * s.m.mean().unwrap() + s.f.mean().unwrap();
        let gap = |s: &MacroState| s.m.mean().unwrap() - s.f.mean().unwrap();
        let (start, gap0) = (invariant(&traj.snapshots[0]), gap(&traj.snapshots[0]));
        for s in &traj.snapshots {
            prop_assert!((s.m.total_mass() - 1.0).abs() < 1e-12);
            prop_assert!((s.f.total_mass() - 1.0).abs() < 1e-12);
            prop_assert!((invariant(s) - start).abs() < 1e-8, "t = {}: {} vs {}", s.t, invariant(s), start);
            let expected = gap0 * (-(1.0 + a) * s.t / 2.0).exp();
            prop_assert!((gap(s) - expected).abs() < 1e-6, "t = {}: gap {} vs {}", s.t, gap(s), expected);
        }
    }

    #[test]
    fn ibm_event_accounting(seed in 0u64..1000, scale in 20usize..200) {
        let params = IbmParams {
            rates: ConstantRates::symmetric(2.0, 1.0, 0.5).into(),
            kernel: kernel(),
            grid: grid(),
            scale,
            t_end: 1.5,
            sample_times: vec![0.0, 0.5, 1.5],
            seed,
            max_events: None,
        };
        let start = initial_population(
            &GridMeasure::gaussian(grid(), -0.5, 0.7, 1.0).unwrap(),
            &GridMeasure::gaussian(grid(), 0.5, 0.7, 1.0).unwrap(),
            scale,
        )
        .unwrap();
        let traj = simulate(&params, &start).unwrap();
        let c = traj.counts;
        prop_assert_eq!(c.births, c.male_births + c.female_births);
        prop_assert_eq!(traj.final_size as u64 + c.deaths, traj.initial_size as u64 + c.births);
        prop_assert_eq!(traj.snapshots.len(), 3);
        let last = traj.snapshots.last().unwrap();
        if traj.extinct_at.is_none() {
            prop_assert_eq!(last.n_males + last.n_females, traj.final_size);
        }
        for s in &traj.snapshots {
            let n = scale as f64;
            prop_assert!((s.males.total_mass() - s.n_males as f64 / n).abs() < 1e-9);
            prop_assert!((s.females.total_mass() - s.n_females as f64 / n).abs() < 1e-9);
        }
        let again = simulate(&params, &start).unwrap();
        prop_assert_eq!(again.counts, c);
        prop_assert_eq!(again.snapshots, traj.snapshots);
    }
}

#[test]
fn oversized_steps_are_rejected() {
    let model = MacroModel::new(ConstantRates::symmetric(2.0, 1.0, 0.5).into(), &kernel(), grid()).unwrap();
    let state0 = MacroState {
        t: 0.0,
        m: GridMeasure::gaussian(grid(), 0.0, 1.0, 1.0).unwrap(),
        f: GridMeasure::gaussian(grid(), 0.0, 1.0, 1.0).unwrap(),
    };
    let dt_max = model.dt_max(&state0.m, &state0.f).unwrap();
    let err = integrate(&state0, &model, &SolverConfig::new(2.0 * dt_max, 1.0)).unwrap_err();
    assert!(matches!(err, Error::StepTooLarge { .. }), "{err:?}");

    let op = BirthOperator::new(&kernel(), grid()).unwrap();
    let err = integrate_normalized(&state0.m, &state0.f, &SexRatio::Constant(4.0), &op, &SolverConfig::new(0.05, 1.0)).unwrap_err();
    assert!(matches!(err, Error::StepTooLarge { .. }), "{err:?}");
}
