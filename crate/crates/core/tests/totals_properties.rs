use dimorph::kernels::{InheritanceKernel, NoiseDensity};
use dimorph::macro_solver::{integrate, MacroModel, MacroState, SolverConfig};
use dimorph::rates::ConstantRates;
use dimorph::totals::{
    classify, integrate_totals, relative_residual, stationary_from, stationary_point, totals_rhs,
    Classification, StationaryResult, TotalsState,
};
use dimorph::{GridMeasure, TraitGrid};
use proptest::prelude::*;

fn rates() -> impl Strategy<Value = ConstantRates> {
    (
        (0.0f64..4.0, 0.0f64..4.0, 0.1f64..2.0, 0.1f64..2.0),
        (0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0),
    )
        .prop_filter("some mating", |((pf, pm, _, _), _)| pf + pm > 0.1)
        .prop_map(|((p_f, p_m, d_f, d_m), (u_ff, u_fm, u_mf, u_mm))| ConstantRates {
            p_f,
            p_m,
            d_f,
            d_m,
            u_ff,
            u_fm,
            u_mf,
            u_mm,
        })
}

/// Persistence rates far enough from the threshold that convergence is quick.
fn persistent_rates() -> impl Strategy<Value = ConstantRates> {
    rates().prop_filter("persistence", |r| r.p_m / r.d_m + r.p_f / r.d_f > 2.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn classification_is_scale_invariant(r in rates(), c in 0.01f64..100.0) {
        let scaled = ConstantRates { p_f: c * r.p_f, p_m: c * r.p_m, d_f: c * r.d_f, d_m: c * r.d_m, ..r };
        prop_assert_eq!(classify(&r), classify(&scaled));
    }

    #[test]
    fn stationary_point_is_a_root(r in rates()) {
        match stationary_point(&r).unwrap() {
            StationaryResult::Persistent { m_bar, f_bar, residual } => {
                prop_assert_eq!(classify(&r), Classification::Persistence);
                prop_assert!(m_bar > 0.0 && f_bar > 0.0);
                prop_assert!(residual < 1e-10);
                prop_assert!(relative_residual(TotalsState::new(m_bar, f_bar), &r) < 1e-10);
            }
            StationaryResult::ExtinctOnly => prop_assert_eq!(classify(&r), Classification::Extinction),
        }
    }

    #[test]
    fn random_starts_find_the_same_root(r in persistent_rates(), starts in prop::collection::vec((0.001f64..1.0, 0.001f64..1.0), 10)) {
        let StationaryResult::Persistent { m_bar, f_bar, .. } = stationary_point(&r).unwrap() else {
            unreachable!("persistence regime");
        };
        let side = 10.0 * m_bar.max(f_bar);
        for (a, b) in starts {
            let s = stationary_from(&r, TotalsState::new(a * side, b * side)).unwrap();
            prop_assert!((s.m - m_bar).abs() <= 1e-8 * m_bar.max(1.0));
            prop_assert!((s.f - f_bar).abs() <= 1e-8 * f_bar.max(1.0));
        }
    }

    #[test]
    fn trajectories_approach_the_stationary_point(r in persistent_rates(), m0 in 0.1f64..5.0, f0 in 0.1f64..5.0) {
        let StationaryResult::Persistent { m_bar, f_bar, .. } = stationary_point(&r).unwrap() else {
            unreachable!("persistence regime");
        };
        let traj = integrate_totals(TotalsState::new(m0, f0), &r, 400.0, 0.05).unwrap();
        let end = traj.last().unwrap().1;
        prop_assert!((end.m - m_bar).abs() < 1e-6 * m_bar.max(1.0), "{:?} vs ({}, {})", end, m_bar, f_bar);
        prop_assert!((end.f - f_bar).abs() < 1e-6 * f_bar.max(1.0));
    }

    #[test]
    fn totals_stay_non_negative(r in rates(), m0 in 0.0f64..5.0, f0 in 0.0f64..5.0) {
        let traj = integrate_totals(TotalsState::new(m0, f0), &r, 20.0, 0.01).unwrap();
        prop_assert!(traj.iter().all(|(_, s)| s.m >= 0.0 && s.f >= 0.0));
    }
}

#[test]
fn origin_is_stationary() {
    let r = ConstantRates::symmetric(2.0, 1.0, 0.3);
    assert_eq!(totals_rhs(TotalsState::new(0.0, 0.0), &r), (0.0, 0.0));
}

#[test]
fn degenerate_lines_have_one_positive_root() {
    // Parameters on the lines where the nullclines are straight:
    // p_m - 2 D_m = U_mm p_f / U_mf and its mirror image.
    let mut r = ConstantRates::symmetric(0.0, 1.0, 0.5);
    r.p_f = 1.0;
    r.u_mf = 0.25;
    r.p_m = 2.0 * r.d_m + r.u_mm * r.p_f / r.u_mf;
    assert_eq!(classify(&r), Classification::Persistence);
    let StationaryResult::Persistent { m_bar, f_bar, residual } = stationary_point(&r).unwrap() else {
        panic!("expected a positive root");
    };
    assert!(residual < 1e-10);
    for start in [(0.01, 0.01), (50.0, 0.1), (0.1, 50.0), (30.0, 30.0)] {
        let s = stationary_from(&r, TotalsState::new(start.0, start.1)).unwrap();
        assert!((s.m - m_bar).abs() < 1e-8 && (s.f - f_bar).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Integrating the trait system and reading off the masses is the same
    /// as integrating the totals directly.
    #[test]
    fn trait_system_masses_match_totals(r in rates(), m0 in 0.1f64..3.0, f0 in 0.1f64..3.0) {
        let grid = TraitGrid::new(-5.0, 5.0, 40).unwrap();
        let kernel = InheritanceKernel::additive(NoiseDensity::gaussian(0.5).unwrap());
        let model = MacroModel::new(r.into(), &kernel, grid).unwrap();
        let state0 = MacroState {
            t: 0.0,
            m: GridMeasure::gaussian(grid, -1.0, 0.8, m0).unwrap(),
            f: GridMeasure::uniform(grid, 0.0, 2.0, f0).unwrap(),
        };
        let dt = 0.1 * model.dt_max(&state0.m, &state0.f).unwrap().min(0.1);
        let traj = integrate(&state0, &model, &SolverConfig::new(dt, 5.0)).unwrap();
        let totals = integrate_totals(TotalsState::new(m0, f0), &r, 5.0, dt).unwrap();
        prop_assert_eq!(traj.snapshots.len(), totals.len());
        for (s, (t, tot)) in traj.snapshots.iter().zip(&totals) {
            prop_assert!((s.t - t).abs() < 1e-9);
            prop_assert!((s.m.total_mass() - tot.m).abs() < 1e-9 * tot.m.max(1.0));
            prop_assert!((s.f.total_mass() - tot.f).abs() < 1e-9 * tot.f.max(1.0));
        }
    }
}
