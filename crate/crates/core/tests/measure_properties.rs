use dimorph::kernels::{birth_operator_exact, BirthOperator, InheritanceKernel, NoiseDensity};
use dimorph::{GridMeasure, TraitGrid};
use proptest::prelude::*;

const N: usize = 24;

fn grid() -> TraitGrid {
    TraitGrid::new(-3.0, 3.0, N).unwrap()
}

fn weights(mass: f64) -> impl Strategy<Value = GridMeasure> {
    prop::collection::vec(0.0f64..1.0, N).prop_filter_map("zero mass", move |w| {
        let total: f64 = w.iter().sum();
        (total > 1e-3).then(|| {
            GridMeasure::from_weights(grid(), w.iter().map(|v| v * mass / total).collect()).unwrap()
        })
    })
}

/// W1 on a line from the quantile functions, sampled finely. Independent of
/// the CDF-difference formula used by the library.
fn quantile_w1(a: &GridMeasure, b: &GridMeasure) -> f64 {
    let g = a.grid();
    let quantile = |m: &GridMeasure, u: f64| {
        let mut acc = 0.0;
        for (i, w) in m.weights().iter().enumerate() {
            acc += w;
            if acc >= u {
                return g.center(i);
            }
        }
        g.center(g.n_cells() - 1)
    };
    let steps = 20_000;
    (0..steps)
        .map(|k| {
            let u = (k as f64 + 0.5) / steps as f64;
            (quantile(a, u) - quantile(b, u)).abs()
        })
        .sum::<f64>()
        / steps as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wasserstein_is_a_metric(a in weights(1.0), b in weights(1.0), c in weights(1.0)) {
        let ab = a.wasserstein1(&b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - b.wasserstein1(&a).unwrap()).abs() < 1e-12);
        prop_assert_eq!(a.wasserstein1(&a).unwrap(), 0.0);
        let ac = a.wasserstein1(&c).unwrap();
        let cb = c.wasserstein1(&b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn wasserstein_matches_quantile_coupling(a in weights(1.0), b in weights(1.0)) {
        let direct = a.wasserstein1(&b).unwrap();
        prop_assert!((direct - quantile_w1(&a, &b)).abs() < 2e-3, "{} vs {}", direct, quantile_w1(&a, &b));
    }

    #[test]
    fn wasserstein_dominates_mean_gap(a in weights(1.0), b in weights(1.0)) {
        let gap = (a.mean().unwrap() - b.mean().unwrap()).abs();
        prop_assert!(a.wasserstein1(&b).unwrap() >= gap - 1e-12);
    }

    #[test]
    fn total_variation_bounds(a in weights(1.0), b in weights(1.0)) {
        let tv = a.total_variation(&b).unwrap();
        prop_assert!((0.0..=2.0 + 1e-12).contains(&tv));
        // Moving mass tv/2 by at most the grid width.
        let width = grid().x_max() - grid().x_min();
        prop_assert!(a.wasserstein1(&b).unwrap() <= 0.5 * tv * width + 1e-12);
    }

    #[test]
    fn normalize_then_rescale_round_trips(a in weights(3.7)) {
        let (unit, mass) = a.normalize().unwrap();
        prop_assert!((unit.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!((mass - 3.7).abs() < 1e-12);
        prop_assert!(unit.scaled(mass).total_variation(&a).unwrap() < 1e-12);
    }

    #[test]
    fn with_mean_moves_only_the_mean(a in weights(1.0), target in -1.0f64..1.0) {
        let moved = a.with_mean(target).unwrap();
        prop_assert!((moved.mean().unwrap() - target).abs() < 1e-10);
        prop_assert!((moved.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn birth_operator_is_symmetric_and_bilinear(
        a in weights(1.0),
        b in weights(2.0),
        c in weights(1.0),
        s in 0.1f64..3.0,
    ) {
        let kernel = InheritanceKernel::additive(NoiseDensity::gaussian(0.4).unwrap());
        let op = BirthOperator::new(&kernel, grid()).unwrap();
        let ab = op.apply(&a, &b).unwrap();
        prop_assert!(ab.total_variation(&op.apply(&b, &a).unwrap()).unwrap() < 1e-12);
        prop_assert!((ab.total_mass() - 2.0).abs() < 1e-12);

        let lhs = op.apply(&a.add_scaled(&c, s).unwrap(), &b).unwrap();
        let rhs = ab.add_scaled(&op.apply(&c, &b).unwrap(), s).unwrap();
        prop_assert!(lhs.total_variation(&rhs).unwrap() < 1e-11);

        let exact = birth_operator_exact(&kernel, &a, &b).unwrap();
        prop_assert!(ab.total_variation(&exact).unwrap() < 1e-12);
    }

    #[test]
    fn birth_operator_contracts_equal_mean_arguments(a in weights(1.0), b in weights(1.0), c in weights(1.0)) {
        let kernel = InheritanceKernel::additive(NoiseDensity::gaussian(0.4).unwrap());
        let op = BirthOperator::new(&kernel, grid()).unwrap();
        let a2 = b.with_mean(a.mean().unwrap()).unwrap();
        let input = a.wasserstein1(&a2).unwrap();
        let output = op.apply(&a, &c).unwrap().wasserstein1(&op.apply(&a2, &c).unwrap()).unwrap();
        // One argument fixed: the output moves by at most half the input.
        prop_assert!(output <= 0.5 * input + 1e-9, "{} vs {}", output, input);
    }
}

#[test]
fn translated_point_masses() {
    let g = grid();
    let a = GridMeasure::point_mass(g, -1.1, 1.0);
    let b = GridMeasure::point_mass(g, 1.4, 1.0);
    let shift = g.center(g.cell_of(1.4)) - g.center(g.cell_of(-1.1));
    assert!((a.wasserstein1(&b).unwrap() - shift).abs() < 1e-12);
}
