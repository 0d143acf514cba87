use fpk_core::grid::{
    divergence, gradient, h_neg1_inner, h_neg1_norm, helmholtz_solve, l2_inner, l2_norm, laplacian, Boundary, Grid,
    ScalarField, VectorField,
};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (1usize..=2, 4usize..20, 0.5f64..5.0, prop::bool::ANY).prop_map(|(d, n, l, periodic)| {
        let n = if d == 2 { n.min(12) } else { n };
        let b = if periodic { Boundary::Periodic } else { Boundary::ZeroFlux };
        Grid::new(d, l, n, b).unwrap()
    })
}

fn field(g: Grid, seed: &[f64]) -> ScalarField {
    ScalarField::new(g, (0..g.len()).map(|i| seed[i % seed.len()] * (1.0 + (i as f64 * 0.37).sin())).collect()).unwrap()
}

fn seeds() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 7..13)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn periodic_adjointness(n in 4usize..40, l in 0.5f64..5.0, a in seeds(), b in seeds()) {
        let g = Grid::new(1, l, n, Boundary::Periodic).unwrap();
        let (u, v) = (field(g, &a), field(g, &b));
        let lhs = -l2_inner(&laplacian(&u), &v);
        let rhs = gradient(&u).inner(&gradient(&v));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1e-12));
    }

    #[test]
    fn adjointness_in_both_modes(g in grid_strategy(), a in seeds(), b in seeds()) {
        let (u, v) = (field(g, &a), field(g, &b));
        let lhs = -l2_inner(&laplacian(&u), &v);
        let rhs = gradient(&u).inner(&gradient(&v));
        let scale = l2_norm(&laplacian(&u)) * l2_norm(&v) + 1.0;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn totals_vanish(g in grid_strategy(), a in seeds(), b in seeds()) {
        let u = field(g, &a);
        let lap = laplacian(&u);
        let scale: f64 = lap.values().iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        prop_assert!(lap.values().iter().sum::<f64>().abs() <= 1e-13 * scale);
        let f = VectorField::from_fn(g, |axis, x| b[axis % b.len()] * (x[0] + 0.3 * axis as f64).cos());
        let div = divergence(&f);
        let scale: f64 = div.values().iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        prop_assert!(div.values().iter().sum::<f64>().abs() <= 1e-13 * scale);
    }

    #[test]
    fn helmholtz_roundtrip(g in grid_strategy(), a in seeds(), eps in 1e-6f64..10.0) {
        let f = field(g, &a);
        let y = helmholtz_solve(eps, &f).unwrap();
        let back = y.zip_with(&laplacian(&y), |y, l| eps * y - l);
        prop_assert!(l2_norm(&back.sub(&f)) <= 1e-10 * l2_norm(&f) + 1e-300);
    }

    #[test]
    fn h_neg1_bounds(g in grid_strategy(), a in seeds(), b in seeds(), eps in 1e-4f64..10.0) {
        let (u, v) = (field(g, &a), field(g, &b));
        let uv = h_neg1_inner(eps, &u, &v).unwrap();
        let vu = h_neg1_inner(eps, &v, &u).unwrap();
        prop_assert!((uv - vu).abs() <= 1e-12 * (uv.abs() + vu.abs()) + 1e-14);
        prop_assert!(l2_inner(&u, &v).abs() <= l2_norm(&u) * l2_norm(&v) * (1.0 + 1e-12));
        let nu = h_neg1_norm(eps, &u).unwrap();
        prop_assert!(nu <= l2_norm(&u) / eps.sqrt() * (1.0 + 1e-10));
        prop_assert!(nu > 0.0 || l2_norm(&u) == 0.0);
    }
}
