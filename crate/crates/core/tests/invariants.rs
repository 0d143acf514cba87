mod common;

use common::gaussian;
use fpk_core::coefficients::{BuiltinModel, Diffusion, Drift};
use fpk_core::grid::{h_neg1_norm, periodic_symbol, Boundary, Grid, ScalarField};
use fpk_core::invariants::{
    l1_contraction_check, linf_bound_check, mass_check, resolvent_lipschitz_check, LipschitzSetup,
};
use fpk_core::resolvent::{solve_resolvent, FluxMode, ResolventProblem, Tolerances};
use fpk_core::stepper::{ModelBounds, SolverConfig, Stepper};
use std::f64::consts::PI;

fn bounds() -> ModelBounds {
    ModelBounds { nu_hat: 1.0, lambda_zero: f64::INFINITY, capital_lambda: 0.0 }
}

#[test]
fn identical_data_have_zero_distance() {
    let g = Grid::new(1, 3.0, 32, Boundary::ZeroFlux).unwrap();
    let m = BuiltinModel::new(Diffusion::Bosonic { gamma: 1.0, kappa: 0.0, t_max: 1.0 }, Drift::None).unwrap();
    let s = Stepper::new(&m, SolverConfig { t_final: 0.1, ..Default::default() }, &g, bounds()).unwrap();
    let u0 = ScalarField::from_fn(g, |x| gaussian(x, 0.0, 0.5));
    let r = l1_contraction_check(&s, &u0, &u0, 0.0).unwrap();
    assert!(r.pass);
    assert_eq!(r.worst_violation, 0.0);
}

#[test]
fn single_fourier_mode_ratio_is_the_symbol() {
    let n = 32;
    let g = Grid::new(1, 1.0, n, Boundary::Periodic).unwrap();
    let h = g.spacing();
    let (a, c, lambda, eps) = (0.8, 1.5, 0.05, 0.1);
    let m = BuiltinModel::new(Diffusion::Linear { a }, Drift::Constant { c: vec![c] }).unwrap();
    let tol = Tolerances { atol_per_volume: 1e-15, rtol: 1e-13, ..Default::default() };
    let base = ScalarField::constant(g, 2.0);
    let (u_base, _) = solve_resolvent(&ResolventProblem::new(&m, 0.0, lambda, eps, &base).with_tolerances(tol)).unwrap();
    for k in [1usize, 3, 7] {
        let theta = 2.0 * PI * k as f64 / n as f64;
        let v = ScalarField::from_fn(g, |x| 2.0 + 0.3 * (PI * k as f64 * x[0]).cos());
        let (u, _) = solve_resolvent(&ResolventProblem::new(&m, 0.0, lambda, eps, &v).with_tolerances(tol)).unwrap();
        let ratio = h_neg1_norm(eps, &u.sub(&u_base)).unwrap() / h_neg1_norm(eps, &v.sub(&base)).unwrap();
        let re = 1.0 + lambda * a * (eps + periodic_symbol(k, n, h));
        let im = lambda * c * theta.sin() / h;
        let expected = 1.0 / (re * re + im * im).sqrt();
        assert!((ratio - expected).abs() < 1e-9, "k = {k}: {ratio} vs {expected}");
    }
}

#[test]
fn lipschitz_check_is_reproducible() {
    let g = Grid::new(1, 1.0, 32, Boundary::Periodic).unwrap();
    let m = BuiltinModel::new(Diffusion::Bosonic { gamma: 1.0, kappa: 0.0, t_max: 1.0 }, Drift::Tanh { c: 0.5 }).unwrap();
    let s = LipschitzSetup {
        t: 0.0,
        lambda: 0.1,
        eps: 0.05,
        lambda_zero: f64::INFINITY,
        flux: FluxMode::Centered,
        trials: 3,
        seed: 11,
        mean: 1.0,
        amplitude: 0.5,
    };
    let a = resolvent_lipschitz_check(&m, &g, &s).unwrap();
    let b = resolvent_lipschitz_check(&m, &g, &s).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert!(a.metrics["max_ratio"] > 0.0);
    let zf = Grid::new(1, 1.0, 32, Boundary::ZeroFlux).unwrap();
    assert!(resolvent_lipschitz_check(&m, &zf, &s).is_err());
}

#[test]
fn maximum_principle_without_drift() {
    let g = Grid::new(2, 2.0, 16, Boundary::ZeroFlux).unwrap();
    let m = BuiltinModel::new(Diffusion::Piecewise { slope_low: 1.0, slope_high: 2.0, kink: 0.5 }, Drift::None).unwrap();
    let cfg = SolverConfig { t_final: 0.2, mu: 0.02, eps: 1e-3, snapshot_stride: 1, ..Default::default() };
    let tr = Stepper::new(&m, cfg, &g, bounds()).unwrap().solve_trajectory(&ScalarField::from_fn(g, |x| {
        gaussian(&x[..1], 0.3, 0.2) * gaussian(&x[1..], -0.2, 0.3)
    }))
    .unwrap();
    let r = linf_bound_check(&tr, 0.0, 1e-12);
    assert!(r.pass, "{}", r.worst_violation);
    let [identity, total] = mass_check(&tr, 2.0, 1e-10, 1e-10);
    assert!(identity.pass && total.pass);
}
