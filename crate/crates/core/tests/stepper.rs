mod common;

use common::{bisect, dense_solve, gaussian, linear_matrix, rel_l2};
use fpk_core::coefficients::{BuiltinModel, CoefficientModel, Diffusion, Drift};
use fpk_core::grid::{field_norms, Boundary, Grid, ScalarField, MAX_DIM};
use fpk_core::invariants::positivity_check;
use fpk_core::resolvent::FluxMode;
use fpk_core::stepper::{ModelBounds, SolverConfig, Stepper};
use fpk_core::Error;

fn unconstrained() -> ModelBounds {
    ModelBounds { nu_hat: 1.0, lambda_zero: f64::INFINITY, capital_lambda: 0.0 }
}

#[test]
fn linear_step_matches_direct_solve() {
    let g = Grid::new(1, 4.0, 48, Boundary::ZeroFlux).unwrap();
    let m = BuiltinModel::heat(1.0);
    let cfg = SolverConfig { mu: 0.05, eps: 1e-2, ..Default::default() };
    let s = Stepper::new(&m, cfg, &g, unconstrained()).unwrap();
    let u0 = ScalarField::from_fn(g, |x| gaussian(x, 0.5, 0.4));
    let (u1, d) = s.implicit_step(0.05, &u0).unwrap();
    let oracle = dense_solve(linear_matrix(&g, 0.05, 1e-2), u0.values().to_vec());
    assert!(rel_l2(u1.values(), &oracle) < 1e-9);
    assert!(d.stats.converged);
}

#[test]
fn constant_step_matches_scalar_root() {
    let g = Grid::new(1, 4.0, 16, Boundary::Periodic).unwrap();
    let gamma = 1.5;
    let m = BuiltinModel::new(Diffusion::Bosonic { gamma, kappa: 0.0, t_max: 1.0 }, Drift::None).unwrap();
    let (mu, eps, c) = (0.1, 0.2, 2.0);
    let s = Stepper::new(&m, SolverConfig { mu, eps, ..Default::default() }, &g, unconstrained()).unwrap();
    let (u, _) = s.implicit_step(0.1, &ScalarField::constant(g, c)).unwrap();
    let root = bisect(|r| r + mu * eps * gamma * (1.0f64 + r).ln() - c, 0.0, c);
    assert!(u.values().iter().all(|x| (x - root).abs() < 1e-12));
}

#[test]
fn exponential_formula_is_the_trajectory_and_the_linear_product() {
    let g = Grid::new(1, 3.0, 32, Boundary::ZeroFlux).unwrap();
    let m = BuiltinModel::heat(1.0);
    let eps = 1e-2;
    let s = Stepper::new(&m, SolverConfig { eps, ..Default::default() }, &g, unconstrained()).unwrap();
    let u0 = ScalarField::from_fn(g, |x| gaussian(x, 0.0, 0.3));
    let (t, n) = (0.4, 8);
    let ef = s.exponential_formula(&u0, t, n).unwrap();
    let cfg = SolverConfig { t_final: t, mu: t / n as f64, eps, ..Default::default() };
    let tr = s.with_config(cfg).unwrap().solve_trajectory(&u0).unwrap();
    assert_eq!(&ef, tr.last());
    let a = linear_matrix(&g, t / n as f64, eps);
    let mut v = u0.values().to_vec();
    for _ in 0..n {
        v = dense_solve(a.clone(), v);
    }
    assert!(rel_l2(ef.values(), &v) < 1e-9);
}

#[test]
fn snapshots_are_strided_and_keep_ends() {
    let g = Grid::new(1, 3.0, 16, Boundary::ZeroFlux).unwrap();
    let m = BuiltinModel::heat(1.0);
    let cfg = SolverConfig { t_final: 0.25, mu: 0.01, snapshot_stride: 10, ..Default::default() };
    let tr = Stepper::new(&m, cfg, &g, unconstrained()).unwrap().solve_trajectory(&ScalarField::constant(g, 1.0)).unwrap();
    assert_eq!(tr.snapshot_steps, vec![0, 10, 20, 25]);
    assert_eq!(tr.diagnostics.len(), 25);
    assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(tr.final_time(), 0.25);
}

#[test]
fn continuation_on_single_eps_has_no_gaps() {
    let g = Grid::new(1, 3.0, 16, Boundary::ZeroFlux).unwrap();
    let m = BuiltinModel::heat(1.0);
    let cfg = SolverConfig { t_final: 0.1, eps_schedule: vec![1e-3], ..Default::default() };
    let levels = Stepper::new(&m, cfg, &g, unconstrained()).unwrap().epsilon_continuation(&ScalarField::constant(g, 1.0)).unwrap();
    assert_eq!(levels.len(), 1);
    assert_eq!(levels[0].gap, None);
}

#[test]
fn heat_and_advection_oracles_2d() {
    let g = Grid::new(2, 6.0, 48, Boundary::ZeroFlux).unwrap();
    let c = [0.5, -0.25];
    let m = BuiltinModel::new(Diffusion::Linear { a: 1.0 }, Drift::Constant { c: c.to_vec() }).unwrap();
    let t = 0.3;
    let cfg = SolverConfig { t_final: t, mu: 0.01, eps: 1e-6, ..Default::default() };
    let u0 = ScalarField::from_fn(g, |x| gaussian(x, 0.0, 0.5));
    let tr = Stepper::new(&m, cfg, &g, unconstrained()).unwrap().solve_trajectory(&u0).unwrap();
    let u = tr.last();
    let exact = ScalarField::from_fn(g, |x| {
        let y = [x[0] - c[0] * t, x[1] - c[1] * t];
        gaussian(&y, 0.0, 0.5 + 2.0 * t)
    });
    assert!(field_norms(&u.sub(&exact)).l1 < 0.03);
    let mass = u.integral();
    for a in 0..2 {
        let com: f64 = (0..g.len()).map(|i| g.center(i)[a] * u.values()[i]).sum::<f64>() * g.cell_volume() / mass;
        assert!((com - c[a] * t).abs() < 1e-6, "axis {a}: {com}");
    }
}

#[test]
fn l1_norm_and_energy_stay_bounded() {
    let m = BuiltinModel::new(Diffusion::Bosonic { gamma: 1.0, kappa: 0.5, t_max: 1.0 }, Drift::Tanh { c: 1.0 }).unwrap();
    let mut constants = Vec::new();
    for n in [64, 128] {
        let g = Grid::new(1, 5.0, n, Boundary::ZeroFlux).unwrap();
        let cfg = SolverConfig { t_final: 0.5, mu: 0.01, eps: 1e-4, flux: FluxMode::Upwind, ..Default::default() };
        let u0 = ScalarField::from_fn(g, |x| 2.0 * gaussian(x, 0.0, 0.3));
        let b = ModelBounds { nu_hat: 0.2, lambda_zero: 0.4, capital_lambda: 4.0 };
        let tr = Stepper::new(&m, cfg, &g, b).unwrap().solve_trajectory(&u0).unwrap();
        let l1_0 = field_norms(&u0).l1;
        let h = g.spacing();
        assert!(tr.diagnostics.iter().all(|d| d.l1 <= l1_0 * (1.0 + 1e-6 + h)));
        constants.push(tr.energy_constant());
    }
    assert!(constants[1] <= 10.0 * constants[0], "{constants:?}");
}

#[test]
fn centred_flux_with_steep_drift_loses_positivity() {
    // cell Péclet number |b| h / a ≈ 4: the centred scheme oscillates, the upwind one does not
    let g = Grid::new(1, 4.0, 32, Boundary::ZeroFlux).unwrap();
    let m = BuiltinModel::new(Diffusion::Linear { a: 0.25 }, Drift::Tanh { c: -4.0 }).unwrap();
    let u0 = ScalarField::from_fn(g, |x| if x[0].abs() > 2.0 && x[0].abs() < 2.5 { 1.0 } else { 0.0 });
    let run = |flux| {
        let cfg = SolverConfig { t_final: 0.2, mu: 0.01, eps: 1e-6, flux, snapshot_stride: 1, ..Default::default() };
        let tr = Stepper::new(&m, cfg, &g, unconstrained()).unwrap().solve_trajectory(&u0).unwrap();
        positivity_check(&tr, 1e-10)
    };
    assert!(!run(FluxMode::Centered).pass);
    assert!(run(FluxMode::Upwind).pass);
}

/// A model whose coefficients break down after t = 0.05.
struct Breaks;

impl CoefficientModel for Breaks {
    fn beta(&self, t: f64, _x: &[f64], r: f64) -> f64 {
        if t > 0.05 {
            f64::NAN
        } else {
            r
        }
    }
    fn b(&self, _t: f64, _x: &[f64], _r: f64) -> [f64; MAX_DIM] {
        [0.0; MAX_DIM]
    }
    fn h_bound(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

#[test]
fn failed_step_keeps_partial_trajectory() {
    let g = Grid::new(1, 2.0, 16, Boundary::ZeroFlux).unwrap();
    let cfg = SolverConfig { t_final: 0.1, mu: 0.01, snapshot_stride: 1, ..Default::default() };
    let err = Stepper::new(&Breaks, cfg, &g, unconstrained()).unwrap().solve_trajectory(&ScalarField::constant(g, 1.0)).unwrap_err();
    assert!(matches!(err.error, Error::StepFailed { step: 5, .. }), "{:?}", err.error);
    assert_eq!(err.partial.diagnostics.len(), 5);
}
