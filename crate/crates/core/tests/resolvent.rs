mod common;

use common::{bisect, dense_solve, linear_matrix, rel_l2};
use fpk_core::coefficients::{BuiltinModel, Diffusion, Drift};
use fpk_core::grid::{h_neg1_inner, h_neg1_norm, l2_norm, Boundary, Grid, ScalarField};
use fpk_core::invariants::band_limited_field;
use fpk_core::resolvent::{apply_operator, solve_resolvent, FluxMode, Method, ResolventProblem};
use fpk_core::rng::substream;

#[test]
fn linear_model_matches_direct_solve() {
    for (dim, n, boundary) in [(1, 64, Boundary::ZeroFlux), (1, 64, Boundary::Periodic), (2, 16, Boundary::ZeroFlux), (2, 16, Boundary::Periodic)] {
        let g = Grid::new(dim, 4.0, n, boundary).unwrap();
        let v = ScalarField::from_fn(g, |x| (-(x.iter().map(|c| (c - 0.3) * (c - 0.3)).sum::<f64>())).exp() + 0.1 * x[0]);
        let (lambda, eps) = (0.05, 1e-3);
        let m = BuiltinModel::heat(1.0);
        let (u, stats) = solve_resolvent(&ResolventProblem::new(&m, 0.0, lambda, eps, &v)).unwrap();
        assert!(stats.converged);
        let oracle = dense_solve(linear_matrix(&g, lambda, eps), v.values().to_vec());
        let err = rel_l2(u.values(), &oracle);
        assert!(err <= 1e-9, "dim {dim} {boundary:?}: {err}");
    }
}

#[test]
fn linear_operator_matches_stencil() {
    let g = Grid::new(1, 2.0, 16, Boundary::ZeroFlux).unwrap();
    let y = ScalarField::from_fn(g, |x| x[0].sin() + 2.0);
    let eps = 0.3;
    let out = apply_operator(&BuiltinModel::heat(1.0), 0.0, eps, &y, FluxMode::Centered).unwrap();
    // (εI − Δ)y from the dense matrix with λ = 1: ((1+ε)I − Δ)y − y
    let a = linear_matrix(&g, 1.0, eps);
    for i in 0..g.len() {
        let row: f64 = (0..g.len()).map(|j| a[i][j] * y.values()[j]).sum::<f64>() - y.values()[i];
        assert!((row - out.values()[i]).abs() < 1e-12);
    }
}

#[test]
fn constant_data_matches_scalar_root() {
    let g = Grid::new(1, 2.0, 16, Boundary::Periodic).unwrap();
    let gamma = 2.0;
    let m = BuiltinModel::new(Diffusion::Bosonic { gamma, kappa: 0.0, t_max: 1.0 }, Drift::Constant { c: vec![0.4] }).unwrap();
    let (lambda, eps, c) = (0.3, 0.5, 3.0);
    let v = ScalarField::constant(g, c);
    let root = bisect(|r| r + lambda * eps * gamma * (1.0f64 + r).ln() - c, 0.0, c);
    for flux in [FluxMode::Centered, FluxMode::Upwind] {
        let p = ResolventProblem::new(&m, 0.2, lambda, eps, &v).with_flux(flux);
        let (u, _) = solve_resolvent(&p).unwrap();
        for x in u.values() {
            assert!((x - root).abs() < 1e-10, "{x} vs {root}");
        }
    }
}

#[test]
fn nonlinear_residual_postcondition_rechecked() {
    let models = [
        BuiltinModel::new(Diffusion::Bosonic { gamma: 1.0, kappa: 1.0, t_max: 1.0 }, Drift::Tanh { c: 1.5 }).unwrap(),
        BuiltinModel::new(Diffusion::Bosonic { gamma: 0.5, kappa: 0.0, t_max: 1.0 }, Drift::Saturating { c: vec![1.0, -0.5], k: 2.0 })
            .unwrap(),
    ];
    for m in &models {
        for dim in [1, 2] {
            let n = if dim == 1 { 64 } else { 24 };
            let g = Grid::new(dim, 3.0, n, Boundary::ZeroFlux).unwrap();
            let v = ScalarField::from_fn(g, |x| 4.0 * (-2.0 * x.iter().map(|c| c * c).sum::<f64>()).exp());
            for flux in [FluxMode::Centered, FluxMode::Upwind] {
                let (lambda, eps) = (0.05, 1e-3);
                let p = ResolventProblem::new(m, 0.5, lambda, eps, &v).with_flux(flux);
                let (u, stats) = solve_resolvent(&p).unwrap();
                let au = apply_operator(m, 0.5, eps, &u, flux).unwrap();
                let r = ScalarField::new(g, u.values().iter().zip(au.values()).zip(v.values()).map(|((u, a), v)| u + lambda * a - v).collect()).unwrap();
                let rn = h_neg1_norm(eps, &r).unwrap();
                let tol = 1e-11 * g.volume() + 1e-9 * h_neg1_norm(eps, &v).unwrap();
                assert!(rn <= tol, "{rn} > {tol}");
                assert!(stats.final_residual_hneg1 <= tol);
                assert_eq!(stats.method, Method::Newton);
                assert!(stats.iterations < 20, "{stats:?}");
            }
        }
    }
}

/// Discrete strong monotonicity: with F(u) = u + λA u, ⟨F u − F ū, u − ū⟩₋₁ ≥ (1 − λ/λ₀)‖u − ū‖₋₁²
/// on periodic grids, checked on random smooth pairs.
#[test]
fn discrete_operator_is_strongly_accretive_in_h_neg1() {
    let g = Grid::new(1, 3.0, 64, Boundary::Periodic).unwrap();
    let m = BuiltinModel::new(Diffusion::Bosonic { gamma: 1.0, kappa: 0.0, t_max: 1.0 }, Drift::Constant { c: vec![0.8] }).unwrap();
    // β_r ≥ 1/(1 + 2) on [0, 2]; b*_r = 0.8
    let nu = 1.0 / 3.0;
    let lambda_zero = 2.0 * nu / 0.64;
    let eps = 0.05;
    let mut rng = substream(4, "monotone");
    for _ in 0..20 {
        let u = band_limited_field(&g, &mut rng, 1.0, 0.9);
        let ub = band_limited_field(&g, &mut rng, 1.0, 0.9);
        for frac in [0.25, 0.5] {
            let lambda = frac * lambda_zero;
            let f = |y: &ScalarField| {
                let a = apply_operator(&m, 0.0, eps, y, FluxMode::Centered).unwrap();
                y.zip_with(&a, |y, a| y + lambda * a)
            };
            let d = u.sub(&ub);
            let lhs = h_neg1_inner(eps, &f(&u).sub(&f(&ub)), &d).unwrap();
            let rhs = (1.0 - lambda / lambda_zero) * h_neg1_norm(eps, &d).unwrap().powi(2);
            assert!(lhs >= rhs - 1e-8 * l2_norm(&d).powi(2), "{lhs} < {rhs}");
        }
    }
}
