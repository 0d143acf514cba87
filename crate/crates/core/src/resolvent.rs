//! The regularized operator A_ε(t)y = −Δβ(t,·,y) + εβ(t,·,y) + div F(y) and its resolvent.
//!
//! `F` is a face flux built from b*: either the arithmetic face average of cell values of b*
//! ([`FluxMode::Centered`]) or the donor-cell flux `b(t, x_f, ū_f)·u_donor` with the donor
//! picked by the sign of the face velocity ([`FluxMode::Upwind`]).
//!
//! [`solve_resolvent`] solves `u + λA_ε(t)u = v` by damped Newton with the analytic Jacobian,
//! falling back to a relaxed secant (Kačanov-type) fixed point iteration when Newton stalls.
//! Residuals are measured in the discrete H⁻¹ norm of the same ε.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientModel;
use crate::grid::{divergence_into, laplacian_into, Grid, HelmholtzSolver, ScalarField, MAX_DIM};
use crate::linalg::{gmres, solve_cyclic_tridiagonal, solve_tridiagonal, CsrMatrix, GmresOptions};
use crate::sum::dot;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxMode {
    #[default]
    Centered,
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Newton,
    Picard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute H⁻¹ residual tolerance per unit box volume.
    pub atol_per_volume: f64,
    pub rtol: f64,
    pub max_newton: usize,
    pub max_picard: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { atol_per_volume: 1e-11, rtol: 1e-9, max_newton: 60, max_picard: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_residual_l2: f64,
    pub final_residual_hneg1: f64,
    pub method: Method,
    pub converged: bool,
    pub clamp_events: usize,
}

/// One resolvent equation `u + λA_ε(t)u = v`.
pub struct ResolventProblem<'a, M: CoefficientModel + ?Sized> {
    pub model: &'a M,
    pub t: f64,
    pub lambda: f64,
    pub eps: f64,
    pub v: &'a ScalarField,
    /// λ₀ of the model, +∞ if unconstrained.
    pub lambda_zero: f64,
    pub flux: FluxMode,
    pub tol: Tolerances,
    /// Iterates are clamped to [−r_max, r_max].
    pub r_max: f64,
}

impl<'a, M: CoefficientModel + ?Sized> ResolventProblem<'a, M> {
    pub fn new(model: &'a M, t: f64, lambda: f64, eps: f64, v: &'a ScalarField) -> Self {
        Self {
            model,
            t,
            lambda,
            eps,
            v,
            lambda_zero: f64::INFINITY,
            flux: FluxMode::Centered,
            tol: Tolerances::default(),
            r_max: f64::INFINITY,
        }
    }

    pub fn with_lambda_zero(mut self, lambda_zero: f64) -> Self {
        self.lambda_zero = lambda_zero;
        self
    }

    pub fn with_flux(mut self, flux: FluxMode) -> Self {
        self.flux = flux;
        self
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_r_max(mut self, r_max: f64) -> Self {
        self.r_max = r_max;
        self
    }
}

/// Enforces λ ≤ ½λ₀ (with a relative slack of 1e-12 for schedules that hit it exactly).
pub fn check_step(lambda: f64, lambda_zero: f64) -> Result<()> {
    if lambda_zero.is_finite() && lambda > 0.5 * lambda_zero * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { lambda, lambda_zero });
    }
    Ok(())
}

/// Linearization of one open face flux: partial derivatives with respect to the left
/// (`c`) and right (`next(c)`) cell values.
#[derive(Debug, Clone, Copy, Default)]
struct FaceLin {
    left: f64,
    right: f64,
}

/// Grid-dependent state reused across many resolvent solves on one grid.
#[derive(Debug, Clone)]
pub struct ResolventSolver {
    grid: Grid,
    helmholtz: HelmholtzSolver,
    centers: Vec<[f64; MAX_DIM]>,
    face_centers: Vec<Vec<[f64; MAX_DIM]>>,
    next: Vec<Vec<Option<usize>>>,
}

fn finite(what: &'static str, t: f64, r: f64, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteCoefficient { what, t, r })
    }
}

impl ResolventSolver {
    pub fn new(grid: &Grid) -> Self {
        let g = *grid;
        let d = g.dim();
        Self {
            grid: g,
            helmholtz: HelmholtzSolver::new(&g),
            centers: (0..g.len()).map(|i| g.center(i)).collect(),
            face_centers: (0..d).map(|a| (0..g.len()).map(|i| g.face_center(i, a)).collect()).collect(),
            next: (0..d).map(|a| (0..g.len()).map(|i| g.next(i, a)).collect()).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn helmholtz(&self) -> &HelmholtzSolver {
        &self.helmholtz
    }

    fn x(&self, i: usize) -> &[f64] {
        &self.centers[i][..self.grid.dim()]
    }

    fn xf(&self, a: usize, i: usize) -> &[f64] {
        &self.face_centers[a][i][..self.grid.dim()]
    }

    /// Face fluxes of b*(t,·,y); closed faces are zero.
    fn fluxes<M: CoefficientModel + ?Sized>(&self, model: &M, t: f64, y: &[f64], flux: FluxMode) -> Result<Vec<Vec<f64>>> {
        let g = &self.grid;
        let mut out = vec![vec![0.0; g.len()]; g.dim()];
        match flux {
            FluxMode::Centered => {
                let bs: Vec<[f64; MAX_DIM]> = (0..g.len()).map(|i| model.b_star(t, self.x(i), y[i])).collect();
                for a in 0..g.dim() {
                    for i in 0..g.len() {
                        if let Some(j) = self.next[a][i] {
                            out[a][i] = finite("b_star", t, y[i], 0.5 * (bs[i][a] + bs[j][a]))?;
                        }
                    }
                }
            }
            FluxMode::Upwind => {
                for a in 0..g.dim() {
                    for i in 0..g.len() {
                        if let Some(j) = self.next[a][i] {
                            let m = 0.5 * (y[i] + y[j]);
                            let bf = model.b(t, self.xf(a, i), m)[a];
                            let donor = if bf >= 0.0 { y[i] } else { y[j] };
                            out[a][i] = finite("b", t, m, bf * donor)?;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// A_ε(t)y written into `out`.
    fn operator_into<M: CoefficientModel + ?Sized>(
        &self,
        model: &M,
        t: f64,
        eps: f64,
        y: &[f64],
        flux: FluxMode,
        out: &mut [f64],
    ) -> Result<()> {
        let g = &self.grid;
        let beta = (0..g.len())
            .map(|i| finite("beta", t, y[i], model.beta(t, self.x(i), y[i])))
            .collect::<Result<Vec<f64>>>()?;
        let mut lap = vec![0.0; g.len()];
        laplacian_into(g, &beta, &mut lap);
        let f = self.fluxes(model, t, y, flux)?;
        divergence_into(g, &f, out);
        for ((o, b), l) in out.iter_mut().zip(&beta).zip(&lap) {
            *o += eps * b - l;
        }
        Ok(())
    }

    pub fn apply_operator<M: CoefficientModel + ?Sized>(
        &self,
        model: &M,
        t: f64,
        eps: f64,
        y: &ScalarField,
        flux: FluxMode,
    ) -> Result<ScalarField> {
        let mut out = vec![0.0; self.grid.len()];
        self.operator_into(model, t, eps, y.values(), flux, &mut out)?;
        Ok(ScalarField::from_vec_unchecked(self.grid, out))
    }

    /// `u + λA_ε(t)u − v`.
    fn residual<M: CoefficientModel + ?Sized>(&self, p: &ResolventProblem<M>, u: &[f64]) -> Result<Vec<f64>> {
        let mut r = vec![0.0; u.len()];
        self.operator_into(p.model, p.t, p.eps, u, p.flux, &mut r)?;
        for ((ri, ui), vi) in r.iter_mut().zip(u).zip(p.v.values()) {
            *ri = ui + p.lambda * *ri - vi;
        }
        Ok(r)
    }

    fn hnorm(&self, eps: f64, r: &[f64]) -> Result<f64> {
        self.helmholtz.norm(eps, r)
    }

    /// Matrix of `y ↦ y + λ(εI − Δ)(c ⊙ y) + λ div(Σ lin·y)`.
    fn assemble(&self, lambda: f64, eps: f64, c: &[f64], faces: &[Vec<FaceLin>]) -> CsrMatrix {
        let g = &self.grid;
        let inv_h2 = 1.0 / (g.spacing() * g.spacing());
        let inv_h = 1.0 / g.spacing();
        let mut rows: Vec<Vec<(usize, f64)>> = (0..g.len()).map(|_| Vec::with_capacity(1 + 4 * g.dim())).collect();
        for (i, row) in rows.iter_mut().enumerate() {
            let mut diag = 1.0 + lambda * eps * c[i];
            for a in 0..g.dim() {
                for j in [g.next(i, a), g.prev(i, a)].into_iter().flatten() {
                    diag += lambda * c[i] * inv_h2;
                    row.push((j, -lambda * c[j] * inv_h2));
                }
            }
            row.push((i, diag));
        }
        for (a, lins) in faces.iter().enumerate() {
            for (i, lin) in lins.iter().enumerate() {
                if let Some(j) = self.next[a][i] {
                    let (l, r) = (lambda * lin.left * inv_h, lambda * lin.right * inv_h);
                    rows[i].push((i, l));
                    rows[i].push((j, r));
                    rows[j].push((i, -l));
                    rows[j].push((j, -r));
                }
            }
        }
        CsrMatrix::from_rows(rows)
    }

    fn solve_linear(&self, m: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        let g = &self.grid;
        let n = g.len();
        if g.dim() == 1 {
            let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
            let sub: Vec<f64> = (0..n - 1).map(|i| m.get(i + 1, i)).collect();
            let sup: Vec<f64> = (0..n - 1).map(|i| m.get(i, i + 1)).collect();
            let mut x = rhs.to_vec();
            match g.boundary() {
                crate::grid::Boundary::Periodic => {
                    solve_cyclic_tridiagonal(&sub, &diag, &sup, m.get(0, n - 1), m.get(n - 1, 0), &mut x)?
                }
                crate::grid::Boundary::ZeroFlux => solve_tridiagonal(&sub, &diag, &sup, &mut x)?,
            }
            Ok(x)
        } else {
            let mut x = vec![0.0; n];
            gmres(m, rhs, &mut x, GmresOptions::default())?;
            Ok(x)
        }
    }

    fn newton_matrix<M: CoefficientModel + ?Sized>(&self, p: &ResolventProblem<M>, u: &[f64]) -> CsrMatrix {
        let g = &self.grid;
        let t = p.t;
        let c: Vec<f64> = (0..g.len()).map(|i| p.model.beta_r(t, self.x(i), u[i])).collect();
        let mut faces = vec![vec![FaceLin::default(); g.len()]; g.dim()];
        for (a, lins) in faces.iter_mut().enumerate() {
            match p.flux {
                FluxMode::Centered => {
                    let bsr: Vec<f64> = (0..g.len()).map(|i| p.model.b_star_r(t, self.x(i), u[i])[a]).collect();
                    for (i, lin) in lins.iter_mut().enumerate() {
                        if let Some(j) = self.next[a][i] {
                            *lin = FaceLin { left: 0.5 * bsr[i], right: 0.5 * bsr[j] };
                        }
                    }
                }
                FluxMode::Upwind => {
                    for (i, lin) in lins.iter_mut().enumerate() {
                        if let Some(j) = self.next[a][i] {
                            let xf = self.xf(a, i);
                            let m = 0.5 * (u[i] + u[j]);
                            let bf = p.model.b(t, xf, m)[a];
                            let dm = 1e-6 * (1.0 + m.abs());
                            let db = (p.model.b(t, xf, m + dm)[a] - p.model.b(t, xf, m - dm)[a]) / (2.0 * dm);
                            let donor = if bf >= 0.0 { u[i] } else { u[j] };
                            let half = 0.5 * db * donor;
                            *lin = if bf >= 0.0 {
                                FaceLin { left: bf + half, right: half }
                            } else {
                                FaceLin { left: half, right: bf + half }
                            };
                        }
                    }
                }
            }
        }
        self.assemble(p.lambda, p.eps, &c, &faces)
    }

    /// Secant linearization: β(u) ≈ a(u)·u, F(u) ≈ frozen-velocity flux.
    fn picard_matrix<M: CoefficientModel + ?Sized>(&self, p: &ResolventProblem<M>, u: &[f64]) -> CsrMatrix {
        let g = &self.grid;
        let t = p.t;
        let c: Vec<f64> = (0..g.len()).map(|i| p.model.a(t, self.x(i), u[i])).collect();
        let mut faces = vec![vec![FaceLin::default(); g.len()]; g.dim()];
        for (a, lins) in faces.iter_mut().enumerate() {
            match p.flux {
                FluxMode::Centered => {
                    let b: Vec<f64> = (0..g.len()).map(|i| p.model.b(t, self.x(i), u[i])[a]).collect();
                    for (i, lin) in lins.iter_mut().enumerate() {
                        if let Some(j) = self.next[a][i] {
                            *lin = FaceLin { left: 0.5 * b[i], right: 0.5 * b[j] };
                        }
                    }
                }
                FluxMode::Upwind => {
                    for (i, lin) in lins.iter_mut().enumerate() {
                        if let Some(j) = self.next[a][i] {
                            let bf = p.model.b(t, self.xf(a, i), 0.5 * (u[i] + u[j]))[a];
                            *lin = FaceLin { left: bf.max(0.0), right: bf.min(0.0) };
                        }
                    }
                }
            }
        }
        self.assemble(p.lambda, p.eps, &c, &faces)
    }

    fn clamp(u: &mut [f64], r_max: f64) -> usize {
        let mut events = 0;
        for x in u.iter_mut() {
            if x.abs() > r_max {
                *x = x.signum() * r_max;
                events += 1;
            }
        }
        events
    }

    /// Solves `u + λA_ε(t)u = v`.
    pub fn solve<M: CoefficientModel + ?Sized>(&self, p: &ResolventProblem<M>) -> Result<(ScalarField, SolveStats)> {
        if p.v.grid() != &self.grid {
            return Err(Error::InvalidGrid("right-hand side lives on a different grid".into()));
        }
        if !(p.eps > 0.0 && p.eps.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("eps = {} must be positive", p.eps)));
        }
        if !(p.lambda >= 0.0 && p.lambda.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("lambda = {} must be nonnegative", p.lambda)));
        }
        check_step(p.lambda, p.lambda_zero)?;
        if p.lambda == 0.0 {
            let stats = SolveStats {
                iterations: 0,
                final_residual_l2: 0.0,
                final_residual_hneg1: 0.0,
                method: Method::Newton,
                converged: true,
                clamp_events: 0,
            };
            return Ok((p.v.clone(), stats));
        }
        let tol = p.tol.atol_per_volume * self.grid.volume() + p.tol.rtol * self.hnorm(p.eps, p.v.values())?;

        let mut clamp_events = 0;
        let mut u = p.v.values().to_vec();
        clamp_events += Self::clamp(&mut u, p.r_max);
        let mut r = self.residual(p, &u)?;
        let mut rn = self.hnorm(p.eps, &r)?;
        let mut iterations = 0;

        // Newton
        let mut converged = rn <= tol;
        let mut polish = 0;
        while iterations < p.tol.max_newton && rn > 0.0 && (!converged || polish < 2) {
            let j = self.newton_matrix(p, &u);
            let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
            let delta = match self.solve_linear(&j, &rhs) {
                Ok(d) => d,
                Err(_) => break,
            };
            iterations += 1;
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-10 {
                let mut trial: Vec<f64> = u.iter().zip(&delta).map(|(x, d)| x + step * d).collect();
                let ev = Self::clamp(&mut trial, p.r_max);
                let rt = self.residual(p, &trial)?;
                let rnt = self.hnorm(p.eps, &rt)?;
                if rnt < rn {
                    u = trial;
                    r = rt;
                    rn = rnt;
                    clamp_events += ev;
                    accepted = true;
                    break;
                }
                if converged {
                    break;
                }
                step *= 0.5;
            }
            if converged {
                if !accepted {
                    break;
                }
                polish += 1;
            } else if !accepted {
                break;
            }
            converged = rn <= tol;
        }
        if converged {
            return Ok((self.field(u), self.stats(iterations, &r, rn, Method::Newton, clamp_events)));
        }

        // secant fixed point fallback, relaxed until the residual decreases
        let mut picard_iters = 0;
        while picard_iters < p.tol.max_picard {
            if rn <= tol {
                return Ok((self.field(u), self.stats(iterations + picard_iters, &r, rn, Method::Picard, clamp_events)));
            }
            let m = self.picard_matrix(p, &u);
            let target = self.solve_linear(&m, p.v.values())?;
            picard_iters += 1;
            let mut omega = 1.0;
            let mut accepted = false;
            while omega > 1e-8 {
                let mut trial: Vec<f64> = u.iter().zip(&target).map(|(x, y)| x + omega * (y - x)).collect();
                let ev = Self::clamp(&mut trial, p.r_max);
                let rt = self.residual(p, &trial)?;
                let rnt = self.hnorm(p.eps, &rt)?;
                if rnt < rn {
                    u = trial;
                    r = rt;
                    rn = rnt;
                    clamp_events += ev;
                    accepted = true;
                    break;
                }
                omega *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Err(Error::SolverDiverged { iterations: iterations + picard_iters, residual: rn })
    }

    fn field(&self, u: Vec<f64>) -> ScalarField {
        ScalarField::from_vec_unchecked(self.grid, u)
    }

    fn stats(&self, iterations: usize, r: &[f64], rn: f64, method: Method, clamp_events: usize) -> SolveStats {
        SolveStats {
            iterations,
            final_residual_l2: (dot(r, r) * self.grid.cell_volume()).sqrt(),
            final_residual_hneg1: rn,
            method,
            converged: true,
            clamp_events,
        }
    }
}

/// A_ε(t)y on `y`'s grid.
pub fn apply_operator<M: CoefficientModel + ?Sized>(
    model: &M,
    t: f64,
    eps: f64,
    y: &ScalarField,
    flux: FluxMode,
) -> Result<ScalarField> {
    ResolventSolver::new(y.grid()).apply_operator(model, t, eps, y, flux)
}

/// Solves `u + λA_ε(t)u = v`. Repeated solves on one grid should reuse a [`ResolventSolver`].
pub fn solve_resolvent<M: CoefficientModel + ?Sized>(p: &ResolventProblem<M>) -> Result<(ScalarField, SolveStats)> {
    ResolventSolver::new(p.v.grid()).solve(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{BuiltinModel, Diffusion, Drift};
    use crate::grid::{Boundary, Grid};
    use alloc::vec;

    fn grid1(boundary: Boundary) -> Grid {
        Grid::new(1, 3.0, 32, boundary).unwrap()
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = grid1(Boundary::ZeroFlux);
        let m = BuiltinModel::new(Diffusion::Bosonic { gamma: 2.0, kappa: 0.5, t_max: 1.0 }, Drift::Tanh { c: 1.0 }).unwrap();
        let out = apply_operator(&m, 0.3, 1e-2, &ScalarField::zeros(g), FluxMode::Upwind).unwrap();
        assert!(out.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lambda_zero_step_is_identity() {
        let g = grid1(Boundary::Periodic);
        let v = ScalarField::from_fn(g, |x| (-x[0] * x[0]).exp());
        let m = BuiltinModel::heat(1.0);
        let (u, stats) = solve_resolvent(&ResolventProblem::new(&m, 0.0, 0.0, 1e-2, &v)).unwrap();
        assert_eq!(u, v);
        assert!(stats.converged);
    }

    #[test]
    fn constant_field_under_homogeneous_model() {
        let g = grid1(Boundary::Periodic);
        let m = BuiltinModel::new(Diffusion::Bosonic { gamma: 2.0, kappa: 0.0, t_max: 1.0 }, Drift::Constant { c: vec![0.7] })
            .unwrap();
        let y = ScalarField::constant(g, 1.5);
        let out = apply_operator(&m, 0.0, 0.1, &y, FluxMode::Centered).unwrap();
        let expected = 0.1 * 2.0 * 2.5f64.ln();
        for v in out.values() {
            assert!((v - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn oversize_step_is_rejected() {
        let g = grid1(Boundary::Periodic);
        let v = ScalarField::zeros(g);
        let m = BuiltinModel::heat(1.0);
        let p = ResolventProblem::new(&m, 0.0, 1.0, 1e-2, &v).with_lambda_zero(1.5);
        assert!(matches!(solve_resolvent(&p), Err(Error::StepTooLarge { .. })));
        let p = ResolventProblem::new(&m, 0.0, 0.75, 1e-2, &v).with_lambda_zero(1.5);
        assert!(solve_resolvent(&p).is_ok());
    }

    #[test]
    fn clamping_is_counted() {
        let g = grid1(Boundary::ZeroFlux);
        // single-cell spike above r_max; the solution itself is far below it
        let mut v = ScalarField::zeros(g);
        v.values_mut()[16] = 5.0;
        let m = BuiltinModel::heat(1.0);
        let p = ResolventProblem::new(&m, 0.0, 0.5, 1e-2, &v).with_r_max(4.0);
        let (u, stats) = solve_resolvent(&p).unwrap();
        assert!(stats.clamp_events > 0);
        assert!(u.max() <= 4.0);
    }
}
