//! Executable checks of the qualitative properties of the flow and the resolvent.
//!
//! Every check returns a [`CheckReport`] with `pass ⟺ worst_violation ≤ tolerance`. Checks
//! of continuum properties that the discrete scheme only inherits up to discretization error
//! carry grid-aware tolerances; [`shrinks_under_refinement`] turns a pair of reports at two
//! resolutions into a convergence verdict.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientModel;
use crate::grid::{field_norms, Boundary, Grid, ScalarField};
use crate::resolvent::{FluxMode, ResolventProblem, ResolventSolver, Tolerances};
use crate::rng::substream;
use crate::stepper::{Stepper, Trajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub step: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_id: String,
    pub pass: bool,
    pub worst_violation: f64,
    pub location: Option<Location>,
    pub tolerance: f64,
    pub notes: String,
    /// Measured quantities that are reported but not asserted.
    pub metrics: BTreeMap<String, f64>,
}

impl CheckReport {
    fn new(check_id: &str, worst_violation: f64, tolerance: f64, location: Option<Location>, notes: String) -> Self {
        Self {
            check_id: check_id.to_string(),
            pass: worst_violation <= tolerance,
            worst_violation,
            location,
            tolerance,
            notes,
            metrics: BTreeMap::new(),
        }
    }

    fn metric(mut self, key: &str, value: f64) -> Self {
        self.metrics.insert(key.to_string(), value);
        self
    }
}

/// True if `fine` improves on `coarse` by at least `factor`, or `coarse` is already at the
/// noise floor.
pub fn shrinks_under_refinement(coarse: f64, fine: f64, factor: f64, floor: f64) -> bool {
    coarse <= floor || fine * factor <= coarse
}

fn all_steps<M: CoefficientModel + ?Sized>(stepper: &Stepper<M>, u0: &ScalarField) -> Result<Trajectory> {
    let config = crate::stepper::SolverConfig { snapshot_stride: 1, ..stepper.config().clone() };
    stepper.with_config(config)?.solve_trajectory(u0).map_err(|f| f.error)
}

/// Runs both initial data under the same config and compares `l1(u_i − ū_i)` against
/// `l1(u₀ − ū₀)` at every step. Tolerance `1e-6 + c_h·h`, relative.
pub fn l1_contraction_check<M: CoefficientModel + ?Sized>(
    stepper: &Stepper<M>,
    u0: &ScalarField,
    u0_bar: &ScalarField,
    c_h: f64,
) -> Result<CheckReport> {
    let a = all_steps(stepper, u0)?;
    let b = all_steps(stepper, u0_bar)?;
    let d0 = field_norms(&u0.sub(u0_bar)).l1;
    let mut worst = 0.0f64;
    let mut location = None;
    let mut max_ratio = 0.0f64;
    for (k, (ua, ub)) in a.fields.iter().zip(&b.fields).enumerate().skip(1) {
        let d = field_norms(&ua.sub(ub)).l1;
        let excess = if d0 > 0.0 { d / d0 - 1.0 } else { d };
        max_ratio = max_ratio.max(if d0 > 0.0 { d / d0 } else { 0.0 });
        if excess > worst {
            worst = excess;
            location = Some(Location { step: a.snapshot_steps[k], t: a.times[k] });
        }
    }
    let h = u0.grid().spacing();
    let tol = 1e-6 + c_h * h;
    let notes = format!("relative excess of l1(u_i - v_i) over l1(u_0 - v_0) = {d0:e}; tol = 1e-6 + {c_h}*h");
    Ok(CheckReport::new("l1_contraction", worst, tol, location, notes)
        .metric("initial_l1_distance", d0)
        .metric("max_ratio", max_ratio))
}

/// Worst `max(0, −min u_i) / max(1, linf(u₀))`.
pub fn positivity_check(traj: &Trajectory, tolerance: f64) -> CheckReport {
    let scale = field_norms(traj.initial()).linf.max(1.0);
    let mut worst = (-traj.initial().min()).max(0.0) / scale;
    let mut location = None;
    for d in &traj.diagnostics {
        let v = (-d.min).max(0.0) / scale;
        if v > worst {
            worst = v;
            location = Some(Location { step: d.i + 1, t: d.t });
        }
    }
    CheckReport::new("positivity", worst, tolerance, location, "negative part relative to max(1, linf(u0))".into())
}

/// Two reports. `mass_identity`: per step `|Δmass + μεΣβ·h^d| / l1(u_{i+1})` against
/// `identity_tol`. `mass_total`: `|mass(T) − mass(0)|` in excess of `ε·T·sup_a·l1(u₀)` against
/// `total_tol`.
pub fn mass_check(traj: &Trajectory, sup_a: f64, identity_tol: f64, total_tol: f64) -> [CheckReport; 2] {
    let mut worst = 0.0f64;
    let mut location = None;
    let mut prev_l1 = field_norms(traj.initial()).l1;
    for d in &traj.diagnostics {
        let scale = d.l1.max(prev_l1);
        let gap = (d.mass_drift_observed - d.mass_drift_predicted).abs();
        let v = if gap == 0.0 { 0.0 } else { gap / scale };
        if v > worst {
            worst = v;
            location = Some(Location { step: d.i + 1, t: d.t });
        }
        prev_l1 = d.l1;
    }
    let identity = CheckReport::new(
        "mass_identity",
        worst,
        identity_tol,
        location,
        "per-step |observed - predicted| mass drift relative to the l1 norm".into(),
    );

    let n0 = field_norms(traj.initial());
    let (m_t, t) = match traj.diagnostics.last() {
        Some(d) => (d.mass, d.t),
        None => (n0.mass, 0.0),
    };
    let drift = (m_t - n0.mass).abs();
    let bound = traj.eps * t * sup_a * n0.l1;
    let total = CheckReport::new(
        "mass_total",
        (drift - bound).max(0.0),
        total_tol,
        None,
        format!("|mass(T) - mass(0)| = {drift:e} against eps*T*sup_a*l1(u0) = {bound:e}"),
    )
    .metric("total_drift", drift)
    .metric("drift_bound", bound);
    [identity, total]
}

/// `linf(u_i) ≤ linf(u₀) + Λ·t_i + tol`.
pub fn linf_bound_check(traj: &Trajectory, capital_lambda: f64, tolerance: f64) -> CheckReport {
    let l0 = field_norms(traj.initial()).linf;
    if !capital_lambda.is_finite() {
        return CheckReport::new("linf_bound", 0.0, tolerance, None, "capital lambda is infinite; bound is vacuous".into());
    }
    let mut worst = f64::NEG_INFINITY;
    let mut location = None;
    for d in &traj.diagnostics {
        let v = d.linf - l0 - capital_lambda * d.t;
        if v > worst {
            worst = v;
            location = Some(Location { step: d.i + 1, t: d.t });
        }
    }
    let worst = worst.max(0.0);
    CheckReport::new("linf_bound", worst, tolerance, location, format!("Lambda = {capital_lambda}, linf(u0) = {l0}"))
}

/// Smooth random field: `mean + amplitude·noise`, where `noise` is a random combination of the
/// lowest `n/8` Fourier modes per axis normalised to max |noise| = 1.
pub fn band_limited_field<R: Rng>(grid: &Grid, rng: &mut R, mean: f64, amplitude: f64) -> ScalarField {
    let kmax = (grid.n() / 8).max(1);
    let l = 2.0 * grid.half_width();
    let d = grid.dim();
    let mut modes: Vec<([usize; 2], f64, f64)> = Vec::new();
    let k1_range = if d == 2 { 0..=kmax } else { 0..=0 };
    for k0 in 0..=kmax {
        for k1 in k1_range.clone() {
            if k0 + k1 == 0 {
                continue;
            }
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            modes.push(([k0, k1], a, b));
        }
    }
    let mut f = ScalarField::from_fn(*grid, |x| {
        let mut acc = 0.0;
        for (k, a, b) in &modes {
            let mut phase = 2.0 * PI * k[0] as f64 * x[0] / l;
            if d == 2 {
                phase += 2.0 * PI * k[1] as f64 * x[1] / l;
            }
            acc += a * phase.cos() + b * phase.sin();
        }
        acc
    });
    let peak = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let s = if peak > 0.0 { amplitude / peak } else { 0.0 };
    f.values_mut().iter_mut().for_each(|v| *v = mean + s * *v);
    f
}

/// Parameters of a resolvent Lipschitz trial run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzSetup {
    pub t: f64,
    pub lambda: f64,
    pub eps: f64,
    pub lambda_zero: f64,
    pub flux: FluxMode,
    pub trials: usize,
    pub seed: u64,
    /// Random fields are `mean ± amplitude`.
    pub mean: f64,
    pub amplitude: f64,
}

/// Max over random pairs of `‖J_λ v − J_λ v̄‖₋₁ / ‖v − v̄‖₋₁` against `(1 − λ/λ₀)⁻¹`.
pub fn resolvent_lipschitz_check<M: CoefficientModel + ?Sized>(
    model: &M,
    grid: &Grid,
    s: &LipschitzSetup,
) -> Result<CheckReport> {
    if grid.boundary() != Boundary::Periodic {
        return Err(Error::InvalidConfig("the Lipschitz check runs on periodic grids".into()));
    }
    let solver = ResolventSolver::new(grid);
    let tol = Tolerances { atol_per_volume: 1e-15, rtol: 1e-13, ..Tolerances::default() };
    let mut rng = substream(s.seed, "lipschitz");
    let bound = if s.lambda_zero.is_finite() { 1.0 / (1.0 - s.lambda / s.lambda_zero) } else { 1.0 };
    let mut max_ratio = 0.0f64;
    let mut location = None;
    for trial in 0..s.trials {
        let v = band_limited_field(grid, &mut rng, s.mean, s.amplitude);
        let vb = band_limited_field(grid, &mut rng, s.mean, s.amplitude);
        let solve = |v: &ScalarField| {
            let p = ResolventProblem {
                model,
                t: s.t,
                lambda: s.lambda,
                eps: s.eps,
                v,
                lambda_zero: s.lambda_zero,
                flux: s.flux,
                tol,
                r_max: f64::INFINITY,
            };
            solver.solve(&p).map(|(u, _)| u)
        };
        let (u, ub) = (solve(&v)?, solve(&vb)?);
        let h = solver.helmholtz();
        let den = h.norm(s.eps, v.sub(&vb).values())?;
        let ratio = if den == 0.0 { 0.0 } else { h.norm(s.eps, u.sub(&ub).values())? / den };
        if ratio > max_ratio {
            max_ratio = ratio;
            location = Some(Location { step: trial, t: s.t });
        }
    }
    let notes = format!("lambda = {}, lambda_zero = {}, bound (1 - lambda/lambda_zero)^-1 = {bound}", s.lambda, s.lambda_zero);
    Ok(CheckReport::new("resolvent_lipschitz", (max_ratio - bound).max(0.0), 1e-8, location, notes)
        .metric("max_ratio", max_ratio)
        .metric("bound", bound))
}

/// Time profile of a test function; each vanishes at the horizon T.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeProfile {
    /// 1 − t/T
    Linear,
    /// (1 − t/T)²
    Quadratic,
    /// cos(πt / 2T)
    Cosine,
}

/// `φ(t,x) = θ(t)·Π_a (1 − ((x_a − c_a)/r)²)³` on its support, zero outside: C² in x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: [f64; 2],
    pub radius: f64,
    pub profile: TimeProfile,
}

fn bump1(s: f64) -> (f64, f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 - s * s;
    (q * q * q, -6.0 * s * q * q, -6.0 * q * q + 24.0 * s * s * q)
}

impl TestFunction {
    fn theta(&self, t: f64, horizon: f64) -> (f64, f64) {
        let s = t / horizon;
        match self.profile {
            TimeProfile::Linear => (1.0 - s, -1.0 / horizon),
            TimeProfile::Quadratic => ((1.0 - s) * (1.0 - s), -2.0 * (1.0 - s) / horizon),
            TimeProfile::Cosine => {
                let w = PI / (2.0 * horizon);
                ((w * t).cos(), -w * (w * t).sin())
            }
        }
    }

    /// (φ, φ_t, ∇φ, Δφ) at (t, x).
    pub fn eval(&self, t: f64, x: &[f64], horizon: f64) -> (f64, f64, [f64; 2], f64) {
        let r = self.radius;
        let mut parts = [(1.0, 0.0, 0.0); 2];
        for (a, xa) in x.iter().enumerate() {
            let (f, f1, f2) = bump1((xa - self.center[a]) / r);
            parts[a] = (f, f1 / r, f2 / (r * r));
        }
        let d = x.len();
        let space: f64 = parts[..d].iter().map(|p| p.0).product();
        let mut grad = [0.0; 2];
        let mut lap = 0.0;
        for a in 0..d {
            let others: f64 = (0..d).filter(|&b| b != a).map(|b| parts[b].0).product();
            grad[a] = parts[a].1 * others;
            lap += parts[a].2 * others;
        }
        let (th, th_t) = self.theta(t, horizon);
        (th * space, th_t * space, [th * grad[0], th * grad[1]], th * lap)
    }

    /// sup |φ| + |φ_t| + |∇φ| + |Δφ| by dense sampling of the closed forms.
    pub fn c2_norm(&self, dim: usize, horizon: f64) -> f64 {
        let m = 64;
        let mut sup = 0.0f64;
        for k in 0..=8 {
            let t = horizon * k as f64 / 8.0;
            for i in 0..=m {
                for j in 0..=(if dim == 2 { m } else { 0 }) {
                    let x = [
                        self.center[0] + self.radius * (2.0 * i as f64 / m as f64 - 1.0),
                        self.center[1] + self.radius * (2.0 * j as f64 / m as f64 - 1.0),
                    ];
                    let (f, ft, g, l) = self.eval(t, &x[..dim], horizon);
                    sup = sup.max(f.abs() + ft.abs() + (g[0] * g[0] + g[1] * g[1]).sqrt() + l.abs());
                }
            }
        }
        sup
    }

    fn check_support(&self, grid: &Grid) -> Result<()> {
        let l = grid.half_width();
        for a in 0..grid.dim() {
            if !(self.radius > 0.0) || self.center[a] - self.radius <= -l || self.center[a] + self.radius >= l {
                return Err(Error::TestFunctionNotSupported(format!(
                    "centre {:?}, radius {} inside box of half width {l}",
                    &self.center[..grid.dim()],
                    self.radius
                )));
            }
        }
        Ok(())
    }
}

/// Space-time quadrature of the weak form
/// `∫∫ u φ_t + β(u)Δφ − εβ(u)φ + b*(u)·∇φ dx dt + ∫ φ(0)u₀ dx`
/// for the piecewise-constant interpolant `u(t) = u_i` on `[t_i, t_{i+1})` of a trajectory
/// that recorded every step. The `u φ_t` term is integrated exactly in time, the others by
/// two-point Gauss–Legendre per step; space uses the midpoint rule.
pub fn weak_form_residuals<M: CoefficientModel + ?Sized>(
    traj: &Trajectory,
    model: &M,
    tests: &[TestFunction],
) -> Result<Vec<f64>> {
    let steps = traj.diagnostics.len();
    if traj.fields.len() != steps + 1 {
        return Err(Error::InvalidConfig("weak-form residual needs a trajectory with snapshot_stride = 1".into()));
    }
    let g = *traj.initial().grid();
    let horizon = traj.final_time();
    if horizon <= 0.0 {
        return Ok(alloc::vec![0.0; tests.len()]);
    }
    let d = g.dim();
    let hd = g.cell_volume();
    let gauss = 0.5 / 3f64.sqrt();
    let mut out = Vec::with_capacity(tests.len());
    for phi in tests {
        phi.check_support(&g)?;
        let mut total = 0.0;
        for (i, u0) in traj.initial().values().iter().enumerate() {
            total += phi.eval(0.0, &g.center(i)[..d], horizon).0 * u0 * hd;
        }
        for k in 0..steps {
            let (t0, t1) = (traj.times[k], traj.times[k + 1]);
            let mu = t1 - t0;
            let nodes = [0.5 * (t0 + t1) - gauss * mu, 0.5 * (t0 + t1) + gauss * mu];
            let u = traj.fields[k].values();
            let mut acc = 0.0;
            for (i, &r) in u.iter().enumerate() {
                let x = &g.center(i)[..d];
                let (f0, ..) = phi.eval(t0, x, horizon);
                let (f1, ..) = phi.eval(t1, x, horizon);
                acc += r * (f1 - f0);
                for &t in &nodes {
                    let (f, _, grad, lap) = phi.eval(t, x, horizon);
                    if f == 0.0 && grad == [0.0, 0.0] && lap == 0.0 {
                        continue;
                    }
                    let beta = model.beta(t, x, r);
                    let bs = model.b_star(t, x, r);
                    acc += 0.5 * mu * (beta * lap - traj.eps * beta * f + bs[0] * grad[0] + bs[1] * grad[1]);
                }
            }
            total += acc * hd;
        }
        out.push(total);
    }
    Ok(out)
}

/// Weak-form consistency: passes if every residual is below `c_max·(μ + h²)·‖φ‖_{C²}`; the
/// measured constant is reported per test function.
pub fn weak_form_residual<M: CoefficientModel + ?Sized>(
    traj: &Trajectory,
    model: &M,
    tests: &[TestFunction],
    mu: f64,
    c_max: f64,
) -> Result<CheckReport> {
    let res = weak_form_residuals(traj, model, tests)?;
    let g = traj.initial().grid();
    let h = g.spacing();
    let scale = mu + h * h;
    let mut worst = 0.0f64;
    let mut location = None;
    let mut report_metrics = Vec::new();
    for (k, (phi, r)) in tests.iter().zip(&res).enumerate() {
        let c = r.abs() / (scale * phi.c2_norm(g.dim(), traj.final_time()).max(f64::MIN_POSITIVE));
        report_metrics.push((format!("residual_{k}"), *r));
        report_metrics.push((format!("constant_{k}"), c));
        if c > worst {
            worst = c;
            location = Some(Location { step: k, t: traj.final_time() });
        }
    }
    let mut rep = CheckReport::new(
        "weak_form",
        worst,
        c_max,
        location,
        "measured C in |residual| <= C (mu + h^2) |phi|_C2; location.step is the test-function index".into(),
    );
    for (k, v) in report_metrics {
        rep = rep.metric(&k, v);
    }
    Ok(rep)
}

/// Runs the same initial profile at (μ, n) and (μ/2, 2n) and reports the worst ratio
/// `|residual_fine| / |residual_coarse|` across test functions against `1/factor`.
pub fn weak_form_refinement<M, F>(
    model: &M,
    coarse: &Stepper<M>,
    fine: &Stepper<M>,
    u0: F,
    tests: &[TestFunction],
    factor: f64,
) -> Result<CheckReport>
where
    M: CoefficientModel + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let run = |s: &Stepper<M>| -> Result<Vec<f64>> {
        let u = ScalarField::from_fn(*s.solver().grid(), &u0);
        let tr = all_steps(s, &u)?;
        weak_form_residuals(&tr, model, tests)
    };
    let rc = run(coarse)?;
    let rf = run(fine)?;
    let mut worst = 0.0f64;
    let mut location = None;
    let mut rep_metrics = Vec::new();
    for (k, (c, f)) in rc.iter().zip(&rf).enumerate() {
        let ratio = if c.abs() == 0.0 { 0.0 } else { f.abs() / c.abs() };
        rep_metrics.push((format!("coarse_{k}"), *c));
        rep_metrics.push((format!("fine_{k}"), *f));
        if ratio > worst {
            worst = ratio;
            location = Some(Location { step: k, t: coarse.config().t_final });
        }
    }
    let mut rep = CheckReport::new(
        "weak_form_refinement",
        worst,
        1.0 / factor,
        location,
        format!("|residual(mu/2, h/2)| / |residual(mu, h)|, required <= 1/{factor}"),
    );
    for (k, v) in rep_metrics {
        rep = rep.metric(&k, v);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_derivatives_match_differences() {
        let phi = TestFunction { center: [0.2, -0.1], radius: 1.3, profile: TimeProfile::Cosine };
        let (t, x, hz) = (0.3, [0.5, 0.4], 1.0);
        let (f, ft, g, lap) = phi.eval(t, &x, hz);
        let d = 1e-5;
        let fx = |x0: f64, x1: f64| phi.eval(t, &[x0, x1], hz).0;
        assert!(((phi.eval(t + d, &x, hz).0 - phi.eval(t - d, &x, hz).0) / (2.0 * d) - ft).abs() < 1e-8);
        assert!(((fx(x[0] + d, x[1]) - fx(x[0] - d, x[1])) / (2.0 * d) - g[0]).abs() < 1e-8);
        assert!(((fx(x[0], x[1] + d) - fx(x[0], x[1] - d)) / (2.0 * d) - g[1]).abs() < 1e-8);
        let d = 1e-4;
        let num = (fx(x[0] + d, x[1]) + fx(x[0] - d, x[1]) + fx(x[0], x[1] + d) + fx(x[0], x[1] - d) - 4.0 * f) / (d * d);
        assert!((num - lap).abs() < 1e-5);
    }

    #[test]
    fn bump_vanishes_at_horizon_and_outside() {
        let phi = TestFunction { center: [0.0, 0.0], radius: 1.0, profile: TimeProfile::Quadratic };
        assert_eq!(phi.eval(2.0, &[0.1], 2.0).0, 0.0);
        assert_eq!(phi.eval(0.5, &[1.5], 2.0), (0.0, 0.0, [0.0, 0.0], 0.0));
    }

    #[test]
    fn support_touching_boundary_is_rejected() {
        let g = Grid::new(1, 2.0, 16, Boundary::ZeroFlux).unwrap();
        let phi = TestFunction { center: [1.5, 0.0], radius: 0.5, profile: TimeProfile::Linear };
        assert!(matches!(phi.check_support(&g), Err(Error::TestFunctionNotSupported(_))));
    }

    #[test]
    fn band_limited_fields_are_bounded_and_reproducible() {
        let g = Grid::new(2, 3.0, 16, Boundary::Periodic).unwrap();
        let a = band_limited_field(&g, &mut substream(3, "x"), 1.0, 0.5);
        let b = band_limited_field(&g, &mut substream(3, "x"), 1.0, 0.5);
        assert_eq!(a, b);
        assert!(a.min() >= 0.5 - 1e-12 && a.max() <= 1.5 + 1e-12);
    }
}
