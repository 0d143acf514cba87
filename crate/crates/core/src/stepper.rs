//! Implicit Euler in time: `(u_{i+1} − u_i)/μ + A_ε(t_{i+1})u_{i+1} = 0`.
//!
//! The time grid is uniform with step μ; when μ does not divide T the last step is shortened
//! to land on T. Coefficients are evaluated at the end of each step.

use alloc::boxed::Box;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::coefficients::{CoefficientModel, HypothesisReport};
use crate::grid::{field_norms, gradient, Grid, ScalarField};
use crate::resolvent::{check_step, FluxMode, ResolventProblem, ResolventSolver, SolveStats, Tolerances};
use crate::sum::{pairwise_sum, pairwise_sum_by};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Horizon T.
    pub t_final: f64,
    pub mu: f64,
    pub eps: f64,
    /// Strictly decreasing ε values for continuation runs.
    pub eps_schedule: Vec<f64>,
    pub flux: FluxMode,
    pub tolerances: Tolerances,
    /// Record every k-th step (first and last are always kept).
    pub snapshot_stride: usize,
    /// Clamp bound for iterates; `None` means Λ·T + ‖u₀‖_∞ + 10.
    pub r_max: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            mu: 1e-2,
            eps: 1e-4,
            eps_schedule: alloc::vec![1e-2, 1e-3, 1e-4],
            flux: FluxMode::Centered,
            tolerances: Tolerances::default(),
            snapshot_stride: 10,
            r_max: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: alloc::string::String| Err(Error::InvalidConfig(s));
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad(alloc::format!("t_final = {} must be finite and nonnegative", self.t_final));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(alloc::format!("mu = {} must be positive", self.mu));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(alloc::format!("eps = {} must be positive", self.eps));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be at least 1".into());
        }
        validate_schedule(&self.eps_schedule)
    }

    /// Number of steps covering [0, T].
    pub fn step_count(&self) -> usize {
        if self.t_final == 0.0 {
            return 0;
        }
        let q = self.t_final / self.mu;
        let k = (q - 1e-9 * q.max(1.0)).ceil();
        (k as usize).max(1)
    }

    /// End time of step `i` (0-based).
    pub fn step_end(&self, i: usize) -> f64 {
        if i + 1 >= self.step_count() {
            self.t_final
        } else {
            (i + 1) as f64 * self.mu
        }
    }
}

fn validate_schedule(s: &[f64]) -> Result<()> {
    if s.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidConfig("eps_schedule entries must be positive".into()));
    }
    if s.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidConfig("eps_schedule must be strictly decreasing".into()));
    }
    Ok(())
}

/// Model constants a run depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelBounds {
    pub nu_hat: f64,
    pub lambda_zero: f64,
    pub capital_lambda: f64,
}

impl ModelBounds {
    pub fn from_report(r: &HypothesisReport) -> Self {
        Self { nu_hat: r.nu_hat, lambda_zero: r.lambda_zero, capital_lambda: r.capital_lambda }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub i: usize,
    pub t: f64,
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub min: f64,
    /// Discrete H¹ seminorm of β(t, ·, u).
    pub h1_beta: f64,
    /// `l2(u_i)² + Σ_{j≤i} μ_j·h1(u_j)²`.
    pub energy: f64,
    pub mass_drift_predicted: f64,
    pub mass_drift_observed: f64,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Snapshot times, strictly increasing, aligned with `fields`.
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
    /// Step index (number of completed steps) of each snapshot.
    pub snapshot_steps: Vec<usize>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub eps: f64,
}

impl Trajectory {
    pub fn initial(&self) -> &ScalarField {
        &self.fields[0]
    }

    pub fn last(&self) -> &ScalarField {
        self.fields.last().expect("trajectory holds at least the initial field")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    /// Measured constant C in `energy_i ≤ C·l2(u₀)²`; 0 for zero data.
    pub fn energy_constant(&self) -> f64 {
        let l2 = field_norms(self.initial()).l2;
        if l2 == 0.0 {
            return 0.0;
        }
        self.diagnostics.iter().map(|d| d.energy).fold(l2 * l2, f64::max) / (l2 * l2)
    }
}

/// A step failed; `partial` holds everything computed before it.
#[derive(Debug, Clone, ThisError)]
#[error("{error}")]
pub struct StepFailure {
    pub error: Error,
    pub partial: Box<Trajectory>,
}

pub struct Stepper<'a, M: CoefficientModel + ?Sized> {
    model: &'a M,
    config: SolverConfig,
    bounds: ModelBounds,
    solver: ResolventSolver,
}

impl<'a, M: CoefficientModel + ?Sized> Stepper<'a, M> {
    /// Validates the config against the model bounds before any numeric work.
    pub fn new(model: &'a M, config: SolverConfig, grid: &Grid, bounds: ModelBounds) -> Result<Self> {
        config.validate()?;
        if !(bounds.nu_hat > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "model is not uniformly monotone on the sampled box (nu_hat = {})",
                bounds.nu_hat
            )));
        }
        check_step(config.mu, bounds.lambda_zero)?;
        Ok(Self { model, config, bounds, solver: ResolventSolver::new(grid) })
    }

    /// Same model, grid and bounds under a different config.
    pub fn with_config(&self, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        check_step(config.mu, self.bounds.lambda_zero)?;
        Ok(Self { model: self.model, config, bounds: self.bounds, solver: self.solver.clone() })
    }

    pub fn bounds(&self) -> &ModelBounds {
        &self.bounds
    }

    pub fn model(&self) -> &'a M {
        self.model
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn solver(&self) -> &ResolventSolver {
        &self.solver
    }

    fn r_max(&self, u0: &ScalarField) -> f64 {
        self.config.r_max.unwrap_or_else(|| {
            self.bounds.capital_lambda * self.config.t_final + field_norms(u0).linf + 10.0
        })
    }

    /// One step of size `mu` ending at `t_next`, with the given ε.
    pub fn implicit_step_with(
        &self,
        t_next: f64,
        mu: f64,
        eps: f64,
        u_prev: &ScalarField,
        r_max: f64,
    ) -> Result<(ScalarField, StepDiagnostics)> {
        let p = ResolventProblem {
            model: self.model,
            t: t_next,
            lambda: mu,
            eps,
            v: u_prev,
            lambda_zero: self.bounds.lambda_zero,
            flux: self.config.flux,
            tol: self.config.tolerances,
            r_max,
        };
        let (u, stats) = self.solver.solve(&p)?;
        let g = u.grid();
        let beta: Vec<f64> = u
            .values()
            .iter()
            .enumerate()
            .map(|(i, &r)| self.model.beta(t_next, &g.center(i)[..g.dim()], r))
            .collect();
        let beta_field = ScalarField::new(*g, beta)?;
        let predicted = -mu * eps * pairwise_sum(beta_field.values()) * g.cell_volume();
        let observed = pairwise_sum_by(u.len(), |i| u.values()[i] - u_prev.values()[i]) * g.cell_volume();
        let n = field_norms(&u);
        let diag = StepDiagnostics {
            i: 0,
            t: t_next,
            mass: n.mass,
            l1: n.l1,
            l2: n.l2,
            linf: n.linf,
            min: u.min(),
            h1_beta: gradient(&beta_field).inner(&gradient(&beta_field)).sqrt(),
            energy: 0.0,
            mass_drift_predicted: predicted,
            mass_drift_observed: observed,
            stats,
        };
        Ok((u, diag))
    }

    pub fn implicit_step(&self, t_next: f64, u_prev: &ScalarField) -> Result<(ScalarField, StepDiagnostics)> {
        self.implicit_step_with(t_next, self.config.mu, self.config.eps, u_prev, self.r_max(u_prev))
    }

    pub fn solve_trajectory(&self, u0: &ScalarField) -> core::result::Result<Trajectory, StepFailure> {
        self.run(u0, self.config.eps)
    }

    fn run(&self, u0: &ScalarField, eps: f64) -> core::result::Result<Trajectory, StepFailure> {
        let c = &self.config;
        let mut traj = Trajectory {
            times: alloc::vec![0.0],
            fields: alloc::vec![u0.clone()],
            snapshot_steps: alloc::vec![0],
            diagnostics: Vec::new(),
            eps,
        };
        let r_max = self.r_max(u0);
        let steps = c.step_count();
        let mut u = u0.clone();
        let mut t = 0.0;
        let mut dissipation = 0.0;
        for i in 0..steps {
            let t_next = c.step_end(i);
            let mu = t_next - t;
            let (next, mut d) = match self.implicit_step_with(t_next, mu, eps, &u, r_max) {
                Ok(r) => r,
                Err(e) => {
                    return Err(StepFailure {
                        error: Error::StepFailed { step: i, source: Box::new(e) },
                        partial: Box::new(traj),
                    })
                }
            };
            let grad = gradient(&next);
            dissipation += mu * grad.inner(&grad);
            d.i = i;
            d.energy = d.l2 * d.l2 + dissipation;
            traj.diagnostics.push(d);
            u = next;
            t = t_next;
            if (i + 1) % c.snapshot_stride == 0 || i + 1 == steps {
                traj.times.push(t);
                traj.fields.push(u.clone());
                traj.snapshot_steps.push(i + 1);
            }
        }
        Ok(traj)
    }

    /// ∏_{k=1}^{n} (I + (t/n)A_ε(kt/n))⁻¹ u₀, evaluated through the trajectory code path.
    pub fn exponential_formula(&self, u0: &ScalarField, t: f64, n: usize) -> Result<ScalarField> {
        if n == 0 {
            return Err(Error::InvalidConfig("exponential formula needs n >= 1".into()));
        }
        let config = SolverConfig { t_final: t, mu: t / n as f64, snapshot_stride: usize::MAX, ..self.config.clone() };
        let stepper = self.with_config(config)?;
        stepper.solve_trajectory(u0).map(|tr| tr.last().clone()).map_err(|f| f.error)
    }

    /// Runs one trajectory per ε of the schedule. Level k carries the gap to level k+1:
    /// the largest L² distance between the two runs over the shared snapshot times.
    pub fn epsilon_continuation(&self, u0: &ScalarField) -> Result<Vec<ContinuationLevel>> {
        validate_schedule(&self.config.eps_schedule)?;
        let mut levels: Vec<ContinuationLevel> = Vec::new();
        for &eps in &self.config.eps_schedule {
            let traj = self.run(u0, eps).map_err(|f| f.error)?;
            if let Some(prev) = levels.last_mut() {
                let gap = prev
                    .trajectory
                    .fields
                    .iter()
                    .zip(&traj.fields)
                    .map(|(a, b)| field_norms(&a.sub(b)).l2)
                    .fold(0.0, f64::max);
                prev.gap = Some(gap);
            }
            levels.push(ContinuationLevel { eps, trajectory: traj, gap: None });
        }
        Ok(levels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationLevel {
    pub eps: f64,
    pub trajectory: Trajectory,
    /// Gap to the next level, `None` for the last one.
    pub gap: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::BuiltinModel;
    use crate::grid::Boundary;

    fn unconstrained() -> ModelBounds {
        ModelBounds { nu_hat: 1.0, lambda_zero: f64::INFINITY, capital_lambda: 0.0 }
    }

    #[test]
    fn time_grid_lands_on_horizon() {
        let c = SolverConfig { t_final: 1.0, mu: 0.3, ..Default::default() };
        assert_eq!(c.step_count(), 4);
        assert!((c.step_end(2) - 0.9).abs() < 1e-15);
        assert_eq!(c.step_end(3), 1.0);
        let c = SolverConfig { t_final: 0.5, mu: 0.1, ..Default::default() };
        assert_eq!(c.step_count(), 5);
        assert_eq!(c.step_end(4), 0.5);
        let c = SolverConfig { t_final: 0.0, ..Default::default() };
        assert_eq!(c.step_count(), 0);
    }

    #[test]
    fn zero_horizon_gives_initial_field_only() {
        let g = Grid::new(1, 2.0, 16, Boundary::ZeroFlux).unwrap();
        let m = BuiltinModel::heat(1.0);
        let u0 = ScalarField::from_fn(g, |x| (-x[0] * x[0]).exp());
        let s = Stepper::new(&m, SolverConfig { t_final: 0.0, ..Default::default() }, &g, unconstrained()).unwrap();
        let tr = s.solve_trajectory(&u0).unwrap();
        assert_eq!(tr.fields, alloc::vec![u0]);
        assert!(tr.diagnostics.is_empty());
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let g = Grid::new(1, 2.0, 16, Boundary::Periodic).unwrap();
        let m = BuiltinModel::heat(1.0);
        let s = Stepper::new(&m, SolverConfig::default(), &g, unconstrained()).unwrap();
        let (u, d) = s.implicit_step(0.01, &ScalarField::zeros(g)).unwrap();
        assert!(u.values().iter().all(|v| *v == 0.0));
        assert_eq!(d.mass_drift_observed, 0.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let g = Grid::new(1, 2.0, 16, Boundary::Periodic).unwrap();
        let m = BuiltinModel::heat(1.0);
        let b = ModelBounds { lambda_zero: 0.01, ..unconstrained() };
        assert!(matches!(Stepper::new(&m, SolverConfig::default(), &g, b), Err(Error::StepTooLarge { .. })));
        let b = ModelBounds { nu_hat: 0.0, ..unconstrained() };
        assert!(Stepper::new(&m, SolverConfig::default(), &g, b).is_err());
        let c = SolverConfig { eps_schedule: alloc::vec![1e-3, 1e-2], ..Default::default() };
        assert!(Stepper::new(&m, c, &g, unconstrained()).is_err());
    }
}
