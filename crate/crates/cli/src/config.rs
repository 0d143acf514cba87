//! TOML run configuration.

use std::path::{Path, PathBuf};

use fpk_core::coefficients::{BuiltinModel, SampleBox};
use fpk_core::grid::{Boundary, Grid, ScalarField};
use fpk_core::invariants::{TestFunction, TimeProfile};
use fpk_core::particles::SdeConfig;
use fpk_core::stepper::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Directory of an earlier `solve` run to drive the particles in pde-driven mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde_trajectory: Option<PathBuf>,
    /// Run the PDE alongside `particles` when no `pde_trajectory` is given.
    #[serde(default = "yes")]
    pub co_run_pde: bool,
    pub model: BuiltinModel,
    pub grid: GridSpec,
    #[serde(default)]
    pub initial: InitialProfile,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub hypotheses: HypothesisSpec,
    #[serde(default)]
    pub particles: SdeConfig,
    #[serde(default)]
    pub verify: VerifySpec,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("fpk-out")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "one")]
    pub dim: usize,
    pub half_width: f64,
    pub n: usize,
    #[serde(default = "zero_flux")]
    pub boundary: Boundary,
}

fn one() -> usize {
    1
}

fn zero_flux() -> Boundary {
    Boundary::ZeroFlux
}

impl GridSpec {
    pub fn build(&self) -> CliResult<Grid> {
        Ok(Grid::new(self.dim, self.half_width, self.n, self.boundary)?)
    }
}

/// Initial datum u₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialProfile {
    /// `mass·N(center, σ²I)`.
    Gaussian {
        #[serde(default)]
        center: Vec<f64>,
        sigma: f64,
        #[serde(default = "unit")]
        mass: f64,
    },
    Constant { value: f64 },
    /// `value` on the cube `|x − center|_∞ < half_width`, zero elsewhere.
    Box {
        #[serde(default)]
        center: Vec<f64>,
        half_width: f64,
        value: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl Default for InitialProfile {
    fn default() -> Self {
        InitialProfile::Gaussian { center: vec![0.0], sigma: 1.0, mass: 1.0 }
    }
}

impl InitialProfile {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let c = |center: &[f64], k: usize| center.get(k).copied().unwrap_or(0.0);
        match self {
            InitialProfile::Gaussian { center, sigma, mass } => {
                let s2 = sigma * sigma;
                let r2: f64 = x.iter().enumerate().map(|(k, xk)| (xk - c(center, k)).powi(2)).sum();
                mass * (-r2 / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).powf(x.len() as f64 / 2.0)
            }
            InitialProfile::Constant { value } => *value,
            InitialProfile::Box { center, half_width, value } => {
                if x.iter().enumerate().all(|(k, xk)| (xk - c(center, k)).abs() < *half_width) {
                    *value
                } else {
                    0.0
                }
            }
        }
    }

    pub fn field(&self, grid: Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.eval(x))
    }

    fn validate(&self, grid: &Grid) -> CliResult<()> {
        let dim_ok = |center: &[f64]| center.len() <= grid.dim();
        match self {
            InitialProfile::Gaussian { center, sigma, mass } => {
                if !dim_ok(center) || !(*sigma > 0.0) || !mass.is_finite() {
                    return Err(CliError::Config("gaussian initial profile needs sigma > 0 and at most d center components".into()));
                }
                let inside = self.field(*grid).integral();
                if *mass > 0.0 && grid.boundary() == Boundary::ZeroFlux && inside < (1.0 - 1e-8) * mass {
                    return Err(CliError::Config(format!(
                        "initial mass inside the box is {inside}, below (1 - 1e-8) * {mass}; enlarge grid.half_width"
                    )));
                }
            }
            InitialProfile::Constant { value } if !value.is_finite() => {
                return Err(CliError::Config("constant initial value must be finite".into()));
            }
            InitialProfile::Box { center, half_width, value } => {
                if !dim_ok(center) || !(*half_width > 0.0) || !value.is_finite() {
                    return Err(CliError::Config("box initial profile needs half_width > 0 and at most d center components".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Also write little-endian binary snapshots next to the CSV ones.
    pub binary_snapshots: bool,
    /// `solve` runs the ε schedule instead of a single ε.
    pub continuation: bool,
}

/// Sampling box for the hypothesis checks. `samples` is per axis (t, each x_j, r), so the cost
/// grows like `samples^(d+3)`. Unset `t_max`/`half_width` follow the solver horizon and the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypothesisSpec {
    pub samples: usize,
    pub r_min: f64,
    pub r_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
}

impl Default for HypothesisSpec {
    fn default() -> Self {
        Self { samples: 21, r_min: 0.0, r_max: 10.0, t_max: None, half_width: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Positivity,
    Mass,
    LinfBound,
    L1Contraction,
    Lipschitz,
    WeakForm,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::Positivity,
        CheckKind::Mass,
        CheckKind::LinfBound,
        CheckKind::L1Contraction,
        CheckKind::Lipschitz,
        CheckKind::WeakForm,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub checks: Vec<CheckKind>,
    pub positivity_tol: f64,
    pub mass_identity_tol: f64,
    pub mass_total_tol: f64,
    pub linf_tol: f64,
    /// Mesh constant in the L¹ tolerance `1e-6 + c_h·h`.
    pub l1_c_h: f64,
    /// Shift along x₁ of the second initial datum in the L¹ contraction check.
    pub l1_shift: f64,
    pub lipschitz_trials: usize,
    pub lipschitz_mean: f64,
    pub lipschitz_amplitude: f64,
    /// Required residual reduction under (μ, h) → (μ/2, h/2).
    pub weak_form_factor: f64,
    /// Empty means three default bumps sized to the grid.
    pub test_functions: Vec<TestFunction>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            checks: CheckKind::ALL.to_vec(),
            positivity_tol: 1e-10,
            mass_identity_tol: 1e-10,
            mass_total_tol: 1e-8,
            linf_tol: 1e-6,
            l1_c_h: 5.0,
            l1_shift: 0.5,
            lipschitz_trials: 50,
            lipschitz_mean: 1.0,
            lipschitz_amplitude: 0.5,
            weak_form_factor: 1.6,
            test_functions: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|source| CliError::Parse { path: path.to_path_buf(), source })
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// All checks that need no numeric work beyond evaluating u₀ on the grid.
    pub fn validate(&self) -> CliResult<Grid> {
        self.model.validate()?;
        let grid = self.grid.build()?;
        self.solver.validate()?;
        self.particles.validate()?;
        self.initial.validate(&grid)?;
        let h = &self.hypotheses;
        if h.samples == 0 || !(h.r_max > h.r_min) {
            return Err(CliError::Config("hypotheses need samples >= 1 and r_max > r_min".into()));
        }
        let v = &self.verify;
        if !(v.weak_form_factor > 0.0) || v.lipschitz_trials == 0 || !(v.lipschitz_amplitude >= 0.0) {
            return Err(CliError::Config("verify needs weak_form_factor > 0, lipschitz_trials >= 1, lipschitz_amplitude >= 0".into()));
        }
        for phi in self.test_functions(&grid) {
            let r = phi.radius;
            if !(r > 0.0) || (0..grid.dim()).any(|k| phi.center[k].abs() + r >= grid.half_width()) {
                return Err(CliError::Config(format!("test function {phi:?} must have support strictly inside the box")));
            }
        }
        Ok(grid)
    }

    pub fn sample_box(&self) -> SampleBox {
        SampleBox {
            t_max: self.hypotheses.t_max.unwrap_or(self.solver.t_final),
            half_width: self.hypotheses.half_width.unwrap_or(self.grid.half_width),
            dim: self.grid.dim,
            r_min: self.hypotheses.r_min,
            r_max: self.hypotheses.r_max,
        }
    }

    pub fn test_functions(&self, grid: &Grid) -> Vec<TestFunction> {
        if !self.verify.test_functions.is_empty() {
            return self.verify.test_functions.clone();
        }
        let l = grid.half_width();
        let r = 0.3 * l;
        [(0.0, TimeProfile::Linear), (-l / 3.0, TimeProfile::Quadratic), (l / 3.0, TimeProfile::Cosine)]
            .into_iter()
            .map(|(c, profile)| TestFunction { center: [c, 0.0], radius: r, profile })
            .collect()
    }

    /// Copy with every defaulted or derived value written out, for the run record.
    pub fn expanded(&self) -> Self {
        let mut c = self.clone();
        let bx = self.sample_box();
        c.hypotheses.t_max = Some(bx.t_max);
        c.hypotheses.half_width = Some(bx.half_width);
        if let Ok(g) = self.grid.build() {
            c.verify.test_functions = self.test_functions(&g);
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [model]
        diffusion = { kind = "linear", a = 1.0 }

        [grid]
        half_width = 8.0
        n = 64
    "#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.grid.boundary, Boundary::ZeroFlux);
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.verify.checks, CheckKind::ALL.to_vec());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse(&format!("{MINIMAL}\nbogus = 1")).is_err());
        let nested = MINIMAL.replace("n = 64", "n = 64\nspacing = 0.1");
        assert!(RunConfig::parse(&nested).is_err());
        assert!(RunConfig::parse(&format!("{MINIMAL}\n[solver]\nmu2 = 0.1")).is_err());
    }

    #[test]
    fn expanded_config_round_trips() {
        let c = RunConfig::parse(MINIMAL).unwrap().expanded();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), c);
        assert_eq!(c.verify.test_functions.len(), 3);
    }

    #[test]
    fn mass_outside_box_is_rejected() {
        let c = RunConfig::parse(&format!("{MINIMAL}\n[initial]\nkind = \"gaussian\"\nsigma = 3.0")).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }
}
