use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use fpk_core::coefficients::{check_hypotheses, BuiltinModel, HypothesisReport};
use fpk_core::grid::{field_norms, Boundary, Grid, ScalarField};
use fpk_core::invariants::{
    l1_contraction_check, linf_bound_check, mass_check, positivity_check, resolvent_lipschitz_check,
    weak_form_refinement, CheckReport, LipschitzSetup,
};
use fpk_core::particles::{simulate, SimMode};
use fpk_core::stepper::{ModelBounds, SolverConfig, Stepper, Trajectory};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CheckKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io;

pub struct Context {
    pub config: RunConfig,
    pub grid: Grid,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    /// Validates the config and echoes it, defaults expanded, into the output directory.
    pub fn new(mut config: RunConfig, out: Option<PathBuf>, seed: Option<u64>, quiet: bool) -> CliResult<Self> {
        if let Some(s) = seed {
            config.seed = s;
        }
        if let Some(o) = out {
            config.output_dir = o;
        }
        let grid = config.validate()?;
        let out = config.output_dir.clone();
        let echoed = toml::to_string(&config.expanded())?;
        io::atomic_write(&out.join("config.toml"), echoed.as_bytes())?;
        Ok(Self { config, grid, out, quiet })
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn model(&self) -> &BuiltinModel {
        &self.config.model
    }

    fn u0(&self) -> ScalarField {
        self.config.initial.field(self.grid)
    }

    fn hypotheses(&self) -> CliResult<HypothesisReport> {
        let c = &self.config;
        Ok(check_hypotheses(self.model(), &c.sample_box(), c.hypotheses.samples)?)
    }

    /// Hypothesis report plus a stepper; fails with StepTooLarge before any time stepping.
    fn stepper(&self, report: &HypothesisReport) -> CliResult<Stepper<'_, BuiltinModel>> {
        if !report.is_clean() {
            let ids: BTreeSet<&str> = report.violations.iter().map(|v| v.hypothesis.as_str()).collect();
            eprintln!("warning: sampled hypothesis violations: {}", ids.into_iter().collect::<Vec<_>>().join(", "));
        }
        let bounds = ModelBounds::from_report(report);
        Ok(Stepper::new(self.model(), self.config.solver.clone(), &self.grid, bounds)?)
    }

    fn solve_into(&self, stepper: &Stepper<'_, BuiltinModel>, u0: &ScalarField, dir: &std::path::Path) -> CliResult<Trajectory> {
        let binary = self.config.output.binary_snapshots;
        match stepper.solve_trajectory(u0) {
            Ok(tr) => {
                io::write_trajectory(dir, &tr, binary)?;
                Ok(tr)
            }
            Err(f) => {
                io::write_trajectory(dir, &f.partial, binary)?;
                Err(f.error.into())
            }
        }
    }
}

/// Exit status 0 iff no sampled violations.
pub fn cmd_check_hypotheses(ctx: &Context) -> CliResult<bool> {
    let rep = ctx.hypotheses()?;
    io::write_json(&ctx.out.join("hypotheses.json"), &rep)?;
    ctx.say(format!(
        "nu_hat = {}, lambda_zero = {}, Lambda = {}, violations = {}",
        rep.nu_hat,
        rep.lambda_zero,
        rep.capital_lambda,
        rep.violations.len()
    ));
    for v in &rep.violations {
        ctx.say(format!("  {} at {:?}: residual {}", v.hypothesis, v.point, v.residual));
    }
    Ok(rep.is_clean())
}

#[derive(Serialize)]
struct ContinuationRow {
    eps: f64,
    gap: Option<f64>,
    dir: String,
}

pub fn cmd_solve(ctx: &Context) -> CliResult<()> {
    let rep = ctx.hypotheses()?;
    io::write_json(&ctx.out.join("hypotheses.json"), &rep)?;
    let stepper = ctx.stepper(&rep)?;
    let u0 = ctx.u0();
    if ctx.config.output.continuation {
        let levels = stepper.epsilon_continuation(&u0)?;
        let mut rows = Vec::new();
        for (k, lvl) in levels.iter().enumerate() {
            let dir = format!("eps_{k}");
            io::write_trajectory(&ctx.out.join(&dir), &lvl.trajectory, ctx.config.output.binary_snapshots)?;
            ctx.say(format!("eps = {:e}: gap to next level {:?}", lvl.eps, lvl.gap));
            rows.push(ContinuationRow { eps: lvl.eps, gap: lvl.gap, dir });
        }
        io::write_json(&ctx.out.join("continuation.json"), &rows)?;
        return Ok(());
    }
    let tr = ctx.solve_into(&stepper, &u0, &ctx.out)?;
    let last = field_norms(tr.last());
    ctx.say(format!(
        "{} steps to t = {}: mass {} -> {}, linf {}, min {}",
        tr.diagnostics.len(),
        tr.final_time(),
        field_norms(tr.initial()).mass,
        last.mass,
        last.linf,
        tr.last().min()
    ));
    Ok(())
}

#[derive(Serialize)]
struct VerificationDocument {
    pass: bool,
    seed: u64,
    checks: Vec<CheckReport>,
    /// Reported, not asserted.
    measured: BTreeMap<String, f64>,
}

fn errored(check_id: &str, e: &CliError) -> CheckReport {
    CheckReport {
        check_id: check_id.into(),
        pass: false,
        worst_violation: f64::INFINITY,
        location: None,
        tolerance: 0.0,
        notes: format!("check aborted: {e}"),
        metrics: BTreeMap::new(),
    }
}

fn check_id(kind: CheckKind) -> &'static str {
    match kind {
        CheckKind::Positivity => "positivity",
        CheckKind::Mass => "mass",
        CheckKind::LinfBound => "linf_bound",
        CheckKind::L1Contraction => "l1_contraction",
        CheckKind::Lipschitz => "resolvent_lipschitz",
        CheckKind::WeakForm => "weak_form_refinement",
    }
}

/// Exit status nonzero iff an asserted check fails.
pub fn cmd_verify(ctx: &Context) -> CliResult<bool> {
    let kinds: BTreeSet<CheckKind> = ctx.config.verify.checks.iter().copied().collect();
    let mut doc = VerificationDocument { pass: true, seed: ctx.config.seed, checks: Vec::new(), measured: BTreeMap::new() };
    if kinds.is_empty() {
        io::write_json(&ctx.out.join("verification.json"), &doc)?;
        ctx.say("no checks configured");
        return Ok(true);
    }
    let rep = ctx.hypotheses()?;
    let stepper = ctx.stepper(&rep)?;
    let u0 = ctx.u0();
    let v = &ctx.config.verify;

    let needs_base = kinds.iter().any(|k| matches!(k, CheckKind::Positivity | CheckKind::Mass | CheckKind::LinfBound));
    let base = if needs_base { Some(stepper.solve_trajectory(&u0).map_err(|f| f.error)) } else { None };
    if let Some(Ok(tr)) = &base {
        doc.measured.insert("energy_constant".into(), tr.energy_constant());
    }

    let run = |kind: CheckKind| -> CliResult<Vec<CheckReport>> {
        let base = || -> CliResult<&Trajectory> {
            match base.as_ref().expect("base trajectory requested") {
                Ok(tr) => Ok(tr),
                Err(e) => Err(CliError::Core(e.clone())),
            }
        };
        Ok(match kind {
            CheckKind::Positivity => vec![positivity_check(base()?, v.positivity_tol)],
            CheckKind::Mass => {
                let [a, b] = mass_check(base()?, rep.sup_beta_r, v.mass_identity_tol, v.mass_total_tol);
                vec![a, b]
            }
            CheckKind::LinfBound => vec![linf_bound_check(base()?, rep.capital_lambda, v.linf_tol)],
            CheckKind::L1Contraction => {
                let shift = v.l1_shift;
                let profile = &ctx.config.initial;
                let u0_bar = ScalarField::from_fn(ctx.grid, |x| {
                    let mut y = [0.0; 2];
                    y[..x.len()].copy_from_slice(x);
                    y[0] -= shift;
                    profile.eval(&y[..x.len()])
                });
                vec![l1_contraction_check(&stepper, &u0, &u0_bar, v.l1_c_h)?]
            }
            CheckKind::Lipschitz => {
                let g = Grid::new(ctx.grid.dim(), ctx.grid.half_width(), ctx.grid.n(), Boundary::Periodic)?;
                let s = &ctx.config.solver;
                let setup = LipschitzSetup {
                    t: 0.0,
                    lambda: s.mu,
                    eps: s.eps,
                    lambda_zero: rep.lambda_zero,
                    flux: s.flux,
                    trials: v.lipschitz_trials,
                    seed: ctx.config.seed,
                    mean: v.lipschitz_mean,
                    amplitude: v.lipschitz_amplitude,
                };
                vec![resolvent_lipschitz_check(ctx.model(), &g, &setup)?]
            }
            CheckKind::WeakForm => {
                let fine_grid = Grid::new(ctx.grid.dim(), ctx.grid.half_width(), 2 * ctx.grid.n(), ctx.grid.boundary())?;
                let cfg = SolverConfig { mu: ctx.config.solver.mu / 2.0, ..ctx.config.solver.clone() };
                let fine = Stepper::new(ctx.model(), cfg, &fine_grid, *stepper.bounds())?;
                let tests = ctx.config.test_functions(&ctx.grid);
                let profile = &ctx.config.initial;
                vec![weak_form_refinement(ctx.model(), &stepper, &fine, |x| profile.eval(x), &tests, v.weak_form_factor)?]
            }
        })
    };

    let kinds: Vec<CheckKind> = kinds.into_iter().collect();
    let results: Vec<Vec<CheckReport>> = kinds
        .par_iter()
        .map(|&k| run(k).unwrap_or_else(|e| vec![errored(check_id(k), &e)]))
        .collect();
    doc.checks = results.into_iter().flatten().collect();
    doc.checks.sort_by(|a, b| a.check_id.cmp(&b.check_id));
    doc.pass = doc.checks.iter().all(|c| c.pass);
    for c in &doc.checks {
        ctx.say(format!(
            "{:<22} {}  worst {:e}  tol {:e}",
            c.check_id,
            if c.pass { "PASS" } else { "FAIL" },
            c.worst_violation,
            c.tolerance
        ));
    }
    io::write_json(&ctx.out.join("verification.json"), &doc)?;
    Ok(doc.pass)
}

pub fn cmd_particles(ctx: &Context) -> CliResult<()> {
    let c = &ctx.config;
    if c.particles.mode == SimMode::PdeDriven && c.pde_trajectory.is_none() && !c.co_run_pde {
        return Err(CliError::Config("pde-driven mode needs pde_trajectory or co_run_pde = true".into()));
    }
    let u0 = ctx.u0();
    let t_final = c.solver.t_final;
    let pde = if let Some(dir) = &c.pde_trajectory {
        let tr = io::read_trajectory(dir, ctx.grid, c.solver.eps)?;
        if tr.final_time() < t_final * (1.0 - 1e-12) {
            return Err(CliError::Config(format!(
                "PDE trajectory ends at t = {}, before solver.t_final = {t_final}",
                tr.final_time()
            )));
        }
        Some(tr)
    } else if c.co_run_pde {
        let rep = ctx.hypotheses()?;
        let stepper = ctx.stepper(&rep)?;
        Some(ctx.solve_into(&stepper, &u0, &ctx.out.join("pde"))?)
    } else {
        None
    };
    let sim = simulate(ctx.model(), &c.particles, &u0, t_final, pde.as_ref(), c.seed)?;
    let steps: Vec<usize> = (0..sim.marginals.len()).collect();
    let times: Vec<f64> = sim.marginals.iter().map(|m| m.t).collect();
    let fields: Vec<ScalarField> = sim.marginals.iter().map(|m| m.density.clone()).collect();
    io::write_snapshots(&ctx.out.join("marginals"), &steps, &times, &fields, c.output.binary_snapshots)?;
    io::atomic_write(&ctx.out.join("distances.csv"), &io::distances_csv(&sim.distances)?)?;
    io::atomic_write(&ctx.out.join("ensemble.bin"), &io::ensemble_bin(&sim.ensemble))?;
    match sim.distances.last() {
        Some((t, d)) => ctx.say(format!("{} particles, t = {t}: L1 distance to PDE {d}", sim.ensemble.len())),
        None => ctx.say(format!("{} particles, t = {}", sim.ensemble.len(), sim.ensemble.t)),
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchEntry {
    name: &'static str,
    repeats: usize,
    seconds_min: f64,
    seconds_mean: f64,
}

fn time<T>(name: &'static str, repeats: usize, mut f: impl FnMut() -> CliResult<T>) -> CliResult<BenchEntry> {
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        f()?;
        samples.push(t0.elapsed().as_secs_f64());
    }
    Ok(BenchEntry {
        name,
        repeats,
        seconds_min: samples.iter().copied().fold(f64::INFINITY, f64::min),
        seconds_mean: samples.iter().sum::<f64>() / repeats as f64,
    })
}

/// Sequential timings of the configured run's building blocks.
pub fn cmd_bench(ctx: &Context) -> CliResult<()> {
    let rep = ctx.hypotheses()?;
    let stepper = ctx.stepper(&rep)?;
    let u0 = ctx.u0();
    let mu = ctx.config.solver.mu;
    let mut entries = vec![
        time("check_hypotheses", 3, || ctx.hypotheses())?,
        time("implicit_step", 5, || Ok(stepper.implicit_step(mu, &u0)?))?,
        time("trajectory", 1, || stepper.solve_trajectory(&u0).map_err(|f| CliError::Core(f.error)))?,
    ];
    if ctx.config.particles.mode == SimMode::SelfConsistent {
        let c = &ctx.config;
        entries.push(time("particles", 1, || Ok(simulate(ctx.model(), &c.particles, &u0, c.solver.t_final, None, c.seed)?))?);
    }
    for e in &entries {
        ctx.say(format!("{:<18} min {:.4e} s  mean {:.4e} s  ({} runs)", e.name, e.seconds_min, e.seconds_mean, e.repeats));
    }
    io::write_json(&ctx.out.join("bench.json"), &entries)
}
