//! Output files. Every file is written to a temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fpk_core::grid::{Grid, ScalarField};
use fpk_core::particles::ParticleEnsemble;
use fpk_core::stepper::{StepDiagnostics, Trajectory};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Denominator of the binary header's rational half-width.
pub const L_DEN: u64 = 1 << 20;

pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    atomic_write(path, s.as_bytes())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| CliError::io("<csv buffer>", e.into_error()))
}

/// `x1[,x2],u`, one row per cell in ascending lexicographic order of the centre.
pub fn snapshot_csv(u: &ScalarField) -> CliResult<Vec<u8>> {
    let g = u.grid();
    let d = g.dim();
    let header: &[&str] = if d == 1 { &["x1", "u"] } else { &["x1", "x2", "u"] };
    let mut order: Vec<usize> = (0..g.len()).collect();
    // row-major storage already has the last axis fastest; sort to be explicit about the order
    order.sort_by(|&a, &b| g.multi_index(a)[..d].cmp(&g.multi_index(b)[..d]));
    let rows = order.into_iter().map(|i| {
        let c = g.center(i);
        let mut r: Vec<String> = c[..d].iter().map(|x| x.to_string()).collect();
        r.push(u.values()[i].to_string());
        r
    });
    csv_bytes(header, rows)
}

pub fn read_snapshot_csv(path: &Path, grid: Grid) -> CliResult<ScalarField> {
    let bad = |reason: String| CliError::Snapshot { path: path.to_path_buf(), reason };
    let mut r = csv::Reader::from_path(path)?;
    let d = grid.dim();
    let tol = 1e-9 * grid.half_width().max(1.0);
    let mut values = vec![f64::NAN; grid.len()];
    let mut seen = 0usize;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(bad(format!("expected {} columns, got {}", d + 1, rec.len())));
        }
        let num: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
            .collect::<CliResult<_>>()?;
        let h = grid.spacing();
        let mut mi = [0usize; 2];
        for k in 0..d {
            let s = (num[k] + grid.half_width()) / h - 0.5;
            let i = s.round();
            if (s - i).abs() * h > tol || i < 0.0 || i >= grid.n() as f64 {
                return Err(bad(format!("coordinate {} is not a cell centre of the configured grid", num[k])));
            }
            mi[k] = i as usize;
        }
        values[grid.flat_index(mi)] = num[d];
        seen += 1;
    }
    if seen != grid.len() || values.iter().any(|v| v.is_nan()) {
        return Err(bad(format!("expected {} cells, got {seen}", grid.len())));
    }
    Ok(ScalarField::new(grid, values)?)
}

/// Header `d, n, L·2²⁰ (rounded), 2²⁰` as u64 LE, then the values as f64 LE, row-major.
pub fn snapshot_bin(u: &ScalarField) -> Vec<u8> {
    let g = u.grid();
    let mut out = Vec::with_capacity(32 + 8 * g.len());
    let l_num = (g.half_width() * L_DEN as f64).round() as u64;
    for v in [g.dim() as u64, g.n() as u64, l_num, L_DEN] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in u.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Header `N, d, seed` as u64 LE and `t` as f64 LE, then `N×d` positions as f64 LE.
pub fn ensemble_bin(e: &ParticleEnsemble) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 * e.positions().len());
    for v in [e.len() as u64, e.dim() as u64, e.rng_seed] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&e.t.to_le_bytes());
    for v in e.positions() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn diagnostics_csv(diag: &[StepDiagnostics]) -> CliResult<Vec<u8>> {
    let header = [
        "i",
        "t",
        "mass",
        "l1",
        "l2",
        "linf",
        "h1_beta",
        "newton_iters",
        "residual",
        "mass_drift_predicted",
        "mass_drift_observed",
    ];
    let rows = diag.iter().map(|d| {
        vec![
            d.i.to_string(),
            d.t.to_string(),
            d.mass.to_string(),
            d.l1.to_string(),
            d.l2.to_string(),
            d.linf.to_string(),
            d.h1_beta.to_string(),
            d.stats.iterations.to_string(),
            d.stats.final_residual_hneg1.to_string(),
            d.mass_drift_predicted.to_string(),
            d.mass_drift_observed.to_string(),
        ]
    });
    csv_bytes(&header, rows)
}

pub fn distances_csv(distances: &[(f64, f64)]) -> CliResult<Vec<u8>> {
    csv_bytes(&["t", "l1_distance"], distances.iter().map(|(t, d)| vec![t.to_string(), d.to_string()]))
}

fn snapshot_name(step: usize) -> String {
    format!("u_{step:06}")
}

/// Writes `dir/index.csv` (`step,t,file`) plus one CSV (and optionally binary) file per field.
pub fn write_snapshots(dir: &Path, steps: &[usize], times: &[f64], fields: &[ScalarField], binary: bool) -> CliResult<()> {
    let mut index = Vec::with_capacity(fields.len());
    for ((step, t), u) in steps.iter().zip(times).zip(fields) {
        let name = snapshot_name(*step);
        atomic_write(&dir.join(format!("{name}.csv")), &snapshot_csv(u)?)?;
        if binary {
            atomic_write(&dir.join(format!("{name}.bin")), &snapshot_bin(u))?;
        }
        index.push(vec![step.to_string(), t.to_string(), format!("{name}.csv")]);
    }
    atomic_write(&dir.join("index.csv"), &csv_bytes(&["step", "t", "file"], index)?)
}

pub fn write_trajectory(dir: &Path, traj: &Trajectory, binary: bool) -> CliResult<()> {
    write_snapshots(&dir.join("snapshots"), &traj.snapshot_steps, &traj.times, &traj.fields, binary)?;
    atomic_write(&dir.join("diagnostics.csv"), &diagnostics_csv(&traj.diagnostics)?)
}

/// Reads the snapshots of an earlier `solve` run; diagnostics are not restored.
pub fn read_trajectory(dir: &Path, grid: Grid, eps: f64) -> CliResult<Trajectory> {
    let snaps: PathBuf = dir.join("snapshots");
    let index = snaps.join("index.csv");
    if !index.exists() {
        return Err(CliError::Config(format!("no PDE trajectory at {}", dir.display())));
    }
    let mut r = csv::Reader::from_path(&index)?;
    let mut traj = Trajectory { times: Vec::new(), fields: Vec::new(), snapshot_steps: Vec::new(), diagnostics: Vec::new(), eps };
    for rec in r.records() {
        let rec = rec?;
        let bad = |reason: &str| CliError::Snapshot { path: index.clone(), reason: reason.into() };
        let step = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad step"))?;
        let t: f64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad time"))?;
        let file = rec.get(2).ok_or_else(|| bad("missing file"))?;
        if traj.times.last().is_some_and(|&p| t <= p) {
            return Err(bad("times must increase"));
        }
        traj.fields.push(read_snapshot_csv(&snaps.join(file), grid)?);
        traj.times.push(t);
        traj.snapshot_steps.push(step);
    }
    if traj.fields.is_empty() {
        return Err(CliError::Snapshot { path: index, reason: "no snapshots".into() });
    }
    Ok(traj)
}
