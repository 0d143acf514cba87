//! Interacting-particle simulation of the McKean–Vlasov SDE
//! `dX = b(t, X, ρ(t,X)) dt + √(2a(t, X, ρ(t,X))) dW`, where ρ is either the PDE density
//! (pde-driven) or the ensemble's own density estimate (self-consistent, frozen per step).

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientModel;
use crate::grid::{field_norms, Grid, ScalarField, MAX_DIM};
use crate::rng::substream;
use crate::stepper::Trajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    #[default]
    PdeDriven,
    SelfConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensityEstimator {
    #[default]
    Histogram,
    Kernel { bandwidth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParticleBoundary {
    #[default]
    Reflecting,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeConfig {
    pub n_particles: usize,
    pub dt: f64,
    pub mode: SimMode,
    pub estimator: DensityEstimator,
    pub boundary: ParticleBoundary,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            n_particles: 10_000,
            dt: 1e-3,
            mode: SimMode::PdeDriven,
            estimator: DensityEstimator::Histogram,
            boundary: ParticleBoundary::Reflecting,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::InvalidConfig("n_particles must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("dt = {} must be positive", self.dt)));
        }
        if let DensityEstimator::Kernel { bandwidth } = self.estimator {
            if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                return Err(Error::InvalidConfig(alloc::format!("kernel bandwidth {bandwidth} must be positive")));
            }
        }
        Ok(())
    }
}

/// N particles in d dimensions, positions stored row-major (`N × d`).
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<f64>,
    pub rng_seed: u64,
    pub t: f64,
    rng: ChaCha8Rng,
}

impl PartialEq for ParticleEnsemble {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.positions == other.positions && self.rng_seed == other.rng_seed && self.t == other.t
    }
}

impl ParticleEnsemble {
    pub fn new(dim: usize, positions: Vec<f64>, rng_seed: u64, t: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) || positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "ensemble needs N >= 1 points of dimension 1 or 2, got {} values for d = {dim}",
                positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteField(i / dim));
        }
        Ok(Self { dim, positions, rng_seed, t, rng: substream(rng_seed, "particles") })
    }

    /// Stratified draw from a nonnegative density: ⌊N·p_c⌋ particles per cell plus a
    /// multinomial draw for the remainder, each uniform within its cell.
    pub fn sample(density: &ScalarField, n: usize, seed: u64) -> Result<Self> {
        let g = density.grid();
        if n == 0 {
            return Err(Error::InvalidConfig("n_particles must be at least 1".into()));
        }
        if density.min() < 0.0 {
            return Err(Error::InvalidConfig("initial density must be nonnegative".into()));
        }
        let total: f64 = density.values().iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidConfig("initial density has zero mass".into()));
        }
        let mut rng = substream(seed, "particles");
        let expected: Vec<f64> = density.values().iter().map(|v| v / total * n as f64).collect();
        let mut counts: Vec<usize> = expected.iter().map(|e| e.floor() as usize).collect();
        let placed: usize = counts.iter().sum();
        let rest: Vec<f64> = expected.iter().zip(&counts).map(|(e, c)| e - *c as f64).collect();
        let rest_total: f64 = rest.iter().sum();
        for _ in placed..n {
            let mut u = rng.random::<f64>() * rest_total;
            let mut pick = rest.len() - 1;
            for (i, w) in rest.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            counts[pick] += 1;
        }
        let h = g.spacing();
        let mut positions = Vec::with_capacity(n * g.dim());
        for (cell, &c) in counts.iter().enumerate() {
            let centre = g.center(cell);
            for _ in 0..c {
                for x in centre.iter().take(g.dim()) {
                    positions.push(x + h * (rng.random::<f64>() - 0.5));
                }
            }
        }
        Ok(Self { dim: g.dim(), positions, rng_seed: seed, t: 0.0, rng })
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean(&self) -> [f64; MAX_DIM] {
        let mut m = [0.0; MAX_DIM];
        for p in self.positions.chunks(self.dim) {
            for (a, x) in p.iter().enumerate() {
                m[a] += x;
            }
        }
        m.map(|v| v / self.len() as f64)
    }
}

/// Density estimate on `grid`. Histogram: counts per cell / (N·h^d), mass outside the box
/// dropped. Kernel: Gaussian kernel of the given bandwidth evaluated at cell centres,
/// truncated at 6 bandwidths.
pub fn estimate_density(ensemble: &ParticleEnsemble, grid: &Grid, estimator: DensityEstimator) -> ScalarField {
    let d = grid.dim();
    let n = grid.n();
    let h = grid.spacing();
    let l = grid.half_width();
    let inv_norm = 1.0 / (ensemble.len() as f64 * grid.cell_volume());
    let mut out = vec![0.0; grid.len()];
    let cell_of = |x: f64| -> Option<usize> {
        if !(x >= -l && x <= l) {
            return None;
        }
        Some((((x + l) / h) as usize).min(n - 1))
    };
    match estimator {
        DensityEstimator::Histogram => {
            for p in ensemble.positions.chunks(d) {
                let mut mi = [0usize; MAX_DIM];
                let mut inside = true;
                for a in 0..d {
                    match cell_of(p[a]) {
                        Some(i) => mi[a] = i,
                        None => inside = false,
                    }
                }
                if inside {
                    out[grid.flat_index(mi)] += 1.0;
                }
            }
            out.iter_mut().for_each(|v| *v *= inv_norm);
        }
        DensityEstimator::Kernel { bandwidth } => {
            let reach = (6.0 * bandwidth / h).ceil() as isize;
            let norm = 1.0 / (ensemble.len() as f64 * (2.0 * core::f64::consts::PI * bandwidth * bandwidth).powf(d as f64 / 2.0));
            for p in ensemble.positions.chunks(d) {
                let base: Vec<isize> = (0..d).map(|a| ((p[a] + l) / h).floor() as isize).collect();
                let range = |a: usize| (base[a] - reach).max(0)..=(base[a] + reach).min(n as isize - 1);
                let kernel = |a: usize, i: isize| {
                    let z = (grid.coordinate(i as usize) - p[a]) / bandwidth;
                    (-0.5 * z * z).exp()
                };
                if d == 1 {
                    for i in range(0) {
                        out[i as usize] += norm * kernel(0, i);
                    }
                } else {
                    for i in range(0) {
                        let k0 = kernel(0, i);
                        for j in range(1) {
                            out[grid.flat_index([i as usize, j as usize])] += norm * k0 * kernel(1, j);
                        }
                    }
                }
            }
        }
    }
    ScalarField::from_vec_unchecked(*grid, out)
}

/// Marginal snapshot of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub t: f64,
    pub density: ScalarField,
    pub mean: [f64; MAX_DIM],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub marginals: Vec<Marginal>,
    /// `(t, l1 distance between the ensemble histogram and the PDE field)`.
    pub distances: Vec<(f64, f64)>,
    pub ensemble: ParticleEnsemble,
}

fn reflect(x: f64, l: f64) -> f64 {
    let period = 4.0 * l;
    let mut y = (x + l) % period;
    if y < 0.0 {
        y += period;
    }
    if y > 2.0 * l {
        y = period - y;
    }
    y - l
}

/// PDE density at time `t`, linear in time between bracketing snapshots.
fn pde_at(traj: &Trajectory, t: f64) -> ScalarField {
    let k = traj.times.partition_point(|s| *s <= t);
    if k == 0 {
        return traj.fields[0].clone();
    }
    if k >= traj.times.len() {
        return traj.last().clone();
    }
    let (t0, t1) = (traj.times[k - 1], traj.times[k]);
    let w = (t - t0) / (t1 - t0);
    traj.fields[k - 1].zip_with(&traj.fields[k], |a, b| (1.0 - w) * a + w * b)
}

/// Runs the ensemble from its initial draw to `t_final`. Marginals are recorded at t = 0, at
/// every PDE snapshot time inside (0, t_final) when a trajectory is given, and at `t_final`;
/// steps are shortened to land on them.
pub fn simulate<M: CoefficientModel + ?Sized>(
    model: &M,
    cfg: &SdeConfig,
    u0_density: &ScalarField,
    t_final: f64,
    pde: Option<&Trajectory>,
    seed: u64,
) -> Result<Simulation> {
    cfg.validate()?;
    if cfg.mode == SimMode::PdeDriven && pde.is_none() {
        return Err(Error::InvalidConfig("pde-driven mode needs a PDE trajectory".into()));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidConfig(alloc::format!("t_final = {t_final} must be nonnegative")));
    }
    let grid = *u0_density.grid();
    let d = grid.dim();
    let l = grid.half_width();
    let mut ens = ParticleEnsemble::sample(u0_density, cfg.n_particles, seed)?;

    let mut stops: Vec<f64> = pde.map(|p| p.times.iter().copied().filter(|s| *s > 0.0 && *s < t_final).collect()).unwrap_or_default();
    stops.push(t_final);

    let mut sim = Simulation { marginals: Vec::new(), distances: Vec::new(), ensemble: ens.clone() };
    let record = |ens: &ParticleEnsemble, sim: &mut Simulation| {
        let density = estimate_density(ens, &grid, DensityEstimator::Histogram);
        if let Some(p) = pde {
            let reference = pde_at(p, ens.t);
            sim.distances.push((ens.t, field_norms(&density.sub(&reference)).l1));
        }
        sim.marginals.push(Marginal { t: ens.t, density, mean: ens.mean() });
    };
    record(&ens, &mut sim);

    let mut next_stop = 0;
    let mut x = [0.0; MAX_DIM];
    while next_stop < stops.len() && t_final > 0.0 {
        let target = stops[next_stop];
        let t = ens.t;
        let dt = if t + cfg.dt >= target * (1.0 - 1e-12) { target - t } else { cfg.dt };
        let rho = match cfg.mode {
            SimMode::PdeDriven => pde_at(pde.expect("checked above"), t),
            SimMode::SelfConsistent => estimate_density(&ens, &grid, cfg.estimator),
        };
        for i in 0..ens.len() {
            x[..d].copy_from_slice(ens.position(i));
            let r = rho.interpolate(&x[..d]);
            let b = model.b(t, &x[..d], r);
            let a = model.a(t, &x[..d], r);
            if a < 0.0 {
                return Err(Error::NegativeDiffusion { a, t, r });
            }
            let s = (2.0 * a * dt).sqrt();
            for k in 0..d {
                let xi: f64 = ens.rng.sample(StandardNormal);
                let mut y = x[k] + b[k] * dt + s * xi;
                if !(y >= -l && y <= l) {
                    match cfg.boundary {
                        ParticleBoundary::Reflecting => y = reflect(y, l),
                        ParticleBoundary::None => return Err(Error::ParticleEscaped { index: i, position: y }),
                    }
                }
                ens.positions[i * d + k] = y;
            }
        }
        ens.t = if dt == target - t { target } else { t + dt };
        if ens.t == target {
            record(&ens, &mut sim);
            next_stop += 1;
        }
    }
    sim.ensemble = ens;
    Ok(sim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    #[test]
    fn reflection_folds_into_the_box() {
        assert_eq!(reflect(0.5, 1.0), 0.5);
        assert!((reflect(1.25, 1.0) - 0.75).abs() < 1e-15);
        assert!((reflect(-1.25, 1.0) + 0.75).abs() < 1e-15);
        assert!((reflect(3.5, 1.0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_cell_histogram() {
        let g = Grid::new(1, 2.0, 8, Boundary::ZeroFlux).unwrap();
        let ens = ParticleEnsemble::new(1, vec![0.1; 50], 1, 0.0).unwrap();
        let rho = estimate_density(&ens, &g, DensityEstimator::Histogram);
        let cell = 4;
        assert_eq!(rho.values()[cell], 1.0 / g.spacing());
        assert_eq!(rho.values().iter().filter(|v| **v != 0.0).count(), 1);
        assert!((rho.integral() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn stratified_sampling_respects_cell_masses() {
        let g = Grid::new(2, 1.0, 4, Boundary::ZeroFlux).unwrap();
        let u0 = ScalarField::from_fn(g, |x| if x[0] > 0.0 { 3.0 } else { 1.0 });
        let ens = ParticleEnsemble::sample(&u0, 1000, 5).unwrap();
        assert_eq!(ens.len(), 1000);
        let right = ens.positions().chunks(2).filter(|p| p[0] > 0.0).count();
        assert!((749..=751).contains(&right), "{right}");
    }

    #[test]
    fn kernel_estimate_has_unit_mass() {
        let g = Grid::new(1, 5.0, 100, Boundary::ZeroFlux).unwrap();
        let ens = ParticleEnsemble::new(1, vec![-0.3, 0.0, 0.4], 1, 0.0).unwrap();
        let rho = estimate_density(&ens, &g, DensityEstimator::Kernel { bandwidth: 0.3 });
        assert!((rho.integral() - 1.0).abs() < 1e-6);
    }
}
