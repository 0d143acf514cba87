//! Discrete function spaces on the truncated box [−L, L]^d.
//!
//! Fields live at cell centres `x_i = −L + (i + ½)h`, `h = 2L/n`. Fluxes live on faces: the
//! entry of a [`VectorField`] component at cell `c` is the flux through the face between `c`
//! and its successor along that axis. With [`Boundary::ZeroFlux`] the last face of every line
//! carries no flux (and neither does the implicit first one), so [`divergence`] and
//! [`laplacian`] telescope to an exact zero total in both boundary modes.
//!
//! The Helmholtz resolvent `(εI − Δ)⁻¹` is solved spectrally. Periodic grids diagonalise in
//! the discrete Fourier basis directly. Zero-flux grids are handled through the even
//! reflection of the data onto a periodic grid of twice the length, on which the periodic
//! stencil restricted to the original cells is exactly the zero-flux stencil.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::fft::{transform_nd, Complex, Fft};
use crate::sum::{pairwise_sum, pairwise_sum_by};
use crate::{Error, Result};

pub const MAX_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    ZeroFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    n: usize,
    boundary: Boundary,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, n: usize, boundary: Boundary) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if n < 4 {
            return Err(Error::InvalidGrid(format!("n = {n} < 4")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half width {half_width} must be positive")));
        }
        Ok(Self { dim, half_width, n, boundary })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Total number of cells, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// Cell-centre coordinate of index `i` along any axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    /// Row-major: the first axis varies slowest.
    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.n, idx % self.n],
        }
    }

    pub fn flat_index(&self, mi: [usize; MAX_DIM]) -> usize {
        match self.dim {
            1 => mi[0],
            _ => mi[0] * self.n + mi[1],
        }
    }

    /// Cell centre; components beyond `dim` are zero.
    pub fn center(&self, idx: usize) -> [f64; MAX_DIM] {
        let mi = self.multi_index(idx);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.coordinate(mi[a]);
        }
        x
    }

    /// Centre of the face between `idx` and its successor along `axis`.
    pub fn face_center(&self, idx: usize, axis: usize) -> [f64; MAX_DIM] {
        let mut x = self.center(idx);
        x[axis] += 0.5 * self.spacing();
        x
    }

    fn stride(&self, axis: usize) -> usize {
        if self.dim == 1 || axis == 1 {
            1
        } else {
            self.n
        }
    }

    /// Successor along `axis`, wrapping on periodic grids.
    pub fn next(&self, idx: usize, axis: usize) -> Option<usize> {
        let i = self.multi_index(idx)[axis];
        let s = self.stride(axis);
        if i + 1 < self.n {
            Some(idx + s)
        } else if self.boundary == Boundary::Periodic {
            Some(idx - (self.n - 1) * s)
        } else {
            None
        }
    }

    /// Predecessor along `axis`, wrapping on periodic grids.
    pub fn prev(&self, idx: usize, axis: usize) -> Option<usize> {
        let i = self.multi_index(idx)[axis];
        let s = self.stride(axis);
        if i > 0 {
            Some(idx - s)
        } else if self.boundary == Boundary::Periodic {
            Some(idx + (self.n - 1) * s)
        } else {
            None
        }
    }

    /// Whether the face between `idx` and its successor along `axis` can carry flux.
    pub fn face_is_open(&self, idx: usize, axis: usize) -> bool {
        self.next(idx, axis).is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::FieldMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteField(i));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f` at every cell centre. `f` receives a slice of length `dim`.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: Grid, f: F) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.center(i);
                f(&x[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| f(*v)).collect() }
    }

    /// `self − other`.
    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &ScalarField, f: F) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Self { grid: self.grid, values }
    }

    /// Σ u·h^d, the signed mass.
    pub fn integral(&self) -> f64 {
        pairwise_sum(&self.values) * self.grid.cell_volume()
    }

    /// Multilinear interpolation through the cell-centre values. Points outside the hull of
    /// the cell centres are clamped onto it.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        let mut lo = [0usize; MAX_DIM];
        let mut w = [0.0f64; MAX_DIM];
        for a in 0..g.dim() {
            let mut s = ((x[a] + g.half_width()) / h - 0.5).clamp(0.0, (g.n() - 1) as f64);
            // snap rounding noise so cell centres return stored values exactly
            if (s - s.round()).abs() < 1e-9 {
                s = s.round();
            }
            let i = (s.floor() as usize).min(g.n() - 2);
            lo[a] = i;
            w[a] = s - i as f64;
        }
        match g.dim() {
            1 => {
                let v = &self.values;
                let (i, t) = (lo[0], w[0]);
                if t == 0.0 {
                    v[i]
                } else if t == 1.0 {
                    v[i + 1]
                } else {
                    (1.0 - t) * v[i] + t * v[i + 1]
                }
            }
            _ => {
                let mut acc = 0.0;
                for c0 in 0..2 {
                    for c1 in 0..2 {
                        let wt = (if c0 == 0 { 1.0 - w[0] } else { w[0] })
                            * (if c1 == 0 { 1.0 - w[1] } else { w[1] });
                        if wt != 0.0 {
                            acc += wt * self.values[g.flat_index([lo[0] + c0, lo[1] + c1])];
                        }
                    }
                }
                acc
            }
        }
    }
}

/// Face-centred vector field, one component per axis (see the module docs for layout).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::FieldMismatch { expected: grid.dim(), got: components.len() });
        }
        for c in &components {
            if c.len() != grid.len() {
                return Err(Error::FieldMismatch { expected: grid.len(), got: c.len() });
            }
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteField(i));
            }
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, components: vec![vec![0.0; grid.len()]; grid.dim()] }
    }

    /// Samples `f(face_centre)` for every open face along every axis.
    pub fn from_fn<F: Fn(usize, &[f64]) -> f64>(grid: Grid, f: F) -> Self {
        let mut out = Self::zeros(grid);
        for a in 0..grid.dim() {
            for i in 0..grid.len() {
                if grid.face_is_open(i, a) {
                    let x = grid.face_center(i, a);
                    out.components[a][i] = f(a, &x[..grid.dim()]);
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.components[axis]
    }

    /// Σ over open faces of F·G·h^d.
    pub fn inner(&self, other: &VectorField) -> f64 {
        assert_eq!(self.grid, other.grid);
        let g = self.grid;
        let mut total = 0.0;
        for a in 0..g.dim() {
            let (f, o) = (&self.components[a], &other.components[a]);
            total += pairwise_sum_by(g.len(), |i| {
                if g.face_is_open(i, a) {
                    f[i] * o[i]
                } else {
                    0.0
                }
            });
        }
        total * g.cell_volume()
    }
}

/// Face gradient `(u[next] − u[c]) / h`; closed faces get zero.
pub fn gradient(u: &ScalarField) -> VectorField {
    let g = *u.grid();
    let h = g.spacing();
    let mut out = VectorField::zeros(g);
    for a in 0..g.dim() {
        let comp = &mut out.components[a];
        for (i, slot) in comp.iter_mut().enumerate() {
            if let Some(j) = g.next(i, a) {
                *slot = (u.values[j] - u.values[i]) / h;
            }
        }
    }
    out
}

/// Flux difference per cell, `Σ_a (F_a[c] − F_a[prev_a(c)]) / h`. Closed faces carry no flux.
pub fn divergence(f: &VectorField) -> ScalarField {
    let g = *f.grid();
    let mut out = vec![0.0; g.len()];
    divergence_into(&g, &f.components, &mut out);
    ScalarField::from_vec_unchecked(g, out)
}

pub(crate) fn divergence_into(g: &Grid, components: &[Vec<f64>], out: &mut [f64]) {
    let inv_h = 1.0 / g.spacing();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (a, comp) in components.iter().enumerate() {
        for (i, o) in out.iter_mut().enumerate() {
            let right = if g.face_is_open(i, a) { comp[i] } else { 0.0 };
            let left = match g.prev(i, a) {
                Some(p) => comp[p],
                None => 0.0,
            };
            *o += (right - left) * inv_h;
        }
    }
}

/// Standard second-order stencil, `divergence(gradient(u))`.
pub fn laplacian(u: &ScalarField) -> ScalarField {
    let g = *u.grid();
    let mut out = vec![0.0; g.len()];
    laplacian_into(&g, &u.values, &mut out);
    ScalarField::from_vec_unchecked(g, out)
}

pub(crate) fn laplacian_into(g: &Grid, u: &[f64], out: &mut [f64]) {
    let inv_h2 = 1.0 / (g.spacing() * g.spacing());
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for a in 0..g.dim() {
            if let Some(j) = g.next(i, a) {
                acc += u[j] - u[i];
            }
            if let Some(j) = g.prev(i, a) {
                acc += u[j] - u[i];
            }
        }
        *o = acc * inv_h2;
    }
}

/// Arithmetic face average of cell values.
pub fn face_average(u: &ScalarField) -> VectorField {
    let g = *u.grid();
    let mut out = VectorField::zeros(g);
    for a in 0..g.dim() {
        for i in 0..g.len() {
            if let Some(j) = g.next(i, a) {
                out.components[a][i] = 0.5 * (u.values[i] + u.values[j]);
            }
        }
    }
    out
}

/// Symbol of −Δ_h on a periodic line of `m` cells: `(2/h²)(1 − cos(2πk/m))`.
pub fn periodic_symbol(k: usize, m: usize, h: f64) -> f64 {
    2.0 / (h * h) * (1.0 - (2.0 * PI * k as f64 / m as f64).cos())
}

/// Spectral solver for `(εI − Δ_h) y = f` on a fixed grid.
#[derive(Debug, Clone)]
pub struct HelmholtzSolver {
    grid: Grid,
    plans: Vec<Fft>,
    symbols: Vec<Vec<f64>>,
}

impl HelmholtzSolver {
    pub fn new(grid: &Grid) -> Self {
        let m = match grid.boundary() {
            Boundary::Periodic => grid.n(),
            Boundary::ZeroFlux => 2 * grid.n(),
        };
        let h = grid.spacing();
        let plans = (0..grid.dim()).map(|_| Fft::new(m)).collect();
        let symbols = (0..grid.dim())
            .map(|_| (0..m).map(|k| periodic_symbol(k, m, h)).collect())
            .collect();
        Self { grid: *grid, plans, symbols }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn source_index(&self, j: usize) -> usize {
        let n = self.grid.n();
        if j < n {
            j
        } else {
            2 * n - 1 - j
        }
    }

    /// Solves into `out`. `f` and `out` have the grid's cell count.
    pub fn solve_into(&self, eps: f64, f: &[f64], out: &mut [f64]) -> Result<()> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("Helmholtz shift eps = {eps} must be positive")));
        }
        let g = &self.grid;
        let m = self.plans[0].len();
        let mut data: Vec<Complex> = match g.dim() {
            1 => (0..m).map(|j| Complex::new(f[self.source_index(j)], 0.0)).collect(),
            _ => {
                let mut d = Vec::with_capacity(m * m);
                for j0 in 0..m {
                    let s0 = self.source_index(j0);
                    for j1 in 0..m {
                        let s1 = self.source_index(j1);
                        d.push(Complex::new(f[s0 * g.n() + s1], 0.0));
                    }
                }
                d
            }
        };
        let mut scratch = Vec::new();
        transform_nd(&self.plans, &mut data, &mut scratch, false);
        match g.dim() {
            1 => {
                for (k, z) in data.iter_mut().enumerate() {
                    let s = 1.0 / (eps + self.symbols[0][k]);
                    *z = Complex::new(z.re * s, z.im * s);
                }
            }
            _ => {
                for k0 in 0..m {
                    for k1 in 0..m {
                        let z = &mut data[k0 * m + k1];
                        let s = 1.0 / (eps + self.symbols[0][k0] + self.symbols[1][k1]);
                        *z = Complex::new(z.re * s, z.im * s);
                    }
                }
            }
        }
        transform_nd(&self.plans, &mut data, &mut scratch, true);
        let n = g.n();
        match g.dim() {
            1 => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = data[i].re;
                }
            }
            _ => {
                for i0 in 0..n {
                    for i1 in 0..n {
                        out[i0 * n + i1] = data[i0 * m + i1].re;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, eps: f64, f: &ScalarField) -> Result<ScalarField> {
        assert_eq!(f.grid(), &self.grid);
        let mut out = vec![0.0; self.grid.len()];
        self.solve_into(eps, f.values(), &mut out)?;
        Ok(ScalarField::from_vec_unchecked(self.grid, out))
    }

    /// ⟨u, v⟩₋₁,ε = Σ (εI − Δ)⁻¹u · v · h^d.
    pub fn inner(&self, eps: f64, u: &[f64], v: &[f64]) -> Result<f64> {
        let mut y = vec![0.0; u.len()];
        self.solve_into(eps, u, &mut y)?;
        Ok(crate::sum::dot(&y, v) * self.grid.cell_volume())
    }

    pub fn norm(&self, eps: f64, u: &[f64]) -> Result<f64> {
        Ok(self.inner(eps, u, u)?.max(0.0).sqrt())
    }
}

/// Returns `y` with `ε·y − Δ_h y = f`. The spectral solve is exact up to rounding, so the
/// iterative failure mode (`SolverDiverged`) cannot occur here.
pub fn helmholtz_solve(eps: f64, f: &ScalarField) -> Result<ScalarField> {
    HelmholtzSolver::new(f.grid()).solve(eps, f)
}

/// The ε-weighted H⁻¹ inner product.
pub fn h_neg1_inner(eps: f64, u: &ScalarField, v: &ScalarField) -> Result<f64> {
    assert_eq!(u.grid(), v.grid());
    HelmholtzSolver::new(u.grid()).inner(eps, u.values(), v.values())
}

pub fn h_neg1_norm(eps: f64, u: &ScalarField) -> Result<f64> {
    HelmholtzSolver::new(u.grid()).norm(eps, u.values())
}

/// Σ u·v·h^d.
pub fn l2_inner(u: &ScalarField, v: &ScalarField) -> f64 {
    crate::sum::dot(u.values(), v.values()) * u.grid().cell_volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldNorms {
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub h1_seminorm: f64,
}

/// Midpoint-rule norms; the H¹ seminorm uses face gradients.
pub fn field_norms(u: &ScalarField) -> FieldNorms {
    let g = u.grid();
    let vol = g.cell_volume();
    let v = u.values();
    let grad = gradient(u);
    FieldNorms {
        mass: pairwise_sum(v) * vol,
        l1: pairwise_sum_by(v.len(), |i| v[i].abs()) * vol,
        l2: (pairwise_sum_by(v.len(), |i| v[i] * v[i]) * vol).sqrt(),
        linf: v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        h1_seminorm: grad.inner(&grad).max(0.0).sqrt(),
    }
}

/// Σ|u|·h^d.
pub fn l1_norm(u: &ScalarField) -> f64 {
    let v = u.values();
    pairwise_sum_by(v.len(), |i| v[i].abs()) * u.grid().cell_volume()
}

pub fn l2_norm(u: &ScalarField) -> f64 {
    l2_inner(u, u).max(0.0).sqrt()
}
