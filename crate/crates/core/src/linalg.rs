//! Linear solvers for the Newton systems of the resolvent solver.
//!
//! One-dimensional grids produce (cyclic) tridiagonal Jacobians, solved directly with
//! partial pivoting. Two-dimensional grids go through restarted GMRES with an ILU(0)
//! right preconditioner.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

use crate::sum::dot;
use crate::{Error, Result};

/// Gaussian elimination with partial pivoting for a tridiagonal system (LAPACK `gtsv`
/// scheme). `sub` and `sup` have length `n − 1`. The solution overwrites `rhs`.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    assert!(n >= 1 && sub.len() + 1 == n && sup.len() + 1 == n && rhs.len() == n);
    let mut dl = sub.to_vec();
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    let b = rhs;
    let singular = || Error::SolverDiverged { iterations: 0, residual: f64::INFINITY };
    for i in 0..n.saturating_sub(1) {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                return Err(singular());
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
            dl[i] = 0.0;
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                // dl[i] now holds the second superdiagonal entry of U
                dl[i] = du[i + 1];
                du[i + 1] = -fact * dl[i];
            } else {
                dl[i] = 0.0;
            }
            du[i] = temp;
            let tb = b[i];
            b[i] = b[i + 1];
            b[i + 1] = tb - fact * b[i + 1];
        }
    }
    if d[n - 1] == 0.0 {
        return Err(singular());
    }
    b[n - 1] /= d[n - 1];
    if n > 1 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - dl[i] * b[i + 2]) / d[i];
    }
    Ok(())
}

/// Tridiagonal system with corner entries `A[0][n−1] = top_right`, `A[n−1][0] = bottom_left`
/// (periodic lines), via Sherman–Morrison.
pub fn solve_cyclic_tridiagonal(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    top_right: f64,
    bottom_left: f64,
    rhs: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    assert!(n >= 3);
    if top_right == 0.0 && bottom_left == 0.0 {
        return solve_tridiagonal(sub, diag, sup, rhs);
    }
    let gamma = if diag[0] != 0.0 { -diag[0] } else { 1.0 };
    let mut d = diag.to_vec();
    d[0] -= gamma;
    d[n - 1] -= bottom_left * top_right / gamma;
    solve_tridiagonal(sub, &d, sup, rhs)?;
    let mut z = vec![0.0; n];
    z[0] = gamma;
    z[n - 1] = bottom_left;
    solve_tridiagonal(sub, &d, sup, &mut z)?;
    let fact = (rhs[0] + top_right * rhs[n - 1] / gamma) / (1.0 + z[0] + top_right * z[n - 1] / gamma);
    for (x, zi) in rhs.iter_mut().zip(&z) {
        *x -= fact * zi;
    }
    Ok(())
}

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let start = cols.len();
            for (c, v) in row {
                assert!(c < n, "column {c} out of range");
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }
}

/// Incomplete LU factorisation with zero fill-in.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag_pos = vec![usize::MAX; n];
        for (i, slot) in diag_pos.iter_mut().enumerate() {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[k] == i {
                    *slot = k;
                }
            }
            if *slot == usize::MAX {
                return Err(Error::SolverDiverged { iterations: 0, residual: f64::INFINITY });
            }
        }
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                marker[lu.cols[k]] = k;
            }
            for k in start..end {
                let col = lu.cols[k];
                if col >= i {
                    break;
                }
                let pivot = lu.vals[diag_pos[col]];
                if pivot == 0.0 {
                    return Err(Error::SolverDiverged { iterations: 0, residual: f64::INFINITY });
                }
                let factor = lu.vals[k] / pivot;
                lu.vals[k] = factor;
                for kk in diag_pos[col] + 1..lu.row_ptr[col + 1] {
                    let j = lu.cols[kk];
                    let pos = marker[j];
                    if pos != usize::MAX && pos >= start && pos < end {
                        lu.vals[pos] -= factor * lu.vals[kk];
                    }
                }
            }
            for k in start..end {
                marker[lu.cols[k]] = usize::MAX;
            }
        }
        Ok(Self { lu, diag_pos })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        let n = lu.n;
        for i in 0..n {
            let mut acc = r[i];
            for k in lu.row_ptr[i]..self.diag_pos[i] {
                acc -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = z[i];
            for k in self.diag_pos[i] + 1..lu.row_ptr[i + 1] {
                acc -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = acc / lu.vals[self.diag_pos[i]];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iterations: usize,
    pub rtol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { restart: 60, max_iterations: 5000, rtol: 1e-13 }
    }
}

/// Right-preconditioned restarted GMRES starting from `x = 0`. Returns the iteration count.
pub fn gmres(a: &CsrMatrix, b: &[f64], x: &mut [f64], opts: GmresOptions) -> Result<usize> {
    let n = a.n();
    let precond = Ilu0::new(a)?;
    x.iter_mut().for_each(|v| *v = 0.0);
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(0);
    }
    let target = opts.rtol * bnorm;
    let m = opts.restart.max(1);
    let mut total = 0;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    loop {
        a.mul_vec(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = dot(&r, &r).sqrt();
        if beta <= target {
            return Ok(total);
        }
        if total >= opts.max_iterations {
            return Err(Error::SolverDiverged { iterations: total, residual: beta / bnorm });
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for j in 0..m {
            let mut zj = vec![0.0; n];
            precond.apply(&v[j], &mut zj);
            a.mul_vec(&zj, &mut w);
            z.push(zj);
            for i in 0..=j {
                let hij = dot(&w, &v[i]);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= hij * vk;
                }
            }
            let wn = dot(&w, &w).sqrt();
            h[j + 1][j] = wn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if denom == 0.0 {
                k_used = j;
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = h[j + 1][j] / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            total += 1;
            k_used = j + 1;
            if g[j + 1].abs() <= target || wn == 0.0 || total >= opts.max_iterations {
                break;
            }
            v.push(w.iter().map(|wk| wk / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for (jj, yj) in y.iter().enumerate().skip(i + 1) {
                acc -= h[i][jj] * yj;
            }
            y[i] = acc / h[i][i];
        }
        for (yj, zj) in y.iter().zip(&z) {
            for (xk, zk) in x.iter_mut().zip(zj) {
                *xk += yj * zk;
            }
        }
        if k_used == 0 {
            return Err(Error::SolverDiverged { iterations: total, residual: beta / bnorm });
        }
    }
}
