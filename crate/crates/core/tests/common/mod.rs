#![allow(dead_code)]

use std::f64::consts::PI;

use fpk_core::grid::Grid;

pub fn gaussian(x: &[f64], mean: f64, var: f64) -> f64 {
    let r2: f64 = x.iter().map(|c| (c - mean) * (c - mean)).sum();
    (-r2 / (2.0 * var)).exp() / (2.0 * PI * var).powf(x.len() as f64 / 2.0)
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// ((1+λε)I − λΔ) as a dense matrix, from the stencil definition.
pub fn linear_matrix(g: &Grid, lambda: f64, eps: f64) -> Vec<Vec<f64>> {
    let n = g.len();
    let h2 = g.spacing() * g.spacing();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0 + lambda * eps;
        for ax in 0..g.dim() {
            for j in [g.next(i, ax), g.prev(i, ax)].into_iter().flatten() {
                a[i][i] += lambda / h2;
                a[i][j] -= lambda / h2;
            }
        }
    }
    a
}

pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
