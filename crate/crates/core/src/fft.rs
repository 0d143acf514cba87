// Small complex FFT used by the spectral Helmholtz solver. Radix-2 for power-of-two
// lengths, direct DFT otherwise.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    fn scale(self, s: f64) -> Self {
        Self::new(self.re * s, self.im * s)
    }
}

impl Add for Complex {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Fft {
    len: usize,
    // e^{-2πik/len}, k < len
    twiddles: Vec<Complex>,
}

impl Fft {
    pub fn new(len: usize) -> Self {
        assert!(len > 0);
        let twiddles = (0..len)
            .map(|k| {
                let angle = -2.0 * PI * (k as f64) / (len as f64);
                Complex::new(angle.cos(), angle.sin())
            })
            .collect();
        Self { len, twiddles }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn forward(&self, data: &mut [Complex], scratch: &mut Vec<Complex>) {
        self.transform(data, scratch, false);
    }

    /// Unnormalised inverse; divide by `len` to invert `forward`.
    pub fn inverse(&self, data: &mut [Complex], scratch: &mut Vec<Complex>) {
        self.transform(data, scratch, true);
    }

    fn twiddle(&self, k: usize, inverse: bool) -> Complex {
        let w = self.twiddles[k % self.len];
        if inverse {
            Complex::new(w.re, -w.im)
        } else {
            w
        }
    }

    fn transform(&self, data: &mut [Complex], scratch: &mut Vec<Complex>, inverse: bool) {
        let n = self.len;
        debug_assert_eq!(data.len(), n);
        if n == 1 {
            return;
        }
        if n.is_power_of_two() {
            self.radix2(data, inverse);
        } else {
            scratch.clear();
            scratch.extend_from_slice(data);
            for (k, out) in data.iter_mut().enumerate() {
                let mut acc = Complex::default();
                for (j, x) in scratch.iter().enumerate() {
                    acc = acc + *x * self.twiddle((j * k) % n, inverse);
                }
                *out = acc;
            }
        }
    }

    fn radix2(&self, data: &mut [Complex], inverse: bool) {
        let n = self.len;
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                data.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let w = self.twiddle(k * stride, inverse);
                    let a = data[start + k];
                    let b = data[start + k + half] * w;
                    data[start + k] = a + b;
                    data[start + k + half] = a - b;
                }
            }
            size *= 2;
        }
    }
}

/// Separable transform over a row-major array of shape `shape` (one or two axes).
pub(crate) fn transform_nd(
    plans: &[Fft],
    data: &mut [Complex],
    scratch: &mut Vec<Complex>,
    inverse: bool,
) {
    match plans.len() {
        1 => {
            if inverse {
                plans[0].inverse(data, scratch);
            } else {
                plans[0].forward(data, scratch);
            }
        }
        2 => {
            let (rows, cols) = (plans[0].len(), plans[1].len());
            for row in data.chunks_mut(cols) {
                if inverse {
                    plans[1].inverse(row, scratch);
                } else {
                    plans[1].forward(row, scratch);
                }
            }
            let mut column = vec![Complex::default(); rows];
            for c in 0..cols {
                for r in 0..rows {
                    column[r] = data[r * cols + c];
                }
                if inverse {
                    plans[0].inverse(&mut column, scratch);
                } else {
                    plans[0].forward(&mut column, scratch);
                }
                for r in 0..rows {
                    data[r * cols + c] = column[r];
                }
            }
        }
        _ => unreachable!("grids are one- or two-dimensional"),
    }
    if inverse {
        let total: usize = plans.iter().map(Fft::len).product();
        let s = 1.0 / total as f64;
        for x in data.iter_mut() {
            *x = x.scale(s);
        }
    }
}
