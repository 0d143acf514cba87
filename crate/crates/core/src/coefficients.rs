//! Coefficient models β(t,x,r) = a(t,x,r)·r and b*(t,x,r) = b(t,x,r)·r, their derivatives,
//! and sampled verification of the structural hypotheses on a compact box.
//!
//! Models implement [`CoefficientModel`]. Only β, b and the majorant h are mandatory; every
//! derivative has a centred finite-difference default (step `1e-5·(1+|·|)`), which the
//! builtin models override with closed forms. The hypothesis report compares the closed
//! forms against those finite differences, so a wrong derivative shows up as a violation
//! instead of silently feeding the Newton Jacobian.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::grid::MAX_DIM;
use crate::{Error, Result};

pub type Vector = [f64; MAX_DIM];

fn norm(v: &Vector) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

fn fd_step(z: f64) -> f64 {
    1e-5 * (1.0 + z.abs())
}

/// Centred-difference derivatives, used as trait defaults and as the independent check in
/// [`check_hypotheses`].
pub mod numeric {
    use super::*;

    pub fn beta_r<M: CoefficientModel + ?Sized>(m: &M, t: f64, x: &[f64], r: f64) -> f64 {
        let d = fd_step(r);
        (m.beta(t, x, r + d) - m.beta(t, x, r - d)) / (2.0 * d)
    }

    pub fn beta_t<M: CoefficientModel + ?Sized>(m: &M, t: f64, x: &[f64], r: f64) -> f64 {
        let d = fd_step(t);
        (m.beta(t + d, x, r) - m.beta(t - d, x, r)) / (2.0 * d)
    }

    pub fn beta_x<M: CoefficientModel + ?Sized>(m: &M, t: f64, x: &[f64], r: f64) -> Vector {
        let mut out = [0.0; MAX_DIM];
        let mut y = [0.0; MAX_DIM];
        y[..x.len()].copy_from_slice(x);
        for a in 0..x.len() {
            let d = fd_step(x[a]);
            y[a] = x[a] + d;
            let hi = m.beta(t, &y[..x.len()], r);
            y[a] = x[a] - d;
            let lo = m.beta(t, &y[..x.len()], r);
            y[a] = x[a];
            out[a] = (hi - lo) / (2.0 * d);
        }
        out
    }

    pub fn laplacian_x_beta<M: CoefficientModel + ?Sized>(m: &M, t: f64, x: &[f64], r: f64) -> f64 {
        let mut y = [0.0; MAX_DIM];
        y[..x.len()].copy_from_slice(x);
        let centre = m.beta(t, x, r);
        let mut acc = 0.0;
        for a in 0..x.len() {
            let d = 1e-4 * (1.0 + x[a].abs());
            y[a] = x[a] + d;
            let hi = m.beta(t, &y[..x.len()], r);
            y[a] = x[a] - d;
            let lo = m.beta(t, &y[..x.len()], r);
            y[a] = x[a];
            acc += (hi - 2.0 * centre + lo) / (d * d);
        }
        acc
    }

    pub fn b_star_r<M: CoefficientModel + ?Sized>(m: &M, t: f64, x: &[f64], r: f64) -> Vector {
        let d = fd_step(r);
        let hi = m.b_star(t, x, r + d);
        let lo = m.b_star(t, x, r - d);
        [(hi[0] - lo[0]) / (2.0 * d), (hi[1] - lo[1]) / (2.0 * d)]
    }

    pub fn div_x_b<M: CoefficientModel + ?Sized>(m: &M, t: f64, x: &[f64], r: f64) -> f64 {
        let mut y = [0.0; MAX_DIM];
        y[..x.len()].copy_from_slice(x);
        let mut acc = 0.0;
        for a in 0..x.len() {
            let d = fd_step(x[a]);
            y[a] = x[a] + d;
            let hi = m.b(t, &y[..x.len()], r)[a];
            y[a] = x[a] - d;
            let lo = m.b(t, &y[..x.len()], r)[a];
            y[a] = x[a];
            acc += (hi - lo) / (2.0 * d);
        }
        acc
    }
}

/// Coefficients of the equation. `x` has length `d`; vector outputs use the first `d`
/// components and leave the rest zero. Implementations must be pure.
pub trait CoefficientModel: Send + Sync {
    fn beta(&self, t: f64, x: &[f64], r: f64) -> f64;

    /// Drift b(t,x,r).
    fn b(&self, t: f64, x: &[f64], r: f64) -> Vector;

    /// Majorant h(x) ≥ 0 of the growth and time-regularity conditions.
    fn h_bound(&self, x: &[f64]) -> f64;

    fn beta_r(&self, t: f64, x: &[f64], r: f64) -> f64 {
        numeric::beta_r(self, t, x, r)
    }

    fn beta_t(&self, t: f64, x: &[f64], r: f64) -> f64 {
        numeric::beta_t(self, t, x, r)
    }

    fn beta_x(&self, t: f64, x: &[f64], r: f64) -> Vector {
        numeric::beta_x(self, t, x, r)
    }

    fn laplacian_x_beta(&self, t: f64, x: &[f64], r: f64) -> f64 {
        numeric::laplacian_x_beta(self, t, x, r)
    }

    fn b_star(&self, t: f64, x: &[f64], r: f64) -> Vector {
        let b = self.b(t, x, r);
        [b[0] * r, b[1] * r]
    }

    fn b_star_r(&self, t: f64, x: &[f64], r: f64) -> Vector {
        numeric::b_star_r(self, t, x, r)
    }

    /// div_x b at fixed r.
    fn div_x_b(&self, t: f64, x: &[f64], r: f64) -> f64 {
        numeric::div_x_b(self, t, x, r)
    }

    /// a = β/r, continuously extended by β_r at r = 0.
    fn a(&self, t: f64, x: &[f64], r: f64) -> f64 {
        if r == 0.0 {
            self.beta_r(t, x, 0.0)
        } else {
            self.beta(t, x, r) / r
        }
    }
}

/// Diffusion part, expressed through β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Diffusion {
    /// β = a·r.
    Linear { a: f64 },
    /// β = γ(t,x)·ln(1+|r|)·sign(r), γ(t,x) = γ₀(1 + κ·t·e^{−|x|²}). `t_max` bounds the
    /// horizon over which the majorant h is valid.
    Bosonic {
        gamma: f64,
        #[serde(default)]
        kappa: f64,
        #[serde(default = "default_t_max")]
        t_max: f64,
    },
    /// Piecewise linear β with slopes `slope_low` below `kink` and `slope_high` above. β_r
    /// jumps at the kink; meant for exercising the hypothesis checks.
    Piecewise { slope_low: f64, slope_high: f64, kink: f64 },
}

fn default_t_max() -> f64 {
    1.0
}

/// Drift part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Drift {
    None,
    /// b ≡ c, i.e. b* = c·r. Missing components are zero.
    Constant { c: Vec<f64> },
    /// b_j = c·tanh(x_j).
    Tanh { c: f64 },
    /// b = c / (1 + k|r|): density-dependent drift that saturates at high density.
    Saturating { c: Vec<f64>, k: f64 },
}

/// Builtin composable model: one diffusion part plus one drift part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinModel {
    pub diffusion: Diffusion,
    #[serde(default = "no_drift")]
    pub drift: Drift,
}

fn no_drift() -> Drift {
    Drift::None
}

fn vec2(c: &[f64]) -> Vector {
    [c.first().copied().unwrap_or(0.0), c.get(1).copied().unwrap_or(0.0)]
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn signed_log1p(r: f64) -> f64 {
    r.abs().ln_1p() * r.signum()
}

impl BuiltinModel {
    pub fn new(diffusion: Diffusion, drift: Drift) -> Result<Self> {
        let m = Self { diffusion, drift };
        m.validate()?;
        Ok(m)
    }

    /// β = a·r, b ≡ 0.
    pub fn heat(a: f64) -> Self {
        Self { diffusion: Diffusion::Linear { a }, drift: Drift::None }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidConfig(s));
        match &self.diffusion {
            Diffusion::Linear { a } if !a.is_finite() || *a < 0.0 => {
                return bad(format!("linear diffusion a = {a} must be finite and nonnegative"))
            }
            Diffusion::Bosonic { gamma, kappa, t_max }
                if !(*gamma > 0.0 && gamma.is_finite() && *kappa >= 0.0 && kappa.is_finite() && *t_max >= 0.0) =>
            {
                return bad(format!("bosonic parameters gamma={gamma}, kappa={kappa}, t_max={t_max} invalid"))
            }
            Diffusion::Piecewise { slope_low, slope_high, kink }
                if !(slope_low.is_finite() && slope_high.is_finite() && *kink > 0.0 && kink.is_finite()) =>
            {
                return bad(format!("piecewise model needs finite slopes and kink > 0 (got {kink})"))
            }
            _ => {}
        }
        match &self.drift {
            Drift::Constant { c } | Drift::Saturating { c, .. } if c.is_empty() || c.len() > MAX_DIM => {
                return bad(format!("drift vector must have 1 or 2 components, got {}", c.len()))
            }
            Drift::Saturating { k, .. } if !(*k >= 0.0 && k.is_finite()) => {
                return bad(format!("saturating drift needs k >= 0, got {k}"))
            }
            _ => {}
        }
        Ok(())
    }

    fn gamma(&self, t: f64, x: &[f64]) -> Option<(f64, f64, f64)> {
        match self.diffusion {
            Diffusion::Bosonic { gamma, kappa, .. } => {
                let e = (-sq_norm(x)).exp();
                Some((gamma * (1.0 + kappa * t * e), gamma * kappa * e, e))
            }
            _ => None,
        }
    }
}

impl CoefficientModel for BuiltinModel {
    fn beta(&self, t: f64, x: &[f64], r: f64) -> f64 {
        match self.diffusion {
            Diffusion::Linear { a } => a * r,
            Diffusion::Bosonic { .. } => {
                let (g, _, _) = self.gamma(t, x).unwrap();
                g * signed_log1p(r)
            }
            Diffusion::Piecewise { slope_low, slope_high, kink } => {
                if r < kink {
                    slope_low * r
                } else {
                    slope_low * kink + slope_high * (r - kink)
                }
            }
        }
    }

    fn beta_r(&self, t: f64, x: &[f64], r: f64) -> f64 {
        match self.diffusion {
            Diffusion::Linear { a } => a,
            Diffusion::Bosonic { .. } => {
                let (g, _, _) = self.gamma(t, x).unwrap();
                g / (1.0 + r.abs())
            }
            Diffusion::Piecewise { slope_low, slope_high, kink } => {
                if r < kink {
                    slope_low
                } else {
                    slope_high
                }
            }
        }
    }

    fn beta_t(&self, t: f64, x: &[f64], r: f64) -> f64 {
        match self.gamma(t, x) {
            Some((_, gk_e, _)) => gk_e * signed_log1p(r),
            None => 0.0,
        }
    }

    fn beta_x(&self, t: f64, x: &[f64], r: f64) -> Vector {
        let mut out = [0.0; MAX_DIM];
        if let Some((_, gk_e, _)) = self.gamma(t, x) {
            let l = signed_log1p(r);
            for (o, xa) in out.iter_mut().zip(x) {
                *o = gk_e * t * (-2.0 * xa) * l;
            }
        }
        out
    }

    fn laplacian_x_beta(&self, t: f64, x: &[f64], r: f64) -> f64 {
        match self.gamma(t, x) {
            Some((_, gk_e, _)) => {
                gk_e * t * signed_log1p(r) * (4.0 * sq_norm(x) - 2.0 * x.len() as f64)
            }
            None => 0.0,
        }
    }

    fn b(&self, _t: f64, x: &[f64], r: f64) -> Vector {
        match &self.drift {
            Drift::None => [0.0; MAX_DIM],
            Drift::Constant { c } => vec2(c),
            Drift::Tanh { c } => {
                let mut out = [0.0; MAX_DIM];
                for (o, xa) in out.iter_mut().zip(x) {
                    *o = c * xa.tanh();
                }
                out
            }
            Drift::Saturating { c, k } => {
                let c = vec2(c);
                let s = 1.0 / (1.0 + k * r.abs());
                [c[0] * s, c[1] * s]
            }
        }
    }

    fn b_star_r(&self, t: f64, x: &[f64], r: f64) -> Vector {
        match &self.drift {
            Drift::Saturating { c, k } => {
                let c = vec2(c);
                let s = 1.0 / (1.0 + k * r.abs());
                [c[0] * s * s, c[1] * s * s]
            }
            _ => self.b(t, x, r),
        }
    }

    fn div_x_b(&self, _t: f64, x: &[f64], _r: f64) -> f64 {
        match &self.drift {
            Drift::Tanh { c } => x.iter().map(|xa| c / (xa.cosh() * xa.cosh())).sum(),
            _ => 0.0,
        }
    }

    fn h_bound(&self, x: &[f64]) -> f64 {
        let diffusion = match self.diffusion {
            Diffusion::Bosonic { gamma, kappa, t_max } => {
                let e = (-sq_norm(x)).exp();
                let rx = sq_norm(x).sqrt();
                gamma.max(1.0) * kappa * e * (1.0 + 2.0 * rx) * (1.0 + 2.0 * t_max)
            }
            _ => 0.0,
        };
        let drift = match &self.drift {
            Drift::None => 0.0,
            Drift::Constant { c } | Drift::Saturating { c, .. } => sq_norm(c).sqrt(),
            Drift::Tanh { c } => c.abs() * x.iter().map(|v| v.tanh() * v.tanh()).sum::<f64>().sqrt(),
        };
        diffusion + drift
    }
}

/// Every coefficient quantity at one sample point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub beta: f64,
    pub beta_r: f64,
    pub beta_x: Vector,
    pub beta_t: f64,
    pub b: Vector,
    pub b_star: Vector,
    pub b_star_r: Vector,
    pub a: f64,
    pub sigma: f64,
}

pub fn eval<M: CoefficientModel + ?Sized>(model: &M, t: f64, x: &[f64], r: f64) -> Result<Evaluation> {
    let a = model.a(t, x, r);
    let e = Evaluation {
        beta: model.beta(t, x, r),
        beta_r: model.beta_r(t, x, r),
        beta_x: model.beta_x(t, x, r),
        beta_t: model.beta_t(t, x, r),
        b: model.b(t, x, r),
        b_star: model.b_star(t, x, r),
        b_star_r: model.b_star_r(t, x, r),
        a,
        sigma: 0.0,
    };
    let scalars = [
        ("beta", e.beta),
        ("beta_r", e.beta_r),
        ("beta_t", e.beta_t),
        ("a", e.a),
        ("beta_x", e.beta_x[0] + e.beta_x[1]),
        ("b", e.b[0] + e.b[1]),
        ("b_star", e.b_star[0] + e.b_star[1]),
        ("b_star_r", e.b_star_r[0] + e.b_star_r[1]),
    ];
    for (what, v) in scalars {
        if !v.is_finite() {
            return Err(Error::NonFiniteCoefficient { what, t, r });
        }
    }
    if a < 0.0 {
        return Err(Error::NegativeDiffusion { a, t, r });
    }
    Ok(Evaluation { sigma: (2.0 * a).sqrt(), ..e })
}

/// Compact sampling box [0,T] × [−L,L]^d × [r_min, r_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub t_max: f64,
    pub half_width: f64,
    pub dim: usize,
    pub r_min: f64,
    pub r_max: f64,
}

impl SampleBox {
    fn validate(&self, samples: usize) -> Result<()> {
        let fail = |s: String| Err(Error::DegenerateBox(s));
        if samples < 2 {
            return fail(format!("{samples} samples per axis, need at least 2"));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return fail(format!("time range [0, {}] is empty", self.t_max));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return fail(format!("spatial half width {} must be positive", self.half_width));
        }
        if !(1..=MAX_DIM).contains(&self.dim) {
            return fail(format!("dimension {} not in {{1, 2}}", self.dim));
        }
        if !(self.r_max > self.r_min && self.r_min.is_finite() && self.r_max.is_finite()) {
            return fail(format!("r range [{}, {}] is empty", self.r_min, self.r_max));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, samples: usize) -> Vec<f64> {
        (0..samples)
            .map(|j| lo + (hi - lo) * j as f64 / (samples - 1) as f64)
            .collect()
    }

    fn positions(&self, samples: usize) -> Vec<Vector> {
        let xs = Self::axis(-self.half_width, self.half_width, samples);
        let mut out = Vec::new();
        if self.dim == 1 {
            for x in &xs {
                out.push([*x, 0.0]);
            }
        } else {
            for x0 in &xs {
                for x1 in &xs {
                    out.push([*x0, *x1]);
                }
            }
        }
        out
    }
}

/// Worst sampled violation of one inequality. `point` is `[t, x_1, .., x_d, r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub hypothesis: String,
    pub point: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub nu_hat: f64,
    pub sup_beta: f64,
    pub sup_beta_r: f64,
    pub sup_b: f64,
    pub sup_rb_r: f64,
    pub sup_b_star_r: f64,
    #[serde(with = "extended_float")]
    pub lambda_zero: f64,
    #[serde(with = "extended_float")]
    pub capital_lambda: f64,
    pub violations: Vec<Violation>,
}

impl HypothesisReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Serialises ±∞ as the strings `"inf"` / `"-inf"` (JSON has no infinity).
pub mod extended_float {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;
            fn expecting(&self, f: &mut core::fmt::Formatter) -> core::fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    _ => Err(E::custom("expected \"inf\" or \"-inf\"")),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// λ₀ = 2ν / |b*_r|²_∞, +∞ when b*_r vanishes.
pub fn lambda_zero(nu: f64, sup_b_star_r: f64) -> f64 {
    if sup_b_star_r == 0.0 {
        f64::INFINITY
    } else {
        2.0 * nu / (sup_b_star_r * sup_b_star_r)
    }
}

struct Recorder {
    worst: BTreeMap<&'static str, Violation>,
}

impl Recorder {
    /// Records `lhs ≤ rhs` failing beyond rounding.
    fn check(&mut self, id: &'static str, lhs: f64, rhs: f64, point: &dyn Fn() -> Vec<f64>) {
        let residual = lhs - rhs;
        let slack = 1e-12 * (1.0 + lhs.abs() + rhs.abs());
        if residual > slack || residual.is_nan() {
            let replace = match self.worst.get(id) {
                Some(v) => residual > v.residual,
                None => true,
            };
            if replace {
                self.worst.insert(id, Violation { hypothesis: id.to_string(), point: point(), residual });
            }
        }
    }
}

fn consistency_tol(closed: f64) -> f64 {
    1e-4 * (1.0 + closed.abs())
}

/// Samples the hypotheses on `bx` with `samples` points per axis (time, each space axis, r).
/// Violated inequalities are recorded with their worst residual, not returned as errors.
///
/// Checked: uniform monotonicity of β in r (ν), time regularity of β_r, β, β_x and b*, the
/// growth bounds |β_t| + |β_x| ≤ h|r| and |b*| ≤ h|r|, the Lipschitz bound
/// |b*(r) − b*(r̄)| ≤ h|r − r̄|, and agreement of every supplied derivative with centred
/// differences.
pub fn check_hypotheses<M: CoefficientModel + ?Sized>(
    model: &M,
    bx: &SampleBox,
    samples: usize,
) -> Result<HypothesisReport> {
    bx.validate(samples)?;
    let ts = SampleBox::axis(0.0, bx.t_max, samples);
    let rs = SampleBox::axis(bx.r_min, bx.r_max, samples);
    let xs = bx.positions(samples);
    let d = bx.dim;

    let mut rec = Recorder { worst: BTreeMap::new() };
    let mut nu_hat = f64::INFINITY;
    let (mut sup_beta, mut sup_beta_r, mut sup_b, mut sup_rb_r, mut sup_bsr) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);

    for x in &xs {
        let x = &x[..d];
        let h = model.h_bound(x);
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::NonFiniteCoefficient { what: "h_bound", t: 0.0, r: 0.0 });
        }
        for &t in &ts {
            let evals: Vec<Evaluation> = rs.iter().map(|&r| eval(model, t, x, r)).collect::<Result<_>>()?;
            for (i, (&r, e)) in rs.iter().zip(&evals).enumerate() {
                let pt = || {
                    let mut p = vec![t];
                    p.extend_from_slice(x);
                    p.push(r);
                    p
                };
                nu_hat = nu_hat.min(e.beta_r);
                sup_beta = sup_beta.max(e.beta.abs());
                sup_beta_r = sup_beta_r.max(e.beta_r.abs());
                sup_b = sup_b.max(norm(&e.b));
                sup_bsr = sup_bsr.max(norm(&e.b_star_r));
                let rb_r = [e.b_star_r[0] - e.b[0], e.b_star_r[1] - e.b[1]];
                sup_rb_r = sup_rb_r.max(norm(&rb_r));

                rec.check("H1.beta_growth", e.beta_t.abs() + norm(&e.beta_x), h * r.abs(), &pt);
                rec.check("H2.b_star_growth", norm(&e.b_star), h * r.abs(), &pt);

                let fd = numeric::beta_r(model, t, x, r);
                rec.check("C1.beta_r", (fd - e.beta_r).abs(), consistency_tol(e.beta_r), &pt);
                let fd = numeric::beta_t(model, t, x, r);
                rec.check("C1.beta_t", (fd - e.beta_t).abs(), consistency_tol(e.beta_t), &pt);
                let fd = numeric::beta_x(model, t, x, r);
                let diff = [fd[0] - e.beta_x[0], fd[1] - e.beta_x[1]];
                rec.check("C1.beta_x", norm(&diff), consistency_tol(norm(&e.beta_x)), &pt);
                let fd = numeric::b_star_r(model, t, x, r);
                let diff = [fd[0] - e.b_star_r[0], fd[1] - e.b_star_r[1]];
                rec.check("C1.b_star_r", norm(&diff), consistency_tol(norm(&e.b_star_r)), &pt);

                for (j, &rb) in rs.iter().enumerate().skip(i + 1) {
                    let eb = &evals[j];
                    let dr = r - rb;
                    nu_hat = nu_hat.min((e.beta - eb.beta) * dr / (dr * dr));
                    let db = [e.b_star[0] - eb.b_star[0], e.b_star[1] - eb.b_star[1]];
                    rec.check("H2.b_star_lipschitz", norm(&db), h * dr.abs(), &pt);
                }

                for &s in &ts {
                    if s == t {
                        continue;
                    }
                    let dt = (t - s).abs();
                    let es = eval(model, s, x, r)?;
                    rec.check("H1.beta_r_time", (e.beta_r - es.beta_r).abs(), h * dt * e.beta_r, &pt);
                    let dbx = [e.beta_x[0] - es.beta_x[0], e.beta_x[1] - es.beta_x[1]];
                    rec.check(
                        "H1.beta_time",
                        (e.beta - es.beta).abs() + norm(&dbx),
                        h * dt * (1.0 + r.abs()),
                        &pt,
                    );
                    let dbs = [e.b_star[0] - es.b_star[0], e.b_star[1] - es.b_star[1]];
                    rec.check("H2.b_star_time", norm(&dbs), h * dt * (1.0 + norm(&e.b_star)), &pt);
                }
            }
        }
    }

    if nu_hat <= 0.0 {
        rec.worst.insert(
            "H1.monotonicity",
            Violation { hypothesis: "H1.monotonicity".to_string(), point: Vec::new(), residual: -nu_hat },
        );
    }

    let capital = capital_lambda(model, bx, samples)?;
    Ok(HypothesisReport {
        nu_hat,
        sup_beta,
        sup_beta_r,
        sup_b,
        sup_rb_r,
        sup_b_star_r: sup_bsr,
        lambda_zero: lambda_zero(nu_hat, sup_bsr),
        capital_lambda: capital,
        violations: rec.worst.into_values().collect(),
    })
}

/// Λ(b,β) = sup |r·div_x b| + |Δ_x β| over the sampled box.
pub fn capital_lambda<M: CoefficientModel + ?Sized>(model: &M, bx: &SampleBox, samples: usize) -> Result<f64> {
    bx.validate(samples)?;
    let ts = SampleBox::axis(0.0, bx.t_max, samples);
    let rs = SampleBox::axis(bx.r_min, bx.r_max, samples);
    let mut sup = 0.0f64;
    for x in &bx.positions(samples) {
        let x = &x[..bx.dim];
        for &t in &ts {
            for &r in &rs {
                let v = (r * model.div_x_b(t, x, r)).abs() + model.laplacian_x_beta(t, x, r).abs();
                if !v.is_finite() {
                    return Err(Error::NonFiniteCoefficient { what: "capital_lambda", t, r });
                }
                sup = sup.max(v);
            }
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bosonic(gamma: f64) -> BuiltinModel {
        BuiltinModel::new(Diffusion::Bosonic { gamma, kappa: 0.0, t_max: 1.0 }, Drift::None).unwrap()
    }

    fn bx(r_min: f64, r_max: f64) -> SampleBox {
        SampleBox { t_max: 1.0, half_width: 2.0, dim: 1, r_min, r_max }
    }

    #[test]
    fn linear_model_evaluation() {
        let m = BuiltinModel::heat(1.0);
        let e = eval(&m, 0.3, &[0.5], 3.0).unwrap();
        assert_eq!(e.beta, 3.0);
        assert_eq!(e.beta_r, 1.0);
        assert_eq!(e.b_star, [0.0, 0.0]);
        assert!((e.sigma - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_density_gives_zero_fluxes() {
        let models = [
            bosonic(2.0),
            BuiltinModel::new(Diffusion::Linear { a: 0.5 }, Drift::Tanh { c: 1.0 }).unwrap(),
            BuiltinModel::new(
                Diffusion::Bosonic { gamma: 1.0, kappa: 2.0, t_max: 1.0 },
                Drift::Saturating { c: vec![1.0, -1.0], k: 2.0 },
            )
            .unwrap(),
        ];
        for m in &models {
            let e = eval(m, 0.4, &[0.3, -0.2], 0.0).unwrap();
            assert_eq!(e.beta, 0.0);
            assert_eq!(e.b_star, [0.0, 0.0]);
            assert_eq!(e.a, e.beta_r);
        }
    }

    #[test]
    fn bosonic_closed_form_at_one() {
        let m = bosonic(2.0);
        let e = eval(&m, 0.0, &[0.0], 1.0).unwrap();
        let ln2 = 2f64.ln();
        assert!((e.beta - 2.0 * ln2).abs() < 1e-15);
        assert!((e.beta_r - 1.0).abs() < 1e-15);
        assert!((e.a - 2.0 * ln2).abs() < 1e-15);
        // centred difference oracle for β_r
        let d = 1e-5;
        let fd = (m.beta(0.0, &[0.0], 1.0 + d) - m.beta(0.0, &[0.0], 1.0 - d)) / (2.0 * d);
        assert!((fd - e.beta_r).abs() < 1e-9);
    }

    #[test]
    fn negative_diffusion_is_an_error() {
        let m = BuiltinModel { diffusion: Diffusion::Linear { a: -1.0 }, drift: Drift::None };
        assert!(matches!(eval(&m, 0.0, &[0.0], 1.0), Err(Error::NegativeDiffusion { .. })));
        assert!(m.validate().is_err());
    }

    #[test]
    fn linear_hypotheses_are_clean() {
        let rep = check_hypotheses(&BuiltinModel::heat(1.0), &bx(-2.0, 2.0), 9).unwrap();
        assert!((rep.nu_hat - 1.0).abs() < 1e-14);
        assert_eq!(rep.lambda_zero, f64::INFINITY);
        assert_eq!(rep.capital_lambda, 0.0);
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
    }

    #[test]
    fn bosonic_nu_is_closed_form_infimum() {
        // inf of γ/(1+r) on [0, 10], attained at the sampled endpoint
        let m = bosonic(2.0);
        for s in [5, 9, 17] {
            let rep = check_hypotheses(&m, &bx(0.0, 10.0), s).unwrap();
            assert!((rep.nu_hat - 2.0 / 11.0).abs() < 1e-15);
            assert!(rep.violations.is_empty(), "{:?}", rep.violations);
        }
    }

    #[test]
    fn constant_drift_lambda_zero() {
        let c = 1.5;
        let m = BuiltinModel::new(Diffusion::Linear { a: 0.7 }, Drift::Constant { c: vec![c] }).unwrap();
        let rep = check_hypotheses(&m, &bx(-1.0, 1.0), 5).unwrap();
        assert!((rep.lambda_zero - 2.0 * rep.nu_hat / (c * c)).abs() < 1e-14);
        assert!((rep.sup_b_star_r - c).abs() < 1e-15);
        assert_eq!(rep.sup_rb_r, 0.0);
    }

    #[test]
    fn tanh_drift_capital_lambda() {
        let m = BuiltinModel::new(Diffusion::Linear { a: 1.0 }, Drift::Tanh { c: 1.0 }).unwrap();
        // sup at x = 0, r = 2: |sech²(0)·2| = 2; odd sample counts include x = 0
        let b = SampleBox { t_max: 0.5, half_width: 3.0, dim: 1, r_min: 0.0, r_max: 2.0 };
        let lam = capital_lambda(&m, &b, 9).unwrap();
        assert!((lam - 2.0).abs() < 1e-14);
        let rep = check_hypotheses(&m, &b, 9).unwrap();
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
    }

    #[test]
    fn homogeneous_model_has_zero_capital_lambda() {
        let m = BuiltinModel::new(Diffusion::Bosonic { gamma: 1.0, kappa: 0.0, t_max: 1.0 }, Drift::Constant { c: vec![0.3, 0.1] })
            .unwrap();
        let b = SampleBox { t_max: 1.0, half_width: 1.0, dim: 2, r_min: 0.0, r_max: 3.0 };
        assert_eq!(capital_lambda(&m, &b, 5).unwrap(), 0.0);
    }

    #[test]
    fn time_varying_model_satisfies_its_majorant() {
        let m = BuiltinModel::new(
            Diffusion::Bosonic { gamma: 1.5, kappa: 0.8, t_max: 1.0 },
            Drift::Saturating { c: vec![0.5], k: 1.0 },
        )
        .unwrap();
        let rep = check_hypotheses(&m, &SampleBox { t_max: 1.0, half_width: 3.0, dim: 1, r_min: -2.0, r_max: 4.0 }, 9)
            .unwrap();
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
        assert!(rep.capital_lambda > 0.0);
    }

    #[test]
    fn kink_on_a_sample_is_flagged() {
        let m = BuiltinModel::new(Diffusion::Piecewise { slope_low: 1.0, slope_high: 3.0, kink: 1.0 }, Drift::None).unwrap();
        let rep = check_hypotheses(&m, &bx(0.0, 2.0), 5).unwrap();
        assert!(rep.violations.iter().any(|v| v.hypothesis == "C1.beta_r"));
        assert!((rep.nu_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_segment_violates_monotonicity() {
        let m = BuiltinModel::new(Diffusion::Piecewise { slope_low: 1.0, slope_high: 0.0, kink: 0.5 }, Drift::None).unwrap();
        let rep = check_hypotheses(&m, &bx(0.0, 2.0), 5).unwrap();
        assert!(rep.nu_hat <= 0.0);
        assert!(rep.violations.iter().any(|v| v.hypothesis == "H1.monotonicity"));
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        let m = BuiltinModel::heat(1.0);
        assert!(matches!(check_hypotheses(&m, &bx(1.0, 1.0), 5), Err(Error::DegenerateBox(_))));
        assert!(matches!(check_hypotheses(&m, &bx(0.0, 1.0), 1), Err(Error::DegenerateBox(_))));
        let mut b = bx(0.0, 1.0);
        b.t_max = -1.0;
        assert!(matches!(check_hypotheses(&m, &b, 3), Err(Error::DegenerateBox(_))));
    }
}
