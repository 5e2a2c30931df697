//! Gamma factors, the smooth weights V and W of the approximate functional
//! equations, their residue constants and central L-values from eigenvalues.

use crate::arith::is_prime_unchecked;
use crate::error::{Error, Result};
use crate::specfun::{
    self, check_symmetry, log_gamma_unchecked, zeta_complex, ContourSpec, EULER_GAMMA,
};
use crate::sum::Pairwise;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// How the level enters the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelMode {
    /// Prime level q with the local factor (1 - q^{-1-2s}) and the dual term.
    Prime,
    /// Level 1: local factor and dual term switched off. A machinery test.
    LevelOneTest,
}

/// Weight, level and contour placement for the Mellin weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub k: u32,
    pub q: u64,
    pub mode: LevelMode,
    /// Abscissa of the inverse Mellin contour.
    pub sigma: f64,
    /// Contour half-height; `None` picks it from the integrand decay.
    pub height: Option<f64>,
}

impl WeightSpec {
    pub fn new(k: u32, q: u64) -> Result<Self> {
        if k < 4 || k % 2 == 1 {
            return Err(Error::Domain(format!("weight must be even and >= 4, got {k}")));
        }
        if q < 2 || !is_prime_unchecked(q) {
            return Err(Error::Domain(format!("level must be prime, got {q}")));
        }
        Ok(WeightSpec {
            k,
            q,
            mode: LevelMode::Prime,
            sigma: 1.0,
            height: None,
        })
    }

    pub fn level_one(k: u32) -> Result<Self> {
        if k < 4 || k % 2 == 1 {
            return Err(Error::Domain(format!("weight must be even and >= 4, got {k}")));
        }
        Ok(WeightSpec {
            k,
            q: 1,
            mode: LevelMode::LevelOneTest,
            sigma: 1.0,
            height: None,
        })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(0.25..=8.0).contains(&sigma) {
            return Err(Error::Domain(format!("contour abscissa must lie in [1/4, 8], got {sigma}")));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_height(mut self, height: f64) -> Result<Self> {
        if !(height > 0.0) {
            return Err(Error::Domain(format!("contour height must be positive, got {height}")));
        }
        self.height = Some(height);
        Ok(self)
    }

    /// i^k = (-1)^(k/2).
    pub fn root_sign(&self) -> f64 {
        if (self.k / 2) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn local_factor(&self) -> bool {
        self.mode == LevelMode::Prime
    }
}

/// log of pi^{-3s/2} G((s+1)/2) G((s+k-1)/2) G((s+k)/2).
pub fn gamma_box(s: Complex64, k: u32) -> Result<Complex64> {
    if !(s.re > 0.0) {
        return Err(Error::Domain(format!("gamma_box needs Re s > 0, got {s}")));
    }
    Ok(gamma_box_unchecked(s, k))
}

fn gamma_box_unchecked(s: Complex64, k: u32) -> Complex64 {
    let kf = k as f64;
    -1.5 * s * PI.ln()
        + log_gamma_unchecked((s + 1.0) * 0.5)
        + log_gamma_unchecked((s + kf - 1.0) * 0.5)
        + log_gamma_unchecked((s + kf) * 0.5)
}

/// log of (2 pi)^{-s} G(s + (k-1)/2).
pub fn gamma_f(s: Complex64, k: u32) -> Result<Complex64> {
    if !(s.re + (k as f64 - 1.0) / 2.0 > 0.0) {
        return Err(Error::Domain(format!("gamma_f outside its half-plane at {s}")));
    }
    Ok(gamma_f_unchecked(s, k))
}

fn gamma_f_unchecked(s: Complex64, k: u32) -> Complex64 {
    -s * (2.0 * PI).ln() + log_gamma_unchecked(s + (k as f64 - 1.0) / 2.0)
}

/// Which weight function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    V,
    W,
}

fn integrand_core(kind: WeightKind, spec: &WeightSpec, s: Complex64) -> Complex64 {
    let half = Complex64::new(0.5, 0.0);
    match kind {
        WeightKind::V => {
            let ratio = (gamma_box_unchecked(half + s, spec.k) - gamma_box_unchecked(half, spec.k)).exp();
            let z = zeta_complex(1.0 + 2.0 * s).expect("contour stays right of Re s = -1/4");
            let local = if spec.local_factor() {
                1.0 - (-(1.0 + 2.0 * s) * (spec.q as f64).ln()).exp()
            } else {
                Complex64::new(1.0, 0.0)
            };
            ratio * local * z
        }
        WeightKind::W => (gamma_f_unchecked(half + s, spec.k) - gamma_f_unchecked(half, spec.k)).exp(),
    }
}

/// The full Mellin integrand (without y^{-s}).
pub fn weight_integrand(kind: WeightKind, spec: &WeightSpec, s: Complex64) -> Complex64 {
    integrand_core(kind, spec, s) / s
}

// upper bound for |integrand| on Re s = sigma
fn integrand_majorant(kind: WeightKind, spec: &WeightSpec, s: Complex64) -> f64 {
    let half = Complex64::new(0.5, 0.0);
    let m = match kind {
        WeightKind::V => {
            let ratio = (gamma_box_unchecked(half + s, spec.k) - gamma_box_unchecked(half, spec.k)).exp();
            let z = specfun::zeta(1.0 + 2.0 * s.re).unwrap_or(f64::INFINITY);
            let local = if spec.local_factor() {
                1.0 + (spec.q as f64).powf(-1.0 - 2.0 * s.re)
            } else {
                1.0
            };
            ratio.norm() * z * local
        }
        WeightKind::W => {
            (gamma_f_unchecked(half + s, spec.k) - gamma_f_unchecked(half, spec.k))
                .exp()
                .norm()
        }
    };
    m / s.norm()
}

const HEIGHT_REL: f64 = 1e-16;
const HEIGHT_CAP: f64 = 20_000.0;

/// Smallest height (a multiple of 2) where the integrand has fallen below
/// 1e-16 of its size on the real axis.
pub fn adaptive_height(kind: WeightKind, spec: &WeightSpec, sigma: f64) -> f64 {
    let f = |t: f64| weight_integrand(kind, spec, Complex64::new(sigma, t)).norm();
    let reference = f(0.0);
    let mut t = 2.0;
    while t < HEIGHT_CAP && f(t) >= HEIGHT_REL * reference {
        t += 2.0;
    }
    t
}

/// One of the weights V or W, with quadrature nodes fixed for evaluation at
/// any y with |log y| up to a given span.
#[derive(Debug, Clone)]
pub struct MellinWeight {
    kind: WeightKind,
    spec: WeightSpec,
    sigma: f64,
    ln_span: f64,
    // (t, coefficient) with coefficient = weight * F(sigma + it) / (2 pi)
    nodes: Vec<(f64, Complex64)>,
    envelopes: Vec<(f64, f64)>,
}

const ENVELOPE_SIGMAS: [f64; 20] = [
    0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0, 96.0, 128.0, 192.0, 256.0, 384.0,
    512.0,
];

impl MellinWeight {
    pub fn new(kind: WeightKind, spec: &WeightSpec, ln_span: f64) -> Result<Self> {
        let sigma = spec.sigma;
        if !(sigma >= 0.25) {
            return Err(Error::Domain(format!("contour abscissa {sigma} below 1/4")));
        }
        let height = spec.height.unwrap_or_else(|| adaptive_height(kind, spec, sigma));
        // the local factor and the zeta values oscillate too
        let extra = match (kind, spec.local_factor()) {
            (WeightKind::V, true) => 2.0 * (spec.q as f64).ln() + 5.0,
            (WeightKind::V, false) => 5.0,
            (WeightKind::W, _) => 0.0,
        };
        // the pole at s = 0 sits sigma away from the contour
        let panel = (6.0 / (ln_span + extra).max(1e-3)).min(2.0).min(2.0 * sigma);
        let contour = ContourSpec::with_panel_height(sigma, height, panel, 16)?;
        let nodes = contour
            .nodes()
            .into_iter()
            .map(|(t, w)| {
                let s = Complex64::new(sigma, t);
                (t, weight_integrand(kind, spec, s) * (w / (2.0 * PI)))
            })
            .collect();
        let envelopes = ENVELOPE_SIGMAS
            .iter()
            .map(|&sg| (sg, Self::envelope_constant(kind, spec, sg)))
            .filter(|(_, c)| c.is_finite())
            .collect();
        Ok(MellinWeight {
            kind,
            spec: *spec,
            sigma,
            ln_span,
            nodes,
            envelopes,
        })
    }

    /// Nodes sufficient for y in [y_lo, y_hi].
    pub fn for_range(kind: WeightKind, spec: &WeightSpec, y_lo: f64, y_hi: f64) -> Result<Self> {
        if !(y_lo > 0.0 && y_hi >= y_lo) {
            return Err(Error::Domain(format!("bad y range [{y_lo}, {y_hi}]")));
        }
        Self::new(kind, spec, y_lo.ln().abs().max(y_hi.ln().abs()))
    }

    // (1/2 pi) * integral of |F(sg + it)| dt, so |weight(y)| <= I * y^{-sg}
    fn envelope_constant(kind: WeightKind, spec: &WeightSpec, sg: f64) -> f64 {
        let f = |t: f64| integrand_majorant(kind, spec, Complex64::new(sg, t));
        let reference = f(0.0);
        let mut height = 2.0;
        while height < HEIGHT_CAP && f(height) >= 1e-18 * reference {
            height += 2.0;
        }
        let contour = match ContourSpec::with_panel_height(sg, height, 2.0, 16) {
            Ok(c) => c,
            Err(_) => return f64::INFINITY,
        };
        let total: f64 = contour.nodes().iter().map(|&(t, w)| w * f(t)).sum();
        // margin for the truncated ends and the quadrature of |F|
        1.01 * total / (2.0 * PI)
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain(format!("weight needs y > 0, got {y}")));
        }
        let ln_y = y.ln();
        if ln_y.abs() > self.ln_span * (1.0 + 1e-9) + 1e-9 {
            return Err(Error::Range(format!(
                "|log y| = {} exceeds the span {} these nodes resolve",
                ln_y.abs(),
                self.ln_span
            )));
        }
        let mag = (-self.sigma * ln_y).exp();
        let mut acc = Pairwise::complex();
        let mut scale = 0.0;
        for &(t, c) in &self.nodes {
            let (sn, cs) = (-t * ln_y).sin_cos();
            let v = c * Complex64::new(cs, sn);
            scale += v.norm();
            acc.push(v);
        }
        check_symmetry(acc.total() * mag, scale * mag)
    }

    /// Certified |weight(y)| <= min over sigma of I(sigma) y^{-sigma}.
    pub fn envelope(&self, y: f64) -> f64 {
        let ln_y = y.ln();
        self.envelopes
            .iter()
            .map(|&(sg, c)| c * (-sg * ln_y).exp())
            .fold(f64::INFINITY, f64::min)
    }

    /// Bound for sum over n > n0 of n^alpha |weight(n / scale)|.
    pub fn tail_bound(&self, n0: f64, scale: f64, alpha: f64) -> f64 {
        self.tail_bound_pow(n0, scale, 1.0, alpha)
    }

    /// Bound for sum over n > n0 of n^alpha |weight(n^power / scale)|.
    pub fn tail_bound_pow(&self, n0: f64, scale: f64, power: f64, alpha: f64) -> f64 {
        let n0 = n0.max(1.0);
        self.envelopes
            .iter()
            .filter(|(sg, _)| power * sg > alpha + 1.0)
            .map(|&(sg, c)| {
                let e = power * sg - alpha - 1.0;
                c * (sg * scale.ln() - e * n0.ln()).exp() / e
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest integer cut N with tail_bound(N, scale, alpha) * factor <= tol.
    pub fn cutoff(&self, scale: f64, alpha: f64, factor: f64, tol: f64) -> Result<u64> {
        let mut n = 1u64;
        while self.tail_bound(n as f64, scale, alpha) * factor > tol {
            if n > 1u64 << 40 {
                return Err(Error::Capacity("weight truncation point beyond 2^40".into()));
            }
            n = (n as f64 * 1.05).ceil() as u64 + 1;
        }
        // refine downward
        let mut lo = ((n as f64) / 1.06) as u64;
        while lo < n && self.tail_bound(lo as f64, scale, alpha) * factor > tol {
            lo += 1;
        }
        Ok(lo.max(1))
    }
}

/// V(y) at a single point.
pub fn weight_v(y: f64, spec: &WeightSpec) -> Result<f64> {
    MellinWeight::new(WeightKind::V, spec, y.ln().abs())?.eval(y)
}

/// W(y) at a single point.
pub fn weight_w(y: f64, spec: &WeightSpec) -> Result<f64> {
    MellinWeight::new(WeightKind::W, spec, y.ln().abs())?.eval(y)
}

/// Constants from the poles of the weight integrands at s = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidueConstants {
    pub a_k: f64,
    pub b_k: f64,
    pub c_k: f64,
    #[serde(rename = "A_k")]
    pub big_a: f64,
    #[serde(rename = "B_k")]
    pub big_b: f64,
    /// d/ds log of the degree-3 gamma factor at 1/2.
    pub gamma_log_derivative: f64,
}

/// Central-difference derivative of log gamma_box at 1/2, with the two
/// points placed at 1/2 +- i*step so the difference suffers no cancellation.
pub fn gamma_box_log_derivative(k: u32, step: f64) -> f64 {
    let plus = gamma_box_unchecked(Complex64::new(0.5, step), k);
    let minus = gamma_box_unchecked(Complex64::new(0.5, -step), k);
    ((plus - minus) / Complex64::new(0.0, 2.0 * step)).re
}

pub fn residue_constants(spec: &WeightSpec) -> Result<ResidueConstants> {
    let g = gamma_box_log_derivative(spec.k, 1e-5);
    let g_check = gamma_box_log_derivative(spec.k, 1e-6);
    if (g - g_check).abs() > 1e-7 {
        return Err(Error::Mismatch(format!(
            "finite-difference derivative unstable: {g} vs {g_check}"
        )));
    }
    // Laurent expansion of G(s)(1 - q^{-1-2s}) zeta(1+2s) y^{-s}/s at s = 0
    let (local0, local1) = if spec.local_factor() {
        let q = spec.q as f64;
        (1.0 - 1.0 / q, 2.0 * q.ln() / q)
    } else {
        (1.0, 0.0)
    };
    let a_k = -0.5 * local0;
    let b_k = local0 * (0.5 * g + EULER_GAMMA) + 0.5 * local1;
    // simple pole of y^{-s}/s with the ratio equal to 1 at s = 0
    let c_k = 1.0;
    let z = specfun::zeta(1.5)?;
    let dz = specfun::zeta_deriv(1.5)?;
    let big_a = -a_k * c_k * z;
    let big_b = c_k * (b_k * z - a_k * dz);
    Ok(ResidueConstants {
        a_k,
        b_k,
        c_k,
        big_a,
        big_b,
        gamma_log_derivative: g,
    })
}

/// Truncation and accuracy knobs for the L-value sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfeOptions {
    /// Target for the certified truncation tail.
    pub tol: f64,
    /// Multiplier applied to the cutoff (2.0 doubles every truncation).
    pub cut_scale: f64,
}

impl Default for AfeOptions {
    fn default() -> Self {
        AfeOptions {
            tol: 1e-12,
            cut_scale: 1.0,
        }
    }
}

/// An L-value with its truncation bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfeValue {
    pub value: f64,
    pub tail_bound: f64,
    pub terms: u64,
}

// d(n) <= sqrt(3n)
const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Eigenvalue count needed by [`afe_l_f`].
pub fn afe_l_f_required(spec: &WeightSpec, opts: &AfeOptions) -> Result<u64> {
    let w = MellinWeight::new(WeightKind::W, spec, 1.0)?;
    let dual = if spec.local_factor() { 1.0 + 2.0 * (spec.q as f64).sqrt() } else { 1.0 };
    let cut = w.cutoff((spec.q as f64).sqrt(), 0.0, SQRT3 * dual, opts.tol)?;
    Ok(((cut as f64) * opts.cut_scale).ceil() as u64)
}

/// L(1/2, f) from Hecke eigenvalues `lambdas[n-1] = lambda(n)`.
pub fn afe_l_f(lambdas: &[f64], spec: &WeightSpec, opts: &AfeOptions) -> Result<AfeValue> {
    let m_cut = afe_l_f_required(spec, opts)?;
    if (lambdas.len() as u64) < m_cut {
        return Err(Error::Coverage {
            required: m_cut as usize,
            available: lambdas.len(),
        });
    }
    let sq = (spec.q as f64).sqrt();
    let w = MellinWeight::for_range(WeightKind::W, spec, 1.0 / sq, m_cut as f64 / sq)?;
    let mut acc = Pairwise::real();
    for m in 1..=m_cut {
        let wm = w.eval(m as f64 / sq)?;
        acc.push(lambdas[(m - 1) as usize] / (m as f64).sqrt() * wm);
    }
    let first = acc.total();
    let (value, dual) = if spec.local_factor() {
        let lq = *lambdas.get((spec.q - 1) as usize).ok_or(Error::Coverage {
            required: spec.q as usize,
            available: lambdas.len(),
        })?;
        let d = spec.root_sign() * sq * lq;
        (first * (1.0 + d), 1.0 + d.abs())
    } else {
        (first, 1.0)
    };
    let tail = SQRT3 * dual * w.tail_bound(m_cut as f64, sq, 0.0);
    Ok(AfeValue {
        value,
        tail_bound: tail,
        terms: m_cut,
    })
}

/// Largest n for which [`afe_l_sym2`] reads lambda(n^2).
pub fn afe_l_sym2_required(spec: &WeightSpec, opts: &AfeOptions) -> Result<u64> {
    let v = MellinWeight::new(WeightKind::V, spec, 1.0)?;
    let cut = v.cutoff(spec.q as f64, 0.5, 2.0 * SQRT3, opts.tol)?;
    Ok(((cut as f64) * opts.cut_scale).ceil() as u64)
}

/// L(1/2, Sym^2 f) = 2 sum lambda(n^2) n^{-1/2} V(n/q).
pub fn afe_l_sym2(lambdas: &[f64], spec: &WeightSpec, opts: &AfeOptions) -> Result<AfeValue> {
    let n_cut = afe_l_sym2_required(spec, opts)?;
    let need = n_cut * n_cut;
    if (lambdas.len() as u64) < need {
        return Err(Error::Coverage {
            required: need as usize,
            available: lambdas.len(),
        });
    }
    let q = spec.q as f64;
    let v = MellinWeight::for_range(WeightKind::V, spec, 1.0 / q, n_cut as f64 / q)?;
    let mut acc = Pairwise::real();
    for n in 1..=n_cut {
        let vn = v.eval(n as f64 / q)?;
        acc.push(lambdas[(n * n - 1) as usize] / (n as f64).sqrt() * vn);
    }
    Ok(AfeValue {
        value: 2.0 * acc.total(),
        tail_bound: 2.0 * SQRT3 * v.tail_bound(n_cut as f64, q, 0.5),
        terms: n_cut,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(k: u32, q: u64) -> WeightSpec {
        WeightSpec::new(k, q).unwrap()
    }

    // Gamma(k/2, 2 pi y)/Gamma(k/2) as a finite sum (k/2 integer)
    fn w_closed(k: u32, y: f64) -> f64 {
        let x = 2.0 * PI * y;
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..(k / 2) {
            term *= x / j as f64;
            sum += term;
        }
        (-x).exp() * sum
    }

    fn digamma(mut x: f64) -> f64 {
        let mut r = 0.0;
        while x < 20.0 {
            r -= 1.0 / x;
            x += 1.0;
        }
        let x2 = 1.0 / (x * x);
        r + x.ln() - 0.5 / x
            - x2 * (1.0 / 12.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 252.0 - x2 * (1.0 / 240.0 - x2 / 132.0))))
    }

    #[test]
    fn spec_validation() {
        assert!(WeightSpec::new(11, 101).is_err());
        assert!(WeightSpec::new(2, 101).is_err());
        assert!(WeightSpec::new(12, 100).is_err());
        assert!(spec(12, 101).with_sigma(0.1).is_err());
        assert_eq!(spec(12, 101).root_sign(), 1.0);
        assert_eq!(spec(14, 101).root_sign(), -1.0);
    }

    #[test]
    fn gamma_box_ratio_examples() {
        let s = Complex64::new(0.5, 0.0);
        assert_eq!(gamma_box(s, 12).unwrap() - gamma_box(s, 12).unwrap(), Complex64::new(0.0, 0.0));
        let r = (gamma_box(Complex64::new(0.8, 0.0), 12).unwrap() - gamma_box(s, 12).unwrap()).exp();
        assert!(r.im.abs() < 1e-15 && r.re > 0.0);
        // frozen value of the ratio at s = 0.3, k = 12
        assert_relative_eq!(r.re, 0.872_446_371_147_586_8, max_relative = 1e-10);
        let mut last = f64::INFINITY;
        for i in 0..=500 {
            let t = i as f64 * 0.1;
            let m = gamma_box(Complex64::new(0.5, t), 12).unwrap().re;
            assert!(m <= last + 1e-12);
            last = m;
        }
    }

    #[test]
    fn w_matches_incomplete_gamma() {
        for k in [4u32, 12, 30] {
            let sp = spec(k, 101);
            for y in [1e-3, 0.05, 0.3, 1.0, 2.5, 6.0] {
                let w = weight_w(y, &sp).unwrap();
                assert!((w - w_closed(k, y)).abs() < 1e-12, "k={k} y={y}: {w} vs {}", w_closed(k, y));
            }
        }
        let sp = spec(12, 101);
        assert!(weight_w(100.0, &sp).unwrap().abs() <= 1e-10);
        assert!((weight_w(1e-8, &sp).unwrap() - 1.0).abs() <= 1e-2);
    }

    #[test]
    fn w_height_doubling() {
        let sp = spec(12, 101);
        let t = adaptive_height(WeightKind::W, &sp, 1.0);
        let a = weight_w(1.0, &sp).unwrap();
        let b = weight_w(1.0, &sp.with_height(2.0 * t).unwrap()).unwrap();
        assert!((a - b).abs() <= 1e-10);
    }

    #[test]
    fn contour_independence() {
        let sp = spec(12, 101);
        for y in [0.01, 1.0, 7.0] {
            let a = weight_w(y, &sp).unwrap();
            let b = weight_w(y, &sp.with_sigma(2.0).unwrap()).unwrap();
            assert!((a - b).abs() < 1e-9);
            let a = weight_v(y, &sp.with_sigma(0.25).unwrap()).unwrap();
            let b = weight_v(y, &sp).unwrap();
            assert!((a - b).abs() < 1e-9, "y={y}: {a} vs {b}");
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(24))]
        #[test]
        fn weights_do_not_depend_on_the_contour(
            sigma in 0.25f64..2.0,
            ln_y in -7.0f64..2.5,
            k in proptest::sample::select(vec![4u32, 12, 26]),
        ) {
            let sp = spec(k, 101);
            let moved = sp.with_sigma(sigma).unwrap();
            let y = ln_y.exp();
            // roundoff in the contour sum is magnified by y^{-sigma}
            let tol = 1e-12 * y.powf(-sigma.max(1.0)).max(1.0);
            let (a, b) = (weight_w(y, &sp).unwrap(), weight_w(y, &moved).unwrap());
            proptest::prop_assert!((a - b).abs() <= tol, "W at y={}: {} vs {}", y, a, b);
            let (a, b) = (weight_v(y, &sp).unwrap(), weight_v(y, &moved).unwrap());
            proptest::prop_assert!((a - b).abs() <= tol * a.abs().max(1.0), "V at y={}: {} vs {}", y, a, b);
        }
    }

    #[test]
    fn v_decays() {
        let sp = spec(12, 101);
        assert!(weight_v(1e6, &sp).unwrap().abs() <= 1e-8);
        let v = MellinWeight::for_range(WeightKind::V, &sp, 1e-2, 30.0).unwrap();
        for y in [1.0, 3.0, 10.0, 20.0, 30.0] {
            let val = v.eval(y).unwrap();
            assert!(val.abs() <= v.envelope(y) + 1e-15, "y={y}");
        }
    }

    #[test]
    fn envelope_dominates_w() {
        let sp = spec(12, 101);
        let w = MellinWeight::for_range(WeightKind::W, &sp, 1e-3, 40.0).unwrap();
        for y in [1e-3, 0.5, 2.0, 8.0, 40.0] {
            assert!(w.eval(y).unwrap().abs() <= w.envelope(y) + 1e-15);
        }
        // tail sum against direct summation
        let direct: f64 = (11..400).map(|m| w_closed(12, m as f64 / 10.0)).sum();
        assert!(direct <= w.tail_bound(10.0, 10.0, 0.0));
    }

    #[test]
    fn residue_constant_values() {
        for (k, q) in [(4u32, 101u64), (12, 101), (12, 1009), (30, 101), (1002, 101)] {
            let sp = spec(k, q);
            let r = residue_constants(&sp).unwrap();
            assert_eq!(r.c_k, 1.0);
            let qf = q as f64;
            assert_relative_eq!(r.a_k, -(1.0 - 1.0 / qf) / 2.0, max_relative = 1e-15);
            let kf = k as f64;
            let g = -1.5 * PI.ln()
                + 0.5 * (digamma(0.75) + digamma((kf - 0.5) / 2.0) + digamma((kf + 0.5) / 2.0));
            assert!((r.gamma_log_derivative - g).abs() < 1e-8, "k={k}");
            let b = (1.0 - 1.0 / qf) * (g / 2.0 + EULER_GAMMA) + qf.ln() / qf;
            assert!((r.b_k - b).abs() < 1e-8);
            assert!(r.big_a > 0.0);
            assert_relative_eq!(r.big_a, 2.612_375_348_685_488 / 2.0 * (1.0 - 1.0 / qf), max_relative = 1e-13);
        }
    }

    #[test]
    fn v_small_y_expansion() {
        let sp = spec(12, 101).with_sigma(0.25).unwrap();
        let r = residue_constants(&sp).unwrap();
        for y in [1e-8, 1e-6, 1e-4, 1e-2] {
            let v = weight_v(y, &sp).unwrap();
            let d = v - (r.a_k * y.ln() + r.b_k);
            assert!(d.abs() <= 10.0 * (y.powf(0.25) + 1.0 / 101.0), "y={y}: {d}");
        }
    }

    #[test]
    fn afe_single_term_cases() {
        let sp = WeightSpec::level_one(12).unwrap();
        let need = afe_l_f_required(&sp, &AfeOptions::default()).unwrap();
        let mut lam = vec![0.0; need as usize];
        lam[0] = 1.0;
        let v = afe_l_f(&lam, &sp, &AfeOptions::default()).unwrap();
        assert!((v.value - w_closed(12, 1.0)).abs() < 1e-12);
        assert!(afe_l_f(&lam[..1], &sp, &AfeOptions::default()).is_err());

        let sp = spec(12, 101);
        let need = afe_l_sym2_required(&sp, &AfeOptions::default()).unwrap();
        let ones = vec![1.0; (need * need) as usize];
        let s = afe_l_sym2(&ones, &sp, &AfeOptions::default()).unwrap();
        assert!(s.value.is_finite() && s.value > 0.0);
        assert!(s.tail_bound < 1e-11);
    }
}
