//! Special functions in double precision: complex log-gamma, Bessel J of
//! integer order (log-scaled), the Riemann zeta function and its derivative,
//! Gauss-Legendre rules and a truncated-contour inverse Mellin transform.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// B_2, B_4, ..., B_26.
const BERNOULLI: [f64; 13] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
];

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Principal branch of log Gamma(z) for Re z > 0.
pub fn log_gamma(z: Complex64) -> Result<Complex64> {
    if !(z.re > 0.0) || !z.im.is_finite() {
        return Err(Error::Domain(format!("log_gamma needs Re z > 0, got {z}")));
    }
    Ok(log_gamma_unchecked(z))
}

pub(crate) fn log_gamma_unchecked(z: Complex64) -> Complex64 {
    let mut shifted = z;
    let mut correction = Complex64::new(0.0, 0.0);
    while shifted.norm_sqr() < 225.0 {
        correction += shifted.ln();
        shifted += 1.0;
    }
    stirling(shifted) - correction
}

fn stirling(z: Complex64) -> Complex64 {
    let inv = z.inv();
    let inv2 = inv * inv;
    let mut series = Complex64::new(0.0, 0.0);
    let mut pow = inv;
    for (j, b) in BERNOULLI.iter().take(10).enumerate() {
        let n = 2.0 * (j as f64 + 1.0);
        series += pow * (b / (n * (n - 1.0)));
        pow *= inv2;
    }
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + series
}

/// log Gamma(x) for real x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    log_gamma_unchecked(Complex64::new(x, 0.0)).re
}

/// A real number stored as sign * exp(log_magnitude).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogScaledReal {
    pub sign: i8,
    pub log_magnitude: f64,
}

impl LogScaledReal {
    pub const ZERO: LogScaledReal = LogScaledReal {
        sign: 0,
        log_magnitude: f64::NEG_INFINITY,
    };

    pub fn from_f64(v: f64) -> Self {
        if v == 0.0 {
            Self::ZERO
        } else {
            LogScaledReal {
                sign: if v > 0.0 { 1 } else { -1 },
                log_magnitude: v.abs().ln(),
            }
        }
    }

    /// The value as a double; underflows to zero when it must.
    pub fn value(&self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            self.sign as f64 * self.log_magnitude.exp()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn mul(self, other: LogScaledReal) -> Self {
        if self.sign == 0 || other.sign == 0 {
            return Self::ZERO;
        }
        LogScaledReal {
            sign: self.sign * other.sign,
            log_magnitude: self.log_magnitude + other.log_magnitude,
        }
    }

    /// Sum via log-sum-exp with sign tracking.
    pub fn add(self, other: LogScaledReal) -> Self {
        if self.sign == 0 {
            return other;
        }
        if other.sign == 0 {
            return self;
        }
        let (big, small) = if self.log_magnitude >= other.log_magnitude {
            (self, other)
        } else {
            (other, self)
        };
        let ratio = (small.log_magnitude - big.log_magnitude).exp();
        let m = if big.sign == small.sign { 1.0 + ratio } else { 1.0 - ratio };
        if m == 0.0 {
            return Self::ZERO;
        }
        LogScaledReal {
            sign: big.sign,
            log_magnitude: big.log_magnitude + m.ln(),
        }
    }
}

/// J_nu(x) for integer nu >= 0 and x >= 0, in log-scaled form.
///
/// Small arguments (x^2/4 <= nu + 1, where the ascending series has no
/// cancellation) use the series in log space; everything else uses Miller's
/// backward recurrence with running rescaling.
pub fn bessel_j(nu: u32, x: f64) -> LogScaledReal {
    assert!(x >= 0.0 && x.is_finite(), "bessel_j needs finite x >= 0");
    if x == 0.0 {
        return if nu == 0 {
            LogScaledReal {
                sign: 1,
                log_magnitude: 0.0,
            }
        } else {
            LogScaledReal::ZERO
        };
    }
    if x * x <= 4.0 * (nu as f64 + 1.0) {
        bessel_series(nu, x)
    } else {
        bessel_miller(nu, x).1
    }
}

/// (J_{nu-1}(x), J_nu(x)) for nu >= 1, x > 0.
pub fn bessel_j_pair(nu: u32, x: f64) -> (LogScaledReal, LogScaledReal) {
    assert!(nu >= 1 && x > 0.0);
    if x * x <= 4.0 * nu as f64 {
        (bessel_series(nu - 1, x), bessel_series(nu, x))
    } else {
        bessel_miller(nu, x)
    }
}

fn bessel_series(nu: u32, x: f64) -> LogScaledReal {
    let z = 0.25 * x * x;
    let nuf = nu as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        let kf = k as f64;
        term *= -z / (kf * (nuf + kf));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    let lead = LogScaledReal {
        sign: 1,
        log_magnitude: nuf * (0.5 * x).ln() - ln_gamma(nuf + 1.0),
    };
    lead.mul(LogScaledReal::from_f64(sum))
}

fn bessel_miller(nu: u32, x: f64) -> (LogScaledReal, LogScaledReal) {
    const BIG: f64 = 1e250;
    let ln_big = BIG.ln();
    let top = (nu as f64).max(x);
    let mut start = (top + (160.0 * top.max(1.0)).sqrt() + 30.0).ceil() as u64;
    start += start % 2;
    let two_over_x = 2.0 / x;
    let (mut above, mut cur) = (0.0f64, 1.0f64);
    let mut log_scale = 0.0f64;
    let mut sum = 0.0f64;
    let mut rec_nu = (0.0, 0.0);
    let mut rec_prev = (0.0, 0.0);
    // cur holds J_j (unnormalized) at the top of each iteration
    let mut j = start;
    loop {
        if j == nu as u64 {
            rec_nu = (cur, log_scale);
        }
        if nu > 0 && j == nu as u64 - 1 {
            rec_prev = (cur, log_scale);
        }
        if j == 0 {
            sum += cur;
            break;
        }
        if j % 2 == 0 {
            sum += 2.0 * cur;
        }
        let below = j as f64 * two_over_x * cur - above;
        above = cur;
        cur = below;
        j -= 1;
        if cur.abs() > BIG {
            cur /= BIG;
            above /= BIG;
            sum /= BIG;
            log_scale += ln_big;
        }
    }
    let to_log = |(v, ls): (f64, f64)| -> LogScaledReal {
        if v == 0.0 {
            return LogScaledReal::ZERO;
        }
        LogScaledReal {
            sign: (v.signum() * sum.signum()) as i8,
            log_magnitude: v.abs().ln() + ls - sum.abs().ln() - log_scale,
        }
    };
    let prev = if nu == 0 {
        LogScaledReal::ZERO
    } else {
        to_log(rec_prev)
    };
    (prev, to_log(rec_nu))
}

/// Fast J_nu(x) for one fixed order over [0, x_max], built from Taylor
/// expansions at equally spaced nodes.
///
/// Node values come from stepping the Bessel ODE forward, re-anchored on
/// Miller's recurrence at regular intervals. Below `x_negligible` the
/// function is bounded by `negligible_bound` and reported as zero.
#[derive(Debug, Clone)]
pub struct BesselTable {
    nu: u32,
    x_negligible: f64,
    negligible_bound: f64,
    x_start: f64,
    x_max: f64,
    step: f64,
    inv_step: f64,
    coeffs: Vec<[f64; BesselTable::WIDTH]>,
    // beyond the dense part only (J, J') is kept per node
    far: Vec<[f64; 2]>,
    // below x_start: J = (x / (2 c))^nu * P(x^2 / 4) with c = (nu!)^(1/nu),
    // P tabulated by Taylor nodes in z = x^2 / 4
    small: Vec<[f64; BesselTable::WIDTH]>,
    small_inv_c: f64,
}

impl BesselTable {
    // the evaluation below is written out for exactly this degree
    const DEGREE: usize = 11;
    const WIDTH: usize = Self::DEGREE + 1;
    /// Largest table the builder will allocate, in nodes.
    pub const MAX_NODES: usize = 20_000_000;
    /// Nodes stored with full Taylor coefficients; the rest rebuild them on demand.
    pub const DENSE_NODES: usize = 1_500_000;

    /// Table for J_nu on [0, x_max]; values with |J| below exp(log_floor)
    /// on the rising flank are dropped.
    pub fn new(nu: u32, x_max: f64, log_floor: f64) -> Result<Self> {
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Err(Error::Domain(format!("Bessel table needs x_max > 0, got {x_max}")));
        }
        let step = 0.25;
        let x_negligible = Self::find_floor(nu, log_floor);
        let x_start = x_negligible.max(1.0);
        // near the origin the stepping loses relative accuracy; anchor every node there
        let series_limit = 2.0 * (nu as f64 + 1.0).sqrt() + 1.0;
        let nodes = if x_max > x_start {
            ((x_max - x_start) / step).ceil() as usize + 2
        } else {
            0
        };
        if nodes > Self::MAX_NODES {
            return Err(Error::Capacity(format!(
                "Bessel table of order {nu} up to x = {x_max:.3e} needs {nodes} nodes"
            )));
        }
        let anchor_every = ((x_max / 200.0 / step).ceil() as usize).max(512);
        let dense = nodes.min(Self::DENSE_NODES);
        let mut coeffs = Vec::with_capacity(dense);
        let mut far = Vec::with_capacity(nodes - dense);
        let mut prev: Option<[f64; Self::WIDTH]> = None;
        for j in 0..nodes {
            let x0 = x_start + j as f64 * step;
            let (y, dy) = match prev {
                Some(c) if j % anchor_every != 0 && x0 > series_limit => {
                    let mut v = 0.0;
                    let mut d = 0.0;
                    for p in (0..Self::WIDTH).rev() {
                        v = v * step + c[p];
                        if p > 0 {
                            d = d * step + p as f64 * c[p];
                        }
                    }
                    (v, d)
                }
                _ => Self::anchor(nu, x0),
            };
            let c = taylor_coefficients(nu, x0, y, dy);
            if j < dense {
                coeffs.push(c);
            } else {
                far.push([y, dy]);
            }
            prev = Some(c);
        }
        let negligible_bound = if x_negligible > 0.0 {
            bessel_j(nu, x_negligible).value().abs()
        } else {
            0.0
        };
        Ok(BesselTable {
            nu,
            x_negligible,
            negligible_bound,
            x_start,
            x_max,
            step,
            inv_step: 1.0 / step,
            coeffs,
            far,
            small: Self::small_nodes(nu, x_start),
            small_inv_c: if nu == 0 {
                1.0
            } else {
                (-ln_gamma(nu as f64 + 1.0) / nu as f64).exp()
            },
        })
    }

    fn anchor(nu: u32, x: f64) -> (f64, f64) {
        if nu == 0 {
            let j0 = bessel_j(0, x).value();
            let j1 = bessel_j(1, x).value();
            return (j0, -j1);
        }
        let (prev, cur) = bessel_j_pair(nu, x);
        let (a, b) = (prev.value(), cur.value());
        (b, a - nu as f64 / x * b)
    }

    // J_nu increases on [0, nu]; bisect for the point where it reaches exp(log_floor)
    fn find_floor(nu: u32, log_floor: f64) -> f64 {
        if nu == 0 {
            return 0.0;
        }
        let f = |x: f64| bessel_j(nu, x).log_magnitude;
        let hi0 = nu as f64;
        if f(hi0) <= log_floor {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0f64, hi0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= 0.0 || f(mid) < log_floor {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-9 * hi.max(1e-300) {
                break;
            }
        }
        lo
    }

    pub fn order(&self) -> u32 {
        self.nu
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Arguments below this are treated as zero.
    pub fn x_negligible(&self) -> f64 {
        self.x_negligible
    }

    /// Bound on |J_nu(x)| for every x below [`Self::x_negligible`].
    pub fn negligible_bound(&self) -> f64 {
        self.negligible_bound
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with::<false>(x)
    }

    /// [`Self::eval`] with the polynomial step written as fused multiply-adds.
    /// Only fast inside code compiled with the `fma` target feature.
    #[inline(always)]
    pub fn eval_with<const FUSED: bool>(&self, x: f64) -> f64 {
        if x < self.x_start {
            return self.eval_small(x);
        }
        let j = ((x - self.x_start) * self.inv_step + 0.5) as usize;
        if j >= self.coeffs.len() {
            return self.eval_far(x, j);
        }
        let t = x - (self.x_start + j as f64 * self.step);
        if FUSED {
            Self::estrin_fused(&self.coeffs[j], t)
        } else {
            Self::horner(&self.coeffs[j], t)
        }
    }

    /// Arguments in [lo, hi) are served by [`Self::eval_dense`].
    pub fn dense_interval(&self) -> (f64, f64) {
        let hi = self.x_start + (self.coeffs.len() as f64 - 0.5) * self.step;
        (self.x_start, hi.max(self.x_start))
    }

    /// Table lookup for x inside [`Self::dense_interval`].
    #[inline(always)]
    pub fn eval_dense<const FUSED: bool>(&self, x: f64) -> f64 {
        debug_assert!(x >= self.x_start && !self.coeffs.is_empty());
        let j = (((x - self.x_start) * self.inv_step + 0.5) as i64 as usize).min(self.coeffs.len() - 1);
        let t = x - (self.x_start + j as i64 as f64 * self.step);
        // SAFETY: j was clamped to the table length
        let c = unsafe { self.coeffs.get_unchecked(j) };
        if FUSED {
            Self::estrin_fused(c, t)
        } else {
            Self::horner(c, t)
        }
    }

    /// `out[i] = J(beta * (n0 + i))`, every argument inside
    /// [`Self::dense_interval`]. Consecutive arguments sharing a node reuse
    /// its coefficients, which lets the inner loop vectorize.
    #[inline(always)]
    pub fn eval_progression<const FUSED: bool>(&self, beta: f64, n0: u64, out: &mut [f64]) {
        debug_assert!(!self.coeffs.is_empty());
        let last = self.coeffs.len() - 1;
        let len = out.len();
        let mut i = 0;
        while i < len {
            let x = beta * (n0 + i as u64) as i64 as f64;
            let j = (((x - self.x_start) * self.inv_step + 0.5) as i64 as usize).min(last);
            let xj = self.x_start + j as i64 as f64 * self.step;
            // arguments below the node's upper edge stay on it
            let edge = (xj + 0.5 * self.step) / beta - n0 as f64;
            let stop = (edge.ceil().max(0.0) as usize).clamp(i + 1, len);
            let c = &self.coeffs[j];
            for (r, slot) in out[i..stop].iter_mut().enumerate() {
                let t = beta * (n0 + (i + r) as u64) as i64 as f64 - xj;
                *slot = if FUSED { Self::estrin_fused(c, t) } else { Self::horner(c, t) };
            }
            i = stop;
        }
    }

    #[inline(always)]
    fn estrin_fused(c: &[f64; Self::WIDTH], t: f64) -> f64 {
        let t2 = t * t;
        let t4 = t2 * t2;
        let p01 = c[1].mul_add(t, c[0]);
        let p23 = c[3].mul_add(t, c[2]);
        let p45 = c[5].mul_add(t, c[4]);
        let p67 = c[7].mul_add(t, c[6]);
        let p89 = c[9].mul_add(t, c[8]);
        let pab = c[11].mul_add(t, c[10]);
        let p0 = p23.mul_add(t2, p01);
        let p1 = p67.mul_add(t2, p45);
        let p2 = pab.mul_add(t2, p89);
        p2.mul_add(t4 * t4, p1.mul_add(t4, p0))
    }

    #[cold]
    #[inline(never)]
    fn eval_small(&self, x: f64) -> f64 {
        if x < self.x_negligible || x <= 0.0 {
            return if self.nu == 0 && x == 0.0 { 1.0 } else { 0.0 };
        }
        let z = 0.25 * x * x;
        let j = ((z * Self::SMALL_INV_STEP + 0.5) as usize).min(self.small.len() - 1);
        let p = Self::horner(&self.small[j], z - j as f64 * Self::SMALL_STEP);
        (0.5 * x * self.small_inv_c).powi(self.nu as i32) * p
    }

    #[inline(never)]
    fn eval_far(&self, x: f64, j: usize) -> f64 {
        debug_assert!(j < self.coeffs.len() + self.far.len(), "Bessel table overrun at x = {x}");
        let j = j.min(self.coeffs.len() + self.far.len() - 1);
        let x0 = self.x_start + j as f64 * self.step;
        if j < self.coeffs.len() {
            return Self::horner(&self.coeffs[j], x - x0);
        }
        let [y, dy] = self.far[j - self.coeffs.len()];
        Self::horner(&taylor_coefficients(self.nu, x0, y, dy), x - x0)
    }

    // Estrin's scheme: shorter dependency chains than Horner
    #[inline(always)]
    fn horner(c: &[f64; Self::WIDTH], t: f64) -> f64 {
        let t2 = t * t;
        let t4 = t2 * t2;
        let t8 = t4 * t4;
        let p01 = c[0] + c[1] * t;
        let p23 = c[2] + c[3] * t;
        let p45 = c[4] + c[5] * t;
        let p67 = c[6] + c[7] * t;
        let p89 = c[8] + c[9] * t;
        let pab = c[10] + c[11] * t;
        let p0 = p01 + p23 * t2;
        let p1 = p45 + p67 * t2;
        let p2 = p89 + pab * t2;
        (p0 + p1 * t4) + p2 * t8
    }

    const SMALL_STEP: f64 = 0.5;
    const SMALL_INV_STEP: f64 = 2.0;

    fn small_nodes(nu: u32, x_start: f64) -> Vec<[f64; Self::WIDTH]> {
        let z_end = 0.25 * x_start * x_start;
        let count = (z_end * Self::SMALL_INV_STEP).ceil() as usize + 2;
        // P(z) = sum_k c_k z^k
        let nuf = nu as f64;
        let mut c = vec![1.0f64];
        while c.len() < 400 {
            let k = c.len() as f64;
            let next = -c[c.len() - 1] / (k * (nuf + k));
            if next == 0.0 {
                break;
            }
            c.push(next);
        }
        (0..count)
            .map(|j| {
                let z0 = j as f64 * Self::SMALL_STEP;
                let mut out = [0.0; Self::WIDTH];
                for (p, slot) in out.iter_mut().enumerate() {
                    // p-th Taylor coefficient: sum_k binom(k, p) c_k z0^(k - p)
                    let mut acc = 0.0;
                    let mut binom_pow = 1.0; // binom(k, p) z0^(k-p) at k = p
                    for k in p..c.len() {
                        if k > p {
                            binom_pow *= k as f64 / (k - p) as f64 * z0;
                        }
                        let term = binom_pow * c[k];
                        acc += term;
                        if k > p + 4 && term.abs() < 1e-19 * acc.abs() {
                            break;
                        }
                    }
                    *slot = acc;
                }
                out
            })
            .collect()
    }
}

fn taylor_coefficients(nu: u32, x0: f64, y: f64, dy: f64) -> [f64; BesselTable::WIDTH] {
    let mut a = [0.0; BesselTable::WIDTH];
    a[0] = y;
    a[1] = dy;
    let nu2 = (nu as f64) * (nu as f64);
    let x2 = x0 * x0;
    for p in 0..BesselTable::WIDTH - 2 {
        let pf = p as f64;
        let am1 = if p >= 1 { a[p - 1] } else { 0.0 };
        let am2 = if p >= 2 { a[p - 2] } else { 0.0 };
        let num = x0 * (pf + 1.0) * (2.0 * pf + 1.0) * a[p + 1]
            + (pf * pf + x2 - nu2) * a[p]
            + 2.0 * x0 * am1
            + am2;
        a[p + 2] = -num / (x2 * (pf + 1.0) * (pf + 2.0));
    }
    a
}

const ZETA_MIN_S: f64 = 1.1;

/// Riemann zeta on the real axis, s >= 1.1.
pub fn zeta(s: f64) -> Result<f64> {
    if !(s >= ZETA_MIN_S) {
        return Err(Error::Domain(format!("zeta needs s >= {ZETA_MIN_S}, got {s}")));
    }
    Ok(zeta_em(Complex64::new(s, 0.0), 24).0.re)
}

/// Derivative of zeta on the real axis, s >= 1.1.
pub fn zeta_deriv(s: f64) -> Result<f64> {
    if !(s >= ZETA_MIN_S) {
        return Err(Error::Domain(format!("zeta' needs s >= {ZETA_MIN_S}, got {s}")));
    }
    Ok(zeta_em(Complex64::new(s, 0.0), 24).1.re)
}

/// Complex zeta for Re s >= 1/2, s != 1.
pub fn zeta_complex(s: Complex64) -> Result<Complex64> {
    if !(s.re >= 0.5) || (s - 1.0).norm() < 1e-12 {
        return Err(Error::Domain(format!("complex zeta needs Re s >= 1/2, s != 1; got {s}")));
    }
    let n = 10 + s.norm().ceil() as usize;
    Ok(zeta_em(s, n).0)
}

// Euler-Maclaurin with cut N and 12 Bernoulli corrections; returns (zeta, zeta')
fn zeta_em(s: Complex64, cut: usize) -> (Complex64, Complex64) {
    let mut head = Complex64::new(0.0, 0.0);
    let mut dhead = Complex64::new(0.0, 0.0);
    for n in 1..cut {
        let ln_n = (n as f64).ln();
        let t = (-s * ln_n).exp();
        head += t;
        dhead -= t * ln_n;
    }
    let nf = cut as f64;
    let ln_n = nf.ln();
    let n_pow = (-s * ln_n).exp();
    let sm1 = s - 1.0;
    let mut z = head + n_pow * nf / sm1 + n_pow * 0.5;
    let mut dz = dhead + n_pow * nf * (-ln_n / sm1 - 1.0 / (sm1 * sm1)) - n_pow * ln_n * 0.5;
    // T_j = B_2j/(2j)! * s(s+1)...(s+2j-2) * N^{-s-2j+1}
    let mut poch = s;
    let mut dlog_poch = s.inv();
    let mut fact = 2.0;
    let mut npow = n_pow / nf;
    for (j, b) in BERNOULLI.iter().take(12).enumerate() {
        let t = poch * npow * (b / fact);
        z += t;
        dz += t * (dlog_poch - ln_n);
        let k = 2.0 * (j as f64 + 1.0);
        poch *= (s + (k - 1.0)) * (s + k);
        dlog_poch += (s + (k - 1.0)).inv() + (s + k).inv();
        fact *= (k + 1.0) * (k + 2.0);
        npow /= nf * nf;
    }
    (z, dz)
}

/// n-point Gauss-Legendre rule on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// A truncated vertical contour [sigma - iT, sigma + iT] split into panels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub sigma: f64,
    pub height: f64,
    pub panels: usize,
    pub nodes_per_panel: usize,
}

impl ContourSpec {
    pub fn new(sigma: f64, height: f64, panels: usize, nodes_per_panel: usize) -> Result<Self> {
        if !sigma.is_finite() || !(height > 0.0) || panels == 0 || nodes_per_panel == 0 {
            return Err(Error::Domain(format!(
                "bad contour sigma={sigma} T={height} panels={panels} nodes={nodes_per_panel}"
            )));
        }
        if panels * nodes_per_panel < 8 {
            return Err(Error::Domain("contour needs at least 8 nodes".into()));
        }
        Ok(ContourSpec {
            sigma,
            height,
            panels,
            nodes_per_panel,
        })
    }

    /// Panels of (at most) the given height covering [-T, T].
    pub fn with_panel_height(sigma: f64, height: f64, panel_height: f64, nodes: usize) -> Result<Self> {
        let panels = ((2.0 * height / panel_height).ceil() as usize).max(1);
        Self::new(sigma, height, panels, nodes)
    }

    /// (t, weight) pairs along the imaginary direction.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let (gx, gw) = gauss_legendre(self.nodes_per_panel);
        let h = 2.0 * self.height / self.panels as f64;
        let mut out = Vec::with_capacity(self.panels * self.nodes_per_panel);
        for p in 0..self.panels {
            let mid = -self.height + (p as f64 + 0.5) * h;
            for (x, w) in gx.iter().zip(&gw) {
                out.push((mid + 0.5 * h * x, 0.5 * h * w));
            }
        }
        out
    }
}

/// (1/2 pi i) * integral of F(s) y^{-s} ds over the truncated contour.
///
/// The integrands in scope are conjugate-symmetric, so the result is real;
/// an imaginary part above tolerance is reported as an error.
pub fn inverse_mellin<F>(integrand: F, y: f64, contour: &ContourSpec) -> Result<f64>
where
    F: Fn(Complex64) -> Complex64,
{
    if !(y > 0.0) {
        return Err(Error::Domain(format!("inverse Mellin needs y > 0, got {y}")));
    }
    let ln_y = y.ln();
    let mut acc = crate::sum::Pairwise::complex();
    let mut scale = 0.0;
    for (t, w) in contour.nodes() {
        let s = Complex64::new(contour.sigma, t);
        let v = integrand(s) * (-s * ln_y).exp() * w;
        scale += v.norm();
        acc.push(v);
    }
    let total = acc.total() / (2.0 * PI);
    check_symmetry(total, scale / (2.0 * PI))
}

pub(crate) fn check_symmetry(total: Complex64, scale: f64) -> Result<f64> {
    if total.im.abs() > 1e-9 + 1e-13 * scale {
        return Err(Error::ContourSymmetry { imag: total.im });
    }
    Ok(total.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn log_gamma_examples() {
        assert!(log_gamma(c(1.0, 0.0)).unwrap().norm() < 1e-14);
        assert_relative_eq!(log_gamma(c(0.5, 0.0)).unwrap().re, 0.572_364_942_924_700_1, epsilon = 1e-14);
        assert_relative_eq!(log_gamma(c(5.0, 0.0)).unwrap().re, 24f64.ln(), epsilon = 1e-13);
        assert!(log_gamma(c(0.0, 1.0)).is_err());
        assert!(log_gamma(c(-1.0, 0.0)).is_err());
    }

    #[test]
    fn log_gamma_duplication() {
        // log G(2z) = (2z-1) log 2 - log(pi)/2 + log G(z) + log G(z + 1/2)
        for &(re, im) in &[(0.3, 0.0), (1.7, 3.0), (12.0, -40.0), (3.0, 500.0), (250.0, 9000.0)] {
            let z = c(re, im);
            let lhs = log_gamma(z * 2.0).unwrap();
            let rhs = (z * 2.0 - 1.0) * 2f64.ln() - 0.5 * PI.ln()
                + log_gamma(z).unwrap()
                + log_gamma(z + 0.5).unwrap();
            let d = lhs - rhs;
            // equal modulo 2 pi i
            let k = (d.im / (2.0 * PI)).round();
            assert!(d.re.abs() < 1e-12 * lhs.norm().max(1.0), "{z}: {d}");
            assert!((d.im - 2.0 * PI * k).abs() < 1e-12 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn log_gamma_branch_matches_real_axis() {
        let a = log_gamma(c(3.5, 1e-9)).unwrap();
        assert!((a.re - ln_gamma(3.5)).abs() < 1e-13 && a.im.abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn log_gamma_recurrence(re in 0.5f64..50.0, im in -100.0f64..100.0) {
            let z = c(re, im);
            let lhs = log_gamma(z + 1.0).unwrap();
            let rhs = log_gamma(z).unwrap() + z.ln();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
        }

        #[test]
        fn bessel_three_term(nu in 3u32..=60, x in 0.1f64..50.0) {
            let a = bessel_j(nu - 1, x).value();
            let b = bessel_j(nu + 1, x).value();
            let m = bessel_j(nu, x).value();
            let lhs = a + b;
            let rhs = 2.0 * nu as f64 / x * m;
            let scale = a.abs().max(b.abs()).max(rhs.abs());
            prop_assert!((lhs - rhs).abs() <= 1e-8 * scale, "nu={} x={}: {} vs {}", nu, x, lhs, rhs);
        }
    }

    #[test]
    fn bessel_examples() {
        assert!(bessel_j(3, 0.0).is_zero());
        assert_eq!(bessel_j(0, 0.0).value(), 1.0);
        let x: f64 = 0.1;
        let lead = (x / 2.0).powi(3) / 6.0 * (1.0 - (x / 2.0).powi(2) / 4.0);
        assert_relative_eq!(bessel_j(3, x).value(), lead, max_relative = 1e-6);
        let j = bessel_j(999, 1.0);
        assert_eq!(j.sign, 1);
        let lead = 999.0 * 0.5f64.ln() - ln_gamma(1000.0);
        assert!((j.log_magnitude - lead).abs() < 1e-3);
    }

    #[test]
    fn bessel_reference_values() {
        // J_0(1), J_1(10), J_11(30), J_5(2.5)
        assert_relative_eq!(bessel_j(0, 1.0).value(), 0.765_197_686_557_966_6, max_relative = 1e-12);
        assert_relative_eq!(bessel_j(1, 10.0).value(), 0.043_472_746_168_861_44, max_relative = 1e-10);
        assert_relative_eq!(bessel_j(5, 2.5).value(), 0.019_501_625_134_503_22, max_relative = 1e-11);
        assert_relative_eq!(bessel_j(11, 30.0).value(), 0.025_058_805_137_824_54, max_relative = 1e-9);
    }

    #[test]
    fn bessel_series_and_miller_agree() {
        for nu in [0u32, 1, 5, 11, 40, 300, 1001] {
            let edge = 2.0 * (nu as f64 + 1.0).sqrt();
            for f in [0.9, 0.99] {
                let x = edge * f;
                let s = bessel_series(nu, x);
                let m = bessel_miller(nu, x).1;
                assert_eq!(s.sign, m.sign);
                assert!((s.log_magnitude - m.log_magnitude).abs() < 1e-11, "nu={nu} x={x}");
            }
        }
    }

    #[test]
    fn bessel_large_order_is_log_scaled() {
        let j = bessel_j(1001, 300.0);
        assert_eq!(j.sign, 1);
        assert!(j.log_magnitude < -700.0);
        assert_eq!(j.value(), 0.0);
        // recurrence in log space at large order
        let (a, b) = (bessel_j(1000, 900.0), bessel_j(1002, 900.0));
        let m = bessel_j(1001, 900.0);
        let lhs = a.add(b);
        let rhs = m.mul(LogScaledReal::from_f64(2.0 * 1001.0 / 900.0));
        assert!((lhs.log_magnitude - rhs.log_magnitude).abs() < 1e-9);
    }

    #[test]
    fn bessel_table_matches_direct() {
        for (nu, xmax) in [(11u32, 3000.0), (0, 50.0), (5, 400.0), (1001, 6000.0)] {
            let table = BesselTable::new(nu, xmax, -80.0).unwrap();
            let mut x = 0.013;
            while x < xmax {
                let direct = bessel_j(nu, x).value();
                let t = table.eval(x);
                if x < table.x_negligible() {
                    assert_eq!(t, 0.0);
                    assert!(direct.abs() <= table.negligible_bound() * (1.0 + 1e-9));
                } else {
                    // relative on the rising flank, against the amplitude once oscillating
                    let scale = if x < nu as f64 {
                        direct.abs()
                    } else {
                        direct.abs().max((2.0 / (PI * x)).sqrt())
                    };
                    assert!(
                        (t - direct).abs() <= 1e-10 * scale,
                        "nu={nu} x={x}: {t} vs {direct}"
                    );
                }
                x = x * 1.013 + 0.37;
            }
        }
    }

    #[test]
    fn bessel_table_far_region() {
        let xmax = 0.25 * BesselTable::DENSE_NODES as f64 + 5e4;
        let table = BesselTable::new(11, xmax, -80.0).unwrap();
        for x in [1000.3, 3.7e5, 3.8e5 + 0.11, 4.0e5, xmax - 1.0] {
            let direct = bessel_j(11, x).value();
            let amp = (2.0 / (PI * x)).sqrt();
            assert!((table.eval(x) - direct).abs() <= 1e-10 * amp, "x={x}");
        }
    }

    #[test]
    fn zeta_values() {
        assert_relative_eq!(zeta(2.0).unwrap(), PI * PI / 6.0, max_relative = 1e-14);
        assert_relative_eq!(zeta(1.5).unwrap(), 2.612_375_348_685_488_3, max_relative = 1e-13);
        assert_relative_eq!(zeta_deriv(1.5).unwrap(), -3.932_239_737_431_101, max_relative = 1e-12);
        assert_relative_eq!(zeta_deriv(2.0).unwrap(), -0.937_548_254_315_843_8, max_relative = 1e-13);
        assert!(zeta(1.05).is_err());
    }

    #[test]
    fn complex_zeta_values() {
        let z = zeta_complex(c(2.0, 0.0)).unwrap();
        assert!((z - PI * PI / 6.0).norm() < 1e-14);
        // zeta(1/2 + 14.134725141734693 i) ~ 0
        let z = zeta_complex(c(0.5, 14.134_725_141_734_693)).unwrap();
        assert!(z.norm() < 1e-12, "{z}");
        let a = zeta_complex(c(1.5, 80.0)).unwrap();
        let b = zeta_complex(c(1.5, -80.0)).unwrap();
        assert!((a - b.conj()).norm() < 1e-14);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        for d in 0..32 {
            let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d)).sum();
            assert!((q - exact).abs() < 1e-14, "degree {d}");
        }
    }

    #[test]
    fn cahen_mellin() {
        let contour = ContourSpec::with_panel_height(2.0, 40.0, 2.0, 16).unwrap();
        let gamma = |s: Complex64| log_gamma_unchecked(s).exp();
        let v = inverse_mellin(gamma, 1.0, &contour).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12, "{v}");
        let long = ContourSpec::with_panel_height(2.0, 80.0, 2.0, 16).unwrap();
        let v2 = inverse_mellin(gamma, 1.0, &long).unwrap();
        assert!((v - v2).abs() <= 1e-10);
        let v3 = inverse_mellin(gamma, 3.0, &contour).unwrap();
        assert!((v3 - (-3.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_integrand_is_rejected() {
        let contour = ContourSpec::new(1.0, 10.0, 10, 16).unwrap();
        let bad = |s: Complex64| Complex64::new(0.0, 1.0) * log_gamma_unchecked(s).exp();
        assert!(matches!(
            inverse_mellin(bad, 1.0, &contour),
            Err(Error::ContourSymmetry { .. })
        ));
        assert!(ContourSpec::new(1.0, 10.0, 1, 4).is_err());
    }

    #[test]
    fn log_scaled_arithmetic() {
        let a = LogScaledReal::from_f64(3.0);
        let b = LogScaledReal::from_f64(-5.0);
        assert_relative_eq!(a.add(b).value(), -2.0, max_relative = 1e-14);
        assert_relative_eq!(a.mul(b).value(), -15.0, max_relative = 1e-14);
        assert!(a.add(LogScaledReal::from_f64(-3.0)).is_zero());
    }
}
