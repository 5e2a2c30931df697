//! Exact evaluation of Kloosterman sums, quadratic Gauss sums and the
//! composite character sums that appear after Poisson summation.
//!
//! Every sum is an enumeration over residues with phases looked up in a table
//! of roots of unity indexed by an exactly reduced integer, so the only
//! rounding comes from the table entries and the (pairwise) accumulation.

use crate::arith::{
    self, epsilon_factor, factorize, gcd, is_prime_unchecked, jacobi_unchecked, reduce,
    ModularContext,
};
use crate::error::{Error, Result};
use crate::sum::{pairwise_sum_complex, Pairwise};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest modulus for exact Kloosterman enumeration.
pub const KLOOSTERMAN_MAX_MODULUS: u64 = 1_000_000;
/// Largest modulus c*q for the O((cq)^2) brute-force character sums.
pub const CHARSUM_BRUTE_MAX_MODULUS: u64 = 3000;
/// Imaginary residue tolerated before a real-valued sum is declared broken.
const IMAG_TOL: f64 = 1e-9;

/// `coefficient * sqrt(radicand) * i^quarter_turns`, with `radicand` squarefree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactTag {
    pub coefficient: i64,
    pub radicand: u64,
    pub quarter_turns: u8,
}

impl ExactTag {
    pub const ZERO: ExactTag = ExactTag {
        coefficient: 0,
        radicand: 1,
        quarter_turns: 0,
    };

    pub fn integer(v: i64) -> Self {
        ExactTag {
            coefficient: v,
            radicand: 1,
            quarter_turns: 0,
        }
    }

    /// `sqrt(n)` written as s * sqrt(t) with t squarefree.
    pub fn sqrt(n: u64) -> Self {
        let (mut s, mut t) = (1i64, 1u64);
        for (p, e) in factorize(n) {
            s *= (p as i64).pow(e / 2);
            if e % 2 == 1 {
                t *= p;
            }
        }
        ExactTag {
            coefficient: s,
            radicand: t,
            quarter_turns: 0,
        }
    }

    pub fn unit(quarter_turns: u8) -> Self {
        ExactTag {
            coefficient: 1,
            radicand: 1,
            quarter_turns: quarter_turns % 4,
        }
    }

    pub fn mul(self, other: ExactTag) -> ExactTag {
        if self.coefficient == 0 || other.coefficient == 0 {
            return ExactTag::ZERO;
        }
        let g = gcd(self.radicand, other.radicand);
        ExactTag {
            coefficient: self.coefficient * other.coefficient * g as i64,
            radicand: (self.radicand / g) * (other.radicand / g),
            quarter_turns: (self.quarter_turns + other.quarter_turns) % 4,
        }
    }

    pub fn to_complex(self) -> Complex64 {
        let mag = self.coefficient as f64 * (self.radicand as f64).sqrt();
        match self.quarter_turns % 4 {
            0 => Complex64::new(mag, 0.0),
            1 => Complex64::new(0.0, mag),
            2 => Complex64::new(-mag, 0.0),
            _ => Complex64::new(0.0, -mag),
        }
    }

    pub fn is_zero(self) -> bool {
        self.coefficient == 0
    }
}

/// A double-precision complex number, optionally carrying its exact form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
    pub exact: Option<ExactTag>,
}

impl ComplexValue {
    pub fn numeric(z: Complex64) -> Self {
        ComplexValue {
            re: z.re,
            im: z.im,
            exact: None,
        }
    }

    pub fn exact(tag: ExactTag) -> Self {
        let z = tag.to_complex();
        ComplexValue {
            re: z.re,
            im: z.im,
            exact: Some(tag),
        }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn norm(&self) -> f64 {
        self.value().norm()
    }

    /// True only for values known to vanish exactly.
    pub fn is_exact_zero(&self) -> bool {
        matches!(self.exact, Some(t) if t.is_zero())
    }
}

/// Table of e(j/c) for j in [0, c).
#[derive(Debug, Clone)]
pub struct RootTable {
    modulus: u64,
    roots: Vec<Complex64>,
}

impl RootTable {
    pub fn new(modulus: u64) -> Self {
        assert!(modulus >= 1);
        let roots = (0..modulus).map(|j| unit_root(j, modulus)).collect();
        RootTable { modulus, roots }
    }

    #[inline]
    pub fn get(&self, j: u64) -> Complex64 {
        self.roots[(j % self.modulus) as usize]
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }
}

/// e(j/c) with the argument folded into [-1/2, 1/2] before the trig call.
fn unit_root(j: u64, c: u64) -> Complex64 {
    let j = j % c;
    if j == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if 2 * j == c {
        return Complex64::new(-1.0, 0.0);
    }
    if 4 * j == c {
        return Complex64::new(0.0, 1.0);
    }
    if 4 * j == 3 * c {
        return Complex64::new(0.0, -1.0);
    }
    let signed = if 2 * j > c { j as f64 - c as f64 } else { j as f64 };
    let (s, co) = (2.0 * PI * signed / c as f64).sin_cos();
    Complex64::new(co, s)
}

/// e(a/c) = exp(2 pi i a / c).
pub fn additive_char(a: i64, c: u64) -> ComplexValue {
    assert!(c >= 1, "additive_char needs c >= 1");
    let j = reduce(a, c);
    let z = unit_root(j, c);
    let exact = if j == 0 {
        Some(ExactTag::integer(1))
    } else if 2 * j == c {
        Some(ExactTag::integer(-1))
    } else if 4 * j == c {
        Some(ExactTag::unit(1))
    } else if 4 * j == 3 * c {
        Some(ExactTag::unit(3))
    } else {
        None
    };
    ComplexValue {
        re: z.re,
        im: z.im,
        exact,
    }
}

/// Kloosterman sum S(m, n; c) by enumeration over units modulo c.
pub fn kloosterman(m: i64, n: i64, c: u64) -> Result<f64> {
    if c == 0 {
        return Err(Error::Domain("Kloosterman modulus must be positive".into()));
    }
    if c > KLOOSTERMAN_MAX_MODULUS {
        return Err(Error::Capacity(format!(
            "exact Kloosterman enumeration limited to c <= {KLOOSTERMAN_MAX_MODULUS}, got {c}"
        )));
    }
    if c == 1 {
        return Ok(1.0);
    }
    let ctx = ModularContext::new(c)?;
    let inv = ctx.inverse_table()?;
    let roots = RootTable::new(c);
    Ok(kloosterman_with(m, n, &inv, &roots))
}

/// Enumeration with caller-supplied inverse and root tables (same modulus).
pub fn kloosterman_with(m: i64, n: i64, inv: &[u64], roots: &RootTable) -> f64 {
    let c = roots.modulus();
    if c == 1 {
        return 1.0;
    }
    let (mr, nr) = (reduce(m, c), reduce(n, c));
    let mut acc = Pairwise::complex();
    for x in 1..c {
        let xi = inv[x as usize];
        if xi == 0 {
            continue;
        }
        let phase = (arith::mul_mod(mr, x, c) + arith::mul_mod(nr, xi, c)) % c;
        acc.push(roots.get(phase));
    }
    let total = acc.total();
    debug_assert!(total.im.abs() <= IMAG_TOL * (c as f64).max(1.0));
    total.re
}

/// All values r -> S(a, r; c) for r in [0, c), via one length-c DFT.
pub fn kloosterman_row(a: i64, c: u64) -> Result<Vec<f64>> {
    if c == 0 {
        return Err(Error::Domain("Kloosterman modulus must be positive".into()));
    }
    if c > 200_000_000 {
        return Err(Error::Capacity(format!("Kloosterman row of length {c}")));
    }
    if c == 1 {
        return Ok(vec![1.0]);
    }
    let ctx = ModularContext::new(c)?;
    let ar = reduce(a, c);
    // S(a, r; c) = sum_{y unit} e(a * y^{-1} / c) e(r y / c)
    let mut buf = vec![Complex64::new(0.0, 0.0); c as usize];
    if c <= 50_000_000 {
        let inv = ctx.inverse_table()?;
        for y in 1..c {
            let yi = inv[y as usize];
            if yi != 0 {
                buf[y as usize] = unit_root(arith::mul_mod(ar, yi, c), c);
            }
        }
    } else {
        for y in 1..c {
            if ctx.is_unit(y) {
                let yi = arith::mod_inverse(y as i64, c)?;
                buf[y as usize] = unit_root(arith::mul_mod(ar, yi, c), c);
            }
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_inverse(c as usize).process(&mut buf);
    Ok(buf.into_iter().map(|z| z.re).collect())
}

/// Kloosterman sums to a prime modulus, S(b, r; q) = K(b r) for q not dividing b.
#[derive(Debug, Clone)]
pub struct PrimeKloosterman {
    q: u64,
    table: Vec<f64>,
}

impl PrimeKloosterman {
    pub fn new(q: u64) -> Result<Self> {
        if q < 2 || !is_prime_unchecked(q) {
            return Err(Error::Domain(format!("{q} is not prime")));
        }
        Ok(Self {
            q,
            table: kloosterman_row(1, q)?,
        })
    }

    /// S(b, r; q) for residues b, r.
    #[inline]
    pub fn value(&self, b: u64, r: u64) -> f64 {
        let (b, r) = (b % self.q, r % self.q);
        if b == 0 {
            if r == 0 {
                (self.q - 1) as f64
            } else {
                -1.0
            }
        } else {
            self.table[arith::mul_mod(b, r, self.q) as usize]
        }
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }
}

/// Ramanujan sum c_q(n) for prime q.
pub fn ramanujan_prime(n: u64, q: u64) -> f64 {
    if n % q == 0 {
        (q - 1) as f64
    } else {
        -1.0
    }
}

/// Quadratic Gauss sum sum_{x mod c} e((a x^2 + b x)/c) by enumeration.
pub fn gauss_quadratic(a: i64, b: i64, c: u64) -> Result<ComplexValue> {
    if c == 0 {
        return Err(Error::Domain("Gauss sum modulus must be positive".into()));
    }
    if c > KLOOSTERMAN_MAX_MODULUS {
        return Err(Error::Capacity(format!("Gauss sum modulus {c} too large")));
    }
    let roots = RootTable::new(c);
    let (ar, br) = (reduce(a, c), reduce(b, c));
    let mut acc = Pairwise::complex();
    for x in 0..c {
        let phase = (arith::mul_mod(ar, arith::mul_mod(x, x, c), c) + arith::mul_mod(br, x, c)) % c;
        acc.push(roots.get(phase));
    }
    Ok(ComplexValue::numeric(acc.total()))
}

/// Closed form eps_c sqrt(c) (a/c), valid for odd c, gcd(a, c) = 1, b = 0.
pub fn gauss_quadratic_closed(a: i64, b: i64, c: u64) -> Result<ComplexValue> {
    if c == 0 || c % 2 == 0 || b != 0 || gcd(reduce(a, c), c) != 1 {
        return Err(Error::Unsupported(format!(
            "closed Gauss sum needs odd c, gcd(a,c)=1, b=0 (a={a}, b={b}, c={c})"
        )));
    }
    let eps = if c % 4 == 1 { 0 } else { 1 };
    let jac = jacobi_unchecked(reduce(a, c), c) as i64;
    Ok(ComplexValue::exact(
        ExactTag::integer(jac)
            .mul(ExactTag::sqrt(c))
            .mul(ExactTag::unit(eps)),
    ))
}

/// sum over units b mod c2 of (b/c2) e(b delta / c2), by enumeration.
/// The explicit prime-power evaluation is attached as the exact tag.
pub fn salie_type_sum(delta: i64, c2: u64) -> Result<ComplexValue> {
    if c2 == 0 {
        return Err(Error::Domain("modulus must be positive".into()));
    }
    if c2 == 1 {
        return Ok(ComplexValue::exact(ExactTag::integer(1)));
    }
    if c2 % 2 == 0 {
        return Err(Error::Unsupported(format!(
            "Jacobi-twisted sum needs odd modulus, got {c2}"
        )));
    }
    if c2 > KLOOSTERMAN_MAX_MODULUS {
        return Err(Error::Capacity(format!("modulus {c2} too large")));
    }
    let roots = RootTable::new(c2);
    let d = reduce(delta, c2);
    let mut acc = Pairwise::complex();
    for b in 1..c2 {
        let chi = jacobi_unchecked(b, c2);
        if chi == 0 {
            continue;
        }
        let z = roots.get(arith::mul_mod(b, d, c2));
        acc.push(if chi > 0 { z } else { -z });
    }
    let z = acc.total();
    Ok(ComplexValue {
        re: z.re,
        im: z.im,
        exact: Some(salie_type_exact(delta, c2)),
    })
}

/// Explicit value of the Jacobi-twisted Ramanujan-type sum for odd c2,
/// assembled prime power by prime power.
pub fn salie_type_exact(delta: i64, c2: u64) -> ExactTag {
    assert!(c2 % 2 == 1);
    let mut tag = ExactTag::integer(1);
    for (p, e) in factorize(c2) {
        let pe = p.pow(e);
        let cofactor = c2 / pe;
        let twist = arith::mod_inverse(cofactor as i64, pe).expect("coprime");
        let d = arith::mul_mod(reduce(delta, pe), twist, pe);
        tag = tag.mul(prime_power_twisted(d, p, e));
        if tag.is_zero() {
            return ExactTag::ZERO;
        }
    }
    tag
}

// sum_{b mod p^e, unit} (b/p)^e e(b d / p^e), d reduced mod p^e
fn prime_power_twisted(d: u64, p: u64, e: u32) -> ExactTag {
    let pe = p.pow(e);
    let pe1 = p.pow(e - 1);
    if e % 2 == 0 {
        // trivial character: Ramanujan sum
        if d % pe == 0 {
            ExactTag::integer((pe - pe1) as i64)
        } else if d % pe1 == 0 {
            ExactTag::integer(-(pe1 as i64))
        } else {
            ExactTag::ZERO
        }
    } else if d % pe1 != 0 || d % pe == 0 {
        ExactTag::ZERO
    } else {
        let dp = (d / pe1) % p;
        let chi = jacobi_unchecked(dp, p) as i64;
        ExactTag::integer(chi * pe1 as i64)
            .mul(ExactTag::sqrt(p))
            .mul(ExactTag::unit(if p % 4 == 1 { 0 } else { 1 }))
    }
}

/// The tuple (m, n, c, q) feeding the composite character sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSumParams {
    pub m: u64,
    pub n: i64,
    pub c: u64,
    pub q: u64,
}

impl CharSumParams {
    pub fn new(m: u64, n: i64, c: u64, q: u64) -> Result<Self> {
        if m == 0 || c == 0 {
            return Err(Error::Domain("m and c must be positive".into()));
        }
        if q < 2 || !is_prime_unchecked(q) {
            return Err(Error::Domain(format!("q = {q} is not prime")));
        }
        Ok(Self { m, n, c, q })
    }

    /// 4m - n^2.
    pub fn delta(&self) -> i64 {
        4 * self.m as i64 - self.n * self.n
    }

    pub fn modulus(&self) -> u64 {
        self.c * self.q
    }
}

fn check_brute_capacity(modulus: u64) -> Result<()> {
    if modulus > CHARSUM_BRUTE_MAX_MODULUS {
        return Err(Error::Capacity(format!(
            "brute-force character sum limited to cq <= {CHARSUM_BRUTE_MAX_MODULUS}, got {modulus}"
        )));
    }
    Ok(())
}

/// sum_{a mod cq} S(m, a^2; cq) e(a n / cq) as a literal double loop.
pub fn charsum_o1_bruteforce(p: &CharSumParams) -> Result<ComplexValue> {
    let modulus = p.modulus();
    check_brute_capacity(modulus)?;
    let ctx = ModularContext::new(modulus)?;
    let inv = ctx.inverse_table()?;
    let roots = RootTable::new(modulus);
    let m = p.m % modulus;
    let n = reduce(p.n, modulus);
    let mut per_a = Vec::with_capacity(modulus as usize);
    for a in 0..modulus {
        let a2 = a * a % modulus;
        let shift = a * n % modulus;
        let mut acc = Pairwise::complex();
        for b in 0..modulus {
            let bi = inv[b as usize];
            if bi == 0 && modulus > 1 {
                continue;
            }
            acc.push(roots.get((m * b + a2 * bi + shift) % modulus));
        }
        per_a.push(acc.total());
    }
    Ok(ComplexValue::numeric(pairwise_sum_complex(&per_a)))
}

/// The same sum for all frequencies n in `ns`, sharing the Kloosterman values.
/// Each value is enumerated exactly as in [`charsum_o1_bruteforce`].
pub fn charsum_o1_bruteforce_batch(m: u64, ns: &[i64], c: u64, q: u64) -> Result<Vec<Complex64>> {
    let modulus = c * q;
    check_brute_capacity(modulus)?;
    let ctx = ModularContext::new(modulus)?;
    let inv = ctx.inverse_table()?;
    let roots = RootTable::new(modulus);
    let m = m % modulus;
    // S(m, s; L) for every square residue s that occurs
    let mut kl = vec![None::<Complex64>; modulus as usize];
    let mut per_n: Vec<Vec<Complex64>> = vec![Vec::with_capacity(modulus as usize); ns.len()];
    for a in 0..modulus {
        let a2 = (a * a % modulus) as usize;
        let s = *kl[a2].get_or_insert_with(|| {
            let mut acc = Pairwise::complex();
            for b in 0..modulus {
                let bi = inv[b as usize];
                if bi == 0 && modulus > 1 {
                    continue;
                }
                acc.push(roots.get((m * b + a2 as u64 * bi) % modulus));
            }
            acc.total()
        });
        for (k, &n) in ns.iter().enumerate() {
            per_n[k].push(s * roots.get(a * reduce(n, modulus) % modulus));
        }
    }
    Ok(per_n.iter().map(|v| pairwise_sum_complex(v)).collect())
}

/// Explicit evaluation of the first character sum for cq = 1 (mod 4),
/// gcd(c, q) = 1:
///
/// eps_{q c1} q c1 sqrt(c2) (delta / c1 q) * r * T(delta, c2)
///
/// where c = c1 c2 is the split of c relative to delta = 4m - n^2,
/// r = (c2 / c1 q)(c1 q / c2) is the reciprocity sign, and T is
/// [`salie_type_sum`]. Returns an exact zero when the split is invalid.
pub fn charsum_o1_closed(p: &CharSumParams) -> Result<ComplexValue> {
    let (c, q) = (p.c, p.q);
    if (c * q) % 4 != 1 || gcd(c, q) != 1 {
        return Err(Error::Unsupported(format!(
            "closed form needs cq = 1 (mod 4) and gcd(c, q) = 1 (c={c}, q={q})"
        )));
    }
    let delta = p.delta();
    let split = arith::powerful_split(c, delta)?;
    if !split.valid {
        return Ok(ComplexValue::exact(ExactTag::ZERO));
    }
    let c1q = split.c1 * q;
    let jac = jacobi_unchecked(reduce(delta, c1q), c1q) as i64;
    if jac == 0 {
        return Ok(ComplexValue::exact(ExactTag::ZERO));
    }
    let salie = salie_type_sum(delta, split.c2)?;
    let inner = salie.exact.expect("salie sum carries an exact tag");
    let tag = ExactTag::integer(jac * reciprocity_sign(split.c2, c1q) * c1q as i64)
        .mul(ExactTag::unit(if c1q % 4 == 1 { 0 } else { 1 }))
        .mul(ExactTag::sqrt(split.c2))
        .mul(inner);
    let eps = epsilon_factor(c1q)?;
    let numeric = eps
        * (c1q as f64)
        * (split.c2 as f64).sqrt()
        * (jac * reciprocity_sign(split.c2, c1q)) as f64
        * salie.value();
    let exact_z = tag.to_complex();
    if (exact_z - numeric).norm() > 1e-9 * numeric.norm().max(1.0) {
        return Err(Error::Mismatch(format!(
            "explicit and enumerated inner sums disagree for {p:?}"
        )));
    }
    Ok(ComplexValue {
        re: numeric.re,
        im: numeric.im,
        exact: Some(tag),
    })
}

/// The closed form exactly as printed, without the reciprocity sign. Kept so
/// the verification sweep can report where the sign matters.
pub fn charsum_o1_closed_unsigned(p: &CharSumParams) -> Result<ComplexValue> {
    let v = charsum_o1_closed(p)?;
    let split = arith::powerful_split(p.c, p.delta())?;
    let r = reciprocity_sign(split.c2, split.c1 * p.q) as f64;
    Ok(ComplexValue {
        re: v.re * r,
        im: v.im * r,
        exact: v.exact.map(|t| ExactTag {
            coefficient: t.coefficient * r as i64,
            ..t
        }),
    })
}

/// Outcome of comparing the closed form with enumeration over a box of tuples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharsumSweep {
    pub tuples: u64,
    pub mismatches: u64,
    /// Tuples where the closed form is an exact zero.
    pub exact_zeros: u64,
    /// Tuples the closed form without the reciprocity sign gets wrong.
    pub unsigned_wrong: u64,
    pub max_rel_err: f64,
    pub first_mismatch: Option<CharSumParams>,
}

/// Compare [`charsum_o1_closed`] with enumeration for every m <= max_m,
/// |n| <= max_n and every (c, q) with q prime, gcd(c, q) = 1,
/// cq = 1 (mod 4) and cq <= max_cq. Enumeration uses one Kloosterman row
/// per (m, c, q). Nonzero values must agree to `rel_tol`; exact zeros
/// must be matched by enumerated values below `rel_tol * (cq)^{3/2}`.
pub fn charsum_sweep(max_m: u64, max_n: i64, max_cq: u64, rel_tol: f64) -> Result<CharsumSweep> {
    use rayon::prelude::*;
    if max_cq > CHARSUM_BRUTE_MAX_MODULUS {
        return Err(Error::Capacity(format!(
            "sweep limited to cq <= {CHARSUM_BRUTE_MAX_MODULUS}, got {max_cq}"
        )));
    }
    let mut pairs = Vec::new();
    for q in arith::primes_in(2, max_cq) {
        for c in 1..=max_cq / q {
            if (c * q) % 4 == 1 && gcd(c, q) == 1 {
                pairs.push((c, q));
            }
        }
    }
    let parts: Vec<CharsumSweep> = pairs
        .par_iter()
        .map(|&(c, q)| {
            let modulus = c * q;
            let roots = RootTable::new(modulus);
            let mut out = CharsumSweep {
                tuples: 0,
                mismatches: 0,
                exact_zeros: 0,
                unsigned_wrong: 0,
                max_rel_err: 0.0,
                first_mismatch: None,
            };
            for m in 1..=max_m {
                let row = kloosterman_row(m as i64, modulus)?;
                for n in -max_n..=max_n {
                    let nr = reduce(n, modulus);
                    let mut acc = Pairwise::complex();
                    for a in 0..modulus {
                        let s = row[(a * a % modulus) as usize];
                        acc.push(roots.get(a * nr % modulus) * s);
                    }
                    let brute = acc.total();
                    let p = CharSumParams::new(m, n, c, q)?;
                    let closed = charsum_o1_closed(&p)?;
                    let unsigned = charsum_o1_closed_unsigned(&p)?;
                    out.tuples += 1;
                    let ok = if closed.is_exact_zero() {
                        out.exact_zeros += 1;
                        brute.norm() <= rel_tol * (modulus as f64).powf(1.5)
                    } else {
                        let err = (brute - closed.value()).norm() / closed.norm();
                        out.max_rel_err = out.max_rel_err.max(err);
                        err <= rel_tol
                    };
                    if !ok {
                        out.mismatches += 1;
                        out.first_mismatch.get_or_insert(p);
                    }
                    if (brute - unsigned.value()).norm() > rel_tol * unsigned.norm().max(1.0) {
                        out.unsigned_wrong += 1;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut total = CharsumSweep {
        tuples: 0,
        mismatches: 0,
        exact_zeros: 0,
        unsigned_wrong: 0,
        max_rel_err: 0.0,
        first_mismatch: None,
    };
    for p in parts {
        total.tuples += p.tuples;
        total.mismatches += p.mismatches;
        total.exact_zeros += p.exact_zeros;
        total.unsigned_wrong += p.unsigned_wrong;
        total.max_rel_err = total.max_rel_err.max(p.max_rel_err);
        if total.first_mismatch.is_none() {
            total.first_mismatch = p.first_mismatch;
        }
    }
    Ok(total)
}

/// (a/b)(b/a) for odd coprime positive a, b.
fn reciprocity_sign(a: u64, b: u64) -> i64 {
    if a % 4 == 3 && b % 4 == 3 {
        -1
    } else {
        1
    }
}

/// sum_{a mod c} S(m, q a^2; cq) e(a n / c) as a literal double loop.
pub fn charsum_o2_bruteforce(m: u64, n: i64, c: u64, q: u64) -> Result<ComplexValue> {
    let p = CharSumParams::new(m, n, c, q)?;
    let modulus = p.modulus();
    check_brute_capacity(modulus)?;
    let ctx = ModularContext::new(modulus)?;
    let inv = ctx.inverse_table()?;
    let roots_big = RootTable::new(modulus);
    let roots_c = RootTable::new(c);
    let nr = reduce(n, c);
    let mut per_a = Vec::with_capacity(c as usize);
    for a in 0..c {
        let second = q * (a * a % c) % modulus;
        let mut acc = Pairwise::complex();
        for b in 0..modulus {
            let bi = inv[b as usize];
            if bi == 0 && modulus > 1 {
                continue;
            }
            acc.push(roots_big.get((m % modulus * b + second * bi) % modulus));
        }
        per_a.push(acc.total() * roots_c.get(a * nr % c));
    }
    Ok(ComplexValue::numeric(pairwise_sum_complex(&per_a)))
}
