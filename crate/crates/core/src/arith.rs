//! Exact integer and modular arithmetic.
//!
//! Everything here works on machine integers with `u128` intermediates; moduli
//! on exact paths are bounded by [`MAX_EXACT_MODULUS`].

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Largest modulus accepted by [`ModularContext`].
pub const MAX_EXACT_MODULUS: u64 = 1 << 40;

/// Largest input accepted by [`is_prime`].
pub const MAX_PRIMALITY_INPUT: u64 = 1 << 62;

/// Trial division bound used before switching to Pollard rho.
const TRIAL_BOUND: u64 = 1 << 20;

#[inline]
pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Canonical residue of a signed integer modulo `m`.
#[inline]
pub fn reduce(a: i64, m: u64) -> u64 {
    (a as i128).rem_euclid(m as i128) as u64
}

/// Deterministic Miller-Rabin. The first twelve primes as witnesses are
/// sufficient for every n < 3.3 * 10^24, far beyond the accepted range.
pub fn is_prime(n: u64) -> Result<bool> {
    if n < 2 || n > MAX_PRIMALITY_INPUT {
        return Err(Error::Range(format!(
            "is_prime expects 2 <= n <= 2^62, got {n}"
        )));
    }
    Ok(is_prime_unchecked(n))
}

pub(crate) fn is_prime_unchecked(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &WITNESSES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Jacobi symbol (a/n) for odd positive n. Negative or large `a` is first
/// reduced to its canonical residue in [0, n).
pub fn jacobi_symbol(a: i64, n: u64) -> Result<i8> {
    if n == 0 || n % 2 == 0 {
        return Err(Error::Domain(format!(
            "Jacobi symbol needs an odd positive modulus, got {n}"
        )));
    }
    Ok(jacobi_unchecked(reduce(a, n), n))
}

/// Jacobi symbol for `0 <= a` and odd `n`, no validation.
pub(crate) fn jacobi_unchecked(a: u64, n: u64) -> i8 {
    let mut a = a % n;
    let mut n = n;
    let mut t = 1i8;
    while a != 0 {
        let tz = a.trailing_zeros();
        a >>= tz;
        let r = n % 8;
        if tz % 2 == 1 && (r == 3 || r == 5) {
            t = -t;
        }
        if a % 4 == 3 && n % 4 == 3 {
            t = -t;
        }
        std::mem::swap(&mut a, &mut n);
        a %= n;
    }
    if n == 1 {
        t
    } else {
        0
    }
}

/// The fourth-root-of-unity normalisation of quadratic Gauss sums:
/// 1 for d = 1 (mod 4) and i for d = 3 (mod 4).
pub fn epsilon_factor(d: u64) -> Result<Complex64> {
    if d % 2 == 0 {
        return Err(Error::Domain(format!("epsilon factor needs odd d, got {d}")));
    }
    Ok(if d % 4 == 1 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(0.0, 1.0)
    })
}

/// Inverse of `a` modulo `c`, in [0, c).
pub fn mod_inverse(a: i64, c: u64) -> Result<u64> {
    if c == 0 {
        return Err(Error::Domain("modulus must be positive".into()));
    }
    if c == 1 {
        return Ok(0);
    }
    let a_red = reduce(a, c);
    let (g, x, _) = ext_gcd(a_red as i128, c as i128);
    if g != 1 {
        return Err(Error::NotInvertible { a, modulus: c });
    }
    Ok(x.rem_euclid(c as i128) as u64)
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut old_r, mut r) = (a, b);
    let (mut old_s, mut s) = (1i128, 0i128);
    let (mut old_t, mut t) = (0i128, 1i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
        (old_t, t) = (t, old_t - q * t);
    }
    (old_r, old_s, old_t)
}

/// Prime factorisation as sorted (prime, exponent) pairs. Trial division up
/// to 2^20 with a 2-3-5 wheel, then Pollard rho on the cofactor.
pub fn factorize(n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    if n <= 1 {
        return out;
    }
    let mut n = n;
    for p in [2u64, 3, 5] {
        let mut e = 0;
        while n % p == 0 {
            n /= p;
            e += 1;
        }
        if e > 0 {
            out.push((p, e));
        }
    }
    const WHEEL: [u64; 8] = [4, 2, 4, 2, 4, 6, 2, 6];
    let mut p = 7u64;
    let mut w = 0;
    while p <= TRIAL_BOUND && p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += WHEEL[w];
        w = (w + 1) % 8;
    }
    if n > 1 {
        if p * p > n {
            out.push((n, 1));
        } else {
            let mut rest = Vec::new();
            split_large(n, &mut rest);
            rest.sort_unstable();
            for q in rest {
                match out.last_mut() {
                    Some((p, e)) if *p == q => *e += 1,
                    _ => out.push((q, 1)),
                }
            }
        }
    }
    out.sort_unstable();
    out
}

fn split_large(n: u64, out: &mut Vec<u64>) {
    if n == 1 {
        return;
    }
    if is_prime_unchecked(n) {
        out.push(n);
        return;
    }
    let d = pollard_rho(n);
    split_large(d, out);
    split_large(n / d, out);
}

fn pollard_rho(n: u64) -> u64 {
    if n % 2 == 0 {
        return 2;
    }
    // Brent's variant with fixed seeds, deterministic across runs
    for c in 1u64.. {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut x, mut y, mut d) = (2u64, 2u64, 1u64);
        while d == 1 {
            x = f(x);
            y = f(f(y));
            d = gcd(x.abs_diff(y), n);
        }
        if d != n {
            return d;
        }
    }
    unreachable!()
}

pub fn euler_phi(n: u64) -> u64 {
    factorize(n)
        .iter()
        .map(|&(p, e)| p.pow(e - 1) * (p - 1))
        .product()
}

pub fn divisor_count(n: u64) -> u64 {
    factorize(n).iter().map(|&(_, e)| e as u64 + 1).product()
}

pub fn is_squarefree(n: u64) -> bool {
    factorize(n).iter().all(|&(_, e)| e == 1)
}

/// True when every prime factor appears at least twice (1 counts as powerful).
pub fn is_powerful(n: u64) -> bool {
    factorize(n).iter().all(|&(_, e)| e >= 2)
}

/// Möbius function.
pub fn mobius(n: u64) -> i64 {
    let f = factorize(n);
    if f.iter().any(|&(_, e)| e > 1) {
        0
    } else if f.len() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// A modulus together with its factorisation and unit count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModularContext {
    modulus: u64,
    factorization: Vec<(u64, u32)>,
    unit_count: u64,
}

impl ModularContext {
    pub fn new(modulus: u64) -> Result<Self> {
        if modulus == 0 || modulus > MAX_EXACT_MODULUS {
            return Err(Error::Range(format!(
                "modulus must lie in [1, 2^40], got {modulus}"
            )));
        }
        let factorization = factorize(modulus);
        let unit_count = factorization
            .iter()
            .map(|&(p, e)| p.pow(e - 1) * (p - 1))
            .product();
        Ok(Self {
            modulus,
            factorization,
            unit_count,
        })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn factorization(&self) -> &[(u64, u32)] {
        &self.factorization
    }

    pub fn unit_count(&self) -> u64 {
        self.unit_count
    }

    pub fn is_unit(&self, a: u64) -> bool {
        self.factorization.iter().all(|&(p, _)| a % p != 0)
    }

    pub fn divisor_count(&self) -> u64 {
        self.factorization.iter().map(|&(_, e)| e as u64 + 1).product()
    }

    /// Table of inverses: entry `x` holds x^{-1} mod c for units, 0 otherwise.
    pub fn inverse_table(&self) -> Result<Vec<u64>> {
        let c = self.modulus;
        if c > 50_000_000 {
            return Err(Error::Capacity(format!(
                "inverse table for modulus {c} exceeds 5e7 entries"
            )));
        }
        let c_usize = c as usize;
        let mut inv = vec![0u64; c_usize];
        if c == 1 {
            return Ok(inv);
        }
        for x in 1..c {
            if inv[x as usize] != 0 || !self.is_unit(x) {
                continue;
            }
            let y = mod_inverse(x as i64, c).expect("unit");
            inv[x as usize] = y;
            inv[y as usize] = x;
        }
        Ok(inv)
    }
}

/// Decomposition c = c1 * c2 relative to a discriminant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SquarefreePowerfulSplit {
    /// Part of c coprime to the discriminant.
    pub c1: u64,
    /// Part of c supported on primes dividing the discriminant.
    pub c2: u64,
    pub discriminant: i64,
    /// c1 squarefree and c2 powerful.
    pub valid: bool,
}

/// Split c into the part coprime to `delta` and the part supported on
/// primes dividing `delta`; flag whether the first is squarefree and the
/// second powerful.
pub fn powerful_split(c: u64, delta: i64) -> Result<SquarefreePowerfulSplit> {
    if c == 0 {
        return Err(Error::Domain("powerful_split needs c >= 1".into()));
    }
    let f = factorize(c);
    if delta == 0 {
        return Ok(SquarefreePowerfulSplit {
            c1: 1,
            c2: c,
            discriminant: 0,
            valid: f.iter().all(|&(_, e)| e >= 2),
        });
    }
    let d = delta.unsigned_abs();
    let (mut c1, mut c2) = (1u64, 1u64);
    let (mut c1_sqfree, mut c2_powerful) = (true, true);
    for &(p, e) in &f {
        let pe = p.pow(e);
        if d % p == 0 {
            c2 *= pe;
            c2_powerful &= e >= 2;
        } else {
            c1 *= pe;
            c1_sqfree &= e == 1;
        }
    }
    Ok(SquarefreePowerfulSplit {
        c1,
        c2,
        discriminant: delta,
        valid: c1_sqfree && c2_powerful,
    })
}

/// Primes in [lo, hi] by trial-checked Miller-Rabin.
pub fn primes_in(lo: u64, hi: u64) -> Vec<u64> {
    (lo.max(2)..=hi).filter(|&n| is_prime_unchecked(n)).collect()
}
