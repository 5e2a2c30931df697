//! Quadratic large-sieve bookkeeping: the representation count alpha(d, u)
//! and the character double sum over squarefree d and c1, compared with the
//! (D + C1) C1 shape of the large-sieve bound.
//!
//! Ranges: d runs over [1, D] and c1 over [C1, 2 C1). Only odd c1 enter,
//! since both the Jacobi symbol (d/c1) and the factor eps_{q c1} need an odd
//! modulus.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{epsilon_factor, factorize, gcd, is_powerful, is_prime, is_squarefree, jacobi_symbol};
use crate::error::{Error, Result};
use crate::sum::pairwise_sum;

/// Direct-evaluation budget for D * C1.
pub const MAX_TERM_PAIRS: u64 = 1_000_000_000;

/// One point of the large-sieve scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SieveScanConfig {
    /// d ranges over squarefree integers in [1, d_max].
    pub d_max: u64,
    /// c1 ranges over odd squarefree integers in [c1, 2 c1).
    pub c1: u64,
    pub q: u64,
    /// c1 must be coprime to u.
    pub u: u64,
}

impl SieveScanConfig {
    pub fn new(d_max: u64, c1: u64, q: u64, u: u64) -> Result<Self> {
        let cfg = SieveScanConfig { d_max, c1, q, u };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_max == 0 || self.c1 == 0 || self.u == 0 {
            return Err(Error::Domain(format!(
                "D, C1 and u must be positive (got D={}, C1={}, u={})",
                self.d_max, self.c1, self.u
            )));
        }
        if !is_prime(self.q)? {
            return Err(Error::Domain(format!("q = {} is not prime", self.q)));
        }
        if self.d_max.saturating_mul(self.c1) > MAX_TERM_PAIRS {
            return Err(Error::Capacity(format!(
                "D * C1 = {} exceeds the direct budget {MAX_TERM_PAIRS}",
                self.d_max as u128 * self.c1 as u128
            )));
        }
        Ok(())
    }
}

/// Number of triples (n, m, c2) with |n| <= n_cal, M <= m < 2M,
/// 4m - n^2 = d u^2, c2 powerful with every prime factor dividing d u^2,
/// and lo <= c2 < hi.
pub fn alpha_count(d: u64, u: u64, m_size: u64, n_cal: u64, c2_range: (u64, u64)) -> Result<u64> {
    if d == 0 || !is_squarefree(d) {
        return Err(Error::Domain(format!("d = {d} must be squarefree and positive")));
    }
    if u == 0 || m_size == 0 {
        return Err(Error::Domain("u and M must be positive".into()));
    }
    let target = (d as u128) * (u as u128) * (u as u128);
    // solutions (n, m): 4m = n^2 + d u^2 with m in [M, 2M)
    let mut solutions = 0u64;
    for n in -(n_cal as i128)..=(n_cal as i128) {
        let four_m = n * n + target as i128;
        if four_m % 4 != 0 {
            continue;
        }
        let m = four_m / 4;
        if m >= m_size as i128 && m < 2 * m_size as i128 {
            solutions += 1;
        }
    }
    if solutions == 0 {
        return Ok(0);
    }
    let support: Vec<u64> = factorize(d * u).into_iter().map(|(p, _)| p).collect();
    let (lo, hi) = c2_range;
    let moduli = (lo.max(1)..hi)
        .filter(|&c2| is_powerful(c2) && factorize(c2).iter().all(|(p, _)| support.contains(p)))
        .count() as u64;
    Ok(solutions * moduli)
}

/// The odd squarefree c1 in [C1, 2 C1) coprime to u, with eps_{q c1}.
fn c1_terms(cfg: &SieveScanConfig) -> Result<Vec<(u64, Complex64)>> {
    (cfg.c1..2 * cfg.c1)
        .filter(|&c| c % 2 == 1 && is_squarefree(c) && gcd(c, cfg.u) == 1)
        .map(|c| Ok((c, epsilon_factor(cfg.q * c)?)))
        .collect()
}

/// sum over squarefree d <= D of |sum_{c1} eps_{q c1} (d / c1)|^2.
pub fn character_double_sum(cfg: &SieveScanConfig) -> Result<f64> {
    cfg.validate()?;
    let terms = c1_terms(cfg)?;
    let per_d: Vec<f64> = (1..cfg.d_max as usize + 1)
        .into_par_iter()
        .with_min_len(64)
        .map(|d| {
            let d = d as u64;
            if !is_squarefree(d) {
                return Ok(0.0);
            }
            let mut inner = Complex64::new(0.0, 0.0);
            for &(c, eps) in &terms {
                inner += eps * f64::from(jacobi_symbol(d as i64, c)?);
            }
            Ok(inner.norm_sqr())
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&per_d))
}

/// character_double_sum / ((D + C1) C1).
pub fn sieve_ratio(cfg: &SieveScanConfig) -> Result<f64> {
    let s = character_double_sum(cfg)?;
    Ok(s / ((cfg.d_max + cfg.c1) as f64 * cfg.c1 as f64))
}

/// The polylog slack log^2(2 + D C1) that stands in for q^eps.
pub fn log_slack(d_max: u64, c1: u64) -> f64 {
    (2.0 + d_max as f64 * c1 as f64).ln().powi(2)
}

/// One row of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SieveRow {
    pub d_max: u64,
    pub c1: u64,
    pub q: u64,
    pub u: u64,
    pub sum: f64,
    pub ratio: f64,
}

impl SieveRow {
    /// ratio / log^2(2 + D C1).
    pub fn normalized(&self) -> f64 {
        self.ratio / log_slack(self.d_max, self.c1)
    }
}

/// Evaluate every (D, C1, q) of the grid, in that nesting order.
pub fn sieve_scan(ds: &[u64], c1s: &[u64], qs: &[u64], u: u64) -> Result<Vec<SieveRow>> {
    let mut rows = Vec::with_capacity(ds.len() * c1s.len() * qs.len());
    for &d_max in ds {
        for &c1 in c1s {
            for &q in qs {
                let cfg = SieveScanConfig::new(d_max, c1, q, u)?;
                let sum = character_double_sum(&cfg)?;
                let ratio = sum / ((d_max + c1) as f64 * c1 as f64);
                rows.push(SieveRow { d_max, c1, q, u, sum, ratio });
            }
        }
    }
    Ok(rows)
}

pub const SIEVE_CSV_HEADER: [&str; 6] = ["D", "C1", "q", "u", "sum", "ratio"];

pub fn write_sieve_csv<W: std::io::Write>(out: W, rows: &[SieveRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SIEVE_CSV_HEADER).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.d_max.to_string(),
            r.c1.to_string(),
            r.q.to_string(),
            r.u.to_string(),
            format!("{:e}", r.sum),
            format!("{:e}", r.ratio),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // straightforward enumeration of the same double sum
    fn naive(d_max: u64, c1: u64, q: u64, u: u64) -> f64 {
        let mut total = 0.0;
        for d in 1..=d_max {
            if !is_squarefree(d) {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for c in c1..2 * c1 {
                if c % 2 == 0 || !is_squarefree(c) || gcd(c, u) != 1 {
                    continue;
                }
                let chi = f64::from(jacobi_symbol(d as i64, c).unwrap());
                if (q * c) % 4 == 1 {
                    re += chi;
                } else {
                    im += chi;
                }
            }
            total += re * re + im * im;
        }
        total
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_count(3, 1, 1, 3, (1, 2)).unwrap(), 2);
        // 4m - n^2 = 5 has no solution with m in [1, 2)
        assert_eq!(alpha_count(5, 1, 1, 3, (1, 2)).unwrap(), 0);
        // c2 = 9 is powerful and supported on 3
        assert_eq!(alpha_count(3, 1, 1, 3, (1, 10)).unwrap(), 4);
        assert!(alpha_count(4, 1, 1, 3, (1, 2)).is_err());
    }

    #[test]
    fn alpha_envelope() {
        for d in [1u64, 2, 3, 5, 6, 7, 10, 11] {
            let powerful = (1..200).filter(|&c| is_powerful(c)).count() as u64;
            for m in [1u64, 5, 30, 100] {
                let a = alpha_count(d, 1, m, 25, (1, 200)).unwrap();
                assert!(a <= 51 * powerful);
            }
        }
    }

    #[test]
    fn single_modulus_counts_nonzero_symbols() {
        // C1 = 3 gives c1 in {3, 5}; use C1 = 7 with [7, 14) and u killing all but 7
        let cfg = SieveScanConfig::new(40, 7, 101, 3 * 5 * 11 * 13).unwrap();
        let expected = (1..=40u64)
            .filter(|&d| is_squarefree(d) && jacobi_symbol(d as i64, 7).unwrap() != 0)
            .count() as f64;
        assert_eq!(character_double_sum(&cfg).unwrap(), expected);
    }

    #[test]
    fn golden_point_matches_enumeration() {
        let cfg = SieveScanConfig::new(50, 50, 101, 1).unwrap();
        assert_eq!(character_double_sum(&cfg).unwrap(), naive(50, 50, 101, 1));
    }

    #[test]
    fn depends_on_q_mod_four_only() {
        let a = character_double_sum(&SieveScanConfig::new(60, 40, 101, 1).unwrap()).unwrap();
        let b = character_double_sum(&SieveScanConfig::new(60, 40, 13, 1).unwrap()).unwrap();
        let c = character_double_sum(&SieveScanConfig::new(60, 40, 103, 1).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, naive(60, 40, 101, 1));
        assert_eq!(c, naive(60, 40, 103, 1));
    }

    #[test]
    fn validation() {
        assert!(SieveScanConfig::new(0, 5, 101, 1).is_err());
        assert!(SieveScanConfig::new(5, 5, 100, 1).is_err());
        assert!(SieveScanConfig::new(100_000, 100_000, 101, 1).unwrap_err().is_capacity());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let rows = sieve_scan(&[10, 20], &[5], &[101], 1).unwrap();
        let mut buf = Vec::new();
        write_sieve_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("D,C1,q,u,sum,ratio"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn nonnegative_and_monotone_in_d(d in 1u64..80, c1 in 1u64..40, extra in 0u64..40) {
            let a = character_double_sum(&SieveScanConfig::new(d, c1, 101, 1).unwrap()).unwrap();
            let b = character_double_sum(&SieveScanConfig::new(d + extra, c1, 101, 1).unwrap()).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!(b >= a);
        }

        #[test]
        fn depends_on_prime_support_of_u(d in 1u64..60, c1 in 1u64..40, e in 1u32..3) {
            let a = character_double_sum(&SieveScanConfig::new(d, c1, 103, 15).unwrap()).unwrap();
            let b = character_double_sum(&SieveScanConfig::new(d, c1, 103, 3u64.pow(e) * 5).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn alpha_within_envelope(d in 1u64..50, m in 1u64..60, ncal in 1u64..30) {
            prop_assume!(is_squarefree(d));
            let powerful = (1..100).filter(|&c| is_powerful(c)).count() as u64;
            let a = alpha_count(d, 1, m, ncal, (1, 100)).unwrap();
            prop_assert!(a <= (2 * ncal + 1) * powerful);
        }
    }
}
