//! The twisted second moment of symmetric-square L-values over a basis of
//! level-q newforms, computed through the Petersson formula.
//!
//! S = 2 S1 + 2 i^k S2 where S_i = Delta_i + 2 pi i^{-k} O_i. The diagonal
//! terms are short weighted sums; the off-diagonal terms O_1, O_2 are
//! evaluated directly as Kloosterman-Bessel triple sums with certified
//! truncation bounds.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::afe::{residue_constants, LevelMode, MellinWeight, ResidueConstants, WeightKind, WeightSpec};
use crate::arith::{gcd, mod_inverse, mul_mod};
use crate::error::{Error, Result};
use crate::expsums::{charsum_o1_bruteforce_batch, kloosterman, kloosterman_row};
use crate::specfun::{bessel_j, gauss_legendre, ln_gamma, BesselTable};
use crate::sum::{pairwise_sum, Pairwise};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Order in which the per-modulus contributions are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SumOrder {
    #[default]
    Ascending,
    Descending,
}

/// Cutoffs for the n, m and c sums. `None` lets the engine pick the
/// smallest cut whose certified tail fits in its share of `tail_tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationPolicy {
    pub n_cut: Option<u64>,
    pub m_cut: Option<u64>,
    pub c_cut: Option<u64>,
    /// Exponent in the a-priori modulus range q^eta N M^{1/2} / q, reported
    /// next to the adaptive cut.
    pub eta: f64,
    pub tail_tol: f64,
    /// Hard ceiling on the modulus cut.
    pub c_cap: u64,
    /// Every cut is multiplied by this (2.0 doubles all truncations).
    pub cut_scale: f64,
    pub order: SumOrder,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            n_cut: None,
            m_cut: None,
            c_cut: None,
            eta: 0.01,
            tail_tol: 1e-10,
            c_cap: 100_000,
            cut_scale: 1.0,
            order: SumOrder::Ascending,
        }
    }
}

impl TruncationPolicy {
    pub fn validate(&self, spec: &WeightSpec) -> Result<()> {
        let q = spec.q;
        if !(self.tail_tol > 0.0) {
            return Err(Error::Domain(format!("tail_tol must be positive, got {}", self.tail_tol)));
        }
        if !(self.cut_scale >= 1.0) || !self.cut_scale.is_finite() {
            return Err(Error::Domain(format!("cut_scale must be >= 1, got {}", self.cut_scale)));
        }
        if !self.eta.is_finite() || self.c_cap == 0 {
            return Err(Error::Domain("eta must be finite and c_cap positive".into()));
        }
        if let Some(n) = self.n_cut {
            if n < q {
                return Err(Error::Domain(format!("n_cut = {n} is below q = {q}")));
            }
        }
        if let Some(m) = self.m_cut {
            if ((m as f64) < (q as f64).sqrt()) || m == 0 {
                return Err(Error::Domain(format!("m_cut = {m} is below sqrt(q)")));
            }
        }
        if self.c_cut == Some(0) {
            return Err(Error::Domain("c_cut must be at least 1".into()));
        }
        Ok(())
    }

    fn scale(&self, v: u64) -> u64 {
        ((v as f64) * self.cut_scale).ceil() as u64
    }
}

/// Where a sum was cut and how much work it took.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Cutoffs {
    pub n_cut: u64,
    pub m_cut: u64,
    pub c_cut: u64,
    /// The certified modulus cut exceeded `c_cap`; the tail bound covers the rest.
    pub c_capped: bool,
    /// The a-priori modulus range q^eta N M^{1/2} / q, for comparison.
    pub c_apriori: f64,
    /// Bessel arguments below this were dropped.
    pub x_negligible: f64,
    pub terms: u64,
}

/// One of the four pieces with its certified truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermValue {
    pub value: f64,
    pub tail_bound: f64,
    pub cutoffs: Cutoffs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBounds {
    pub delta1: f64,
    pub delta2: f64,
    pub o1: f64,
    pub o2: f64,
}

impl TailBounds {
    /// Bound on the error of the assembled total.
    pub fn total(&self) -> f64 {
        2.0 * (self.delta1 + 2.0 * PI * self.o1) + 2.0 * (self.delta2 + 2.0 * PI * self.o2)
    }
}

pub const OLDFORM_NOTE: &str = "old-form correction of size O(q^-1/4) not included";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub q: u64,
    pub k: u32,
    pub delta1: f64,
    pub delta2: f64,
    pub o1: f64,
    pub o2: f64,
    pub s1: f64,
    pub s2: f64,
    pub total: f64,
    pub tail_bounds: TailBounds,
    pub cutoffs: ReportCutoffs,
    pub residues: ResidueConstants,
    /// A_k log q + B_k.
    pub main_term: f64,
    pub note: String,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportCutoffs {
    pub delta1: Cutoffs,
    pub delta2: Cutoffs,
    pub o1: Cutoffs,
    pub o2: Cutoffs,
}

pub const CSV_HEADER: [&str; 9] = ["q", "k", "delta1", "delta2", "o1", "o2", "total", "tail_bound", "seconds"];

impl MomentReport {
    /// S = 2 S1 + 2 (-1)^{k/2} S2 with S_i = Delta_i + 2 pi (-1)^{k/2} O_i.
    pub fn assemble(k: u32, delta1: f64, delta2: f64, o1: f64, o2: f64) -> (f64, f64, f64) {
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let s1 = delta1 + 2.0 * PI * sign * o1;
        let s2 = delta2 + 2.0 * PI * sign * o2;
        (s1, s2, 2.0 * s1 + 2.0 * sign * s2)
    }

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.q.to_string(),
            self.k.to_string(),
            format!("{:e}", self.delta1),
            format!("{:e}", self.delta2),
            format!("{:e}", self.o1),
            format!("{:e}", self.o2),
            format!("{:e}", self.total),
            format!("{:e}", self.tail_bounds.total()),
            format!("{:.3}", self.wall_time),
        ]
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// Copy with the timing zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> MomentReport {
        MomentReport {
            wall_time: 0.0,
            ..self.clone()
        }
    }
}

/// Write reports as CSV with the standard header.
pub fn write_csv<W: std::io::Write>(out: W, reports: &[MomentReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(|e| Error::Io(e.to_string()))?;
    for r in reports {
        w.write_record(r.csv_row()).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OffDiag {
    First,
    Second,
}

/// Shared state for one (spec, policy): weight envelopes and the weighted
/// coefficient arrays a_n = V(n/q)/sqrt(n), b_m = W(m/sqrt q)/sqrt(m).
pub struct MomentEngine {
    spec: WeightSpec,
    pol: TruncationPolicy,
    v_env: MellinWeight,
    w_env: MellinWeight,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl MomentEngine {
    pub fn new(spec: &WeightSpec, pol: &TruncationPolicy) -> Result<Self> {
        if spec.mode != LevelMode::Prime {
            return Err(Error::Unsupported("the moment needs prime level".into()));
        }
        pol.validate(spec)?;
        Ok(MomentEngine {
            spec: *spec,
            pol: *pol,
            v_env: MellinWeight::new(WeightKind::V, spec, 1.0)?,
            w_env: MellinWeight::new(WeightKind::W, spec, 1.0)?,
            a: vec![0.0],
            b: vec![0.0],
        })
    }

    fn q(&self) -> f64 {
        self.spec.q as f64
    }

    fn ensure_a(&mut self, n: u64) -> Result<()> {
        if (self.a.len() as u64) > n {
            return Ok(());
        }
        let q = self.q();
        let v = MellinWeight::for_range(WeightKind::V, &self.spec, 1.0 / q, (n as f64 / q).max(1.0))?;
        let vals: Vec<f64> = (1..n as usize + 1)
            .into_par_iter()
            .with_min_len(256)
            .map(|j| v.eval(j as f64 / q).map(|x| x / (j as f64).sqrt()))
            .collect::<Result<_>>()?;
        self.a = std::iter::once(0.0).chain(vals).collect();
        Ok(())
    }

    fn ensure_b(&mut self, m: u64) -> Result<()> {
        if (self.b.len() as u64) > m {
            return Ok(());
        }
        let s = self.q().sqrt();
        let w = MellinWeight::for_range(WeightKind::W, &self.spec, 1.0 / s, (m as f64 / s).max(1.0))?;
        let vals: Vec<f64> = (1..m as usize + 1)
            .into_par_iter()
            .with_min_len(256)
            .map(|j| w.eval(j as f64 / s).map(|x| x / (j as f64).sqrt()))
            .collect::<Result<_>>()?;
        self.b = std::iter::once(0.0).chain(vals).collect();
        Ok(())
    }

    /// Delta_1 (`second = false`) or Delta_2: sum n^{-3/2} V(n/q) W(n^2 s)
    /// with s = q^{-1/2} or q^{1/2}.
    pub fn diagonal(&self, second: bool) -> Result<TermValue> {
        let q = self.q();
        let s = if second { q.sqrt() } else { 1.0 / q.sqrt() };
        let tol = self.pol.tail_tol;
        // for n > N: |V(n/q)| <= envelope(N/q), and the W factor is summed by its envelope
        let tail = |n: u64| self.v_env.envelope(n as f64 / q) * self.w_env.tail_bound_pow(n as f64, 1.0 / s, 2.0, -1.5);
        let auto = match self.pol.n_cut {
            Some(n) => n,
            None => {
                let mut n = 1u64;
                while tail(n) > tol {
                    n += 1 + n / 8;
                    if n > 10_000_000 {
                        return Err(Error::Capacity("diagonal cut beyond 1e7".into()));
                    }
                }
                n
            }
        };
        let n_cut = self.pol.scale(auto);
        let v = MellinWeight::for_range(WeightKind::V, &self.spec, 1.0 / q, (n_cut as f64 / q).max(1.0))?;
        let w_hi = (n_cut as f64).powi(2) * s;
        let w = MellinWeight::for_range(WeightKind::W, &self.spec, s.min(1.0), w_hi.max(1.0))?;
        let mut acc = Pairwise::real();
        for n in 1..=n_cut {
            let nf = n as f64;
            acc.push(nf.powf(-1.5) * v.eval(nf / q)? * w.eval(nf * nf * s)?);
        }
        Ok(TermValue {
            value: acc.total(),
            tail_bound: tail(n_cut),
            cutoffs: Cutoffs {
                n_cut,
                m_cut: n_cut * n_cut,
                terms: n_cut,
                ..Cutoffs::default()
            },
        })
    }

    fn geometry(&self, kind: OffDiag) -> Geometry {
        let q = self.q();
        let (denom, pref) = match kind {
            OffDiag::First => (q, 1.0),
            OffDiag::Second => (q.sqrt(), q.sqrt()),
        };
        let nu = self.spec.k - 1;
        Geometry {
            kind,
            q: self.spec.q,
            nu,
            denom,
            pref,
            mu: nu as f64 / (nu as f64 - 1.0),
            kappa_max: 2.0 / q.sqrt(),
        }
    }

    // Certified cuts for one off-diagonal term. Tail budget: a quarter each
    // for the n tail, the m tail, the c tail and the dropped small arguments.
    fn plan(&mut self, kind: OffDiag) -> Result<Plan> {
        let g = self.geometry(kind);
        let q = self.q();
        let sq = q.sqrt();
        let share = self.pol.tail_tol / 4.0;
        let (v_env, w_env) = (self.v_env.clone(), self.w_env.clone());
        let lin = g.mu * 2.0 * PI / g.denom;

        // full sums over m for the n tail
        let m0 = w_env.cutoff(sq, 0.5, 1.0, 1e-20)?.max(1);
        self.ensure_b(m0)?;
        let p_half: f64 = pairwise_sum(&(1..=m0).map(|m| self.b[m as usize].abs() * (m as f64).sqrt()).collect::<Vec<_>>())
            + w_env.tail_bound(m0 as f64, sq, 0.0);
        let p_one: f64 = pairwise_sum(&(1..=m0).map(|m| self.b[m as usize].abs() * m as f64).collect::<Vec<_>>())
            + w_env.tail_bound(m0 as f64, sq, 0.5);
        let base = g.pref * SQRT3 * g.kappa_max;
        let e_n = |n: u64| {
            base * (p_half * v_env.tail_bound(n as f64, q, -0.5) + lin * p_one * v_env.tail_bound(n as f64, q, 0.5))
        };
        let n_cut = self.pol.scale(match self.pol.n_cut {
            Some(n) => n,
            None => smallest_cut(self.spec.q, |n| e_n(n) <= share)?,
        });
        self.ensure_a(n_cut)?;
        let a = &self.a[..=n_cut as usize];
        let a0 = pairwise_sum(&a.iter().map(|x| x.abs()).collect::<Vec<_>>());
        let a1 = pairwise_sum(&a.iter().enumerate().map(|(n, x)| x.abs() * n as f64).collect::<Vec<_>>());
        let e_m = |m: u64| {
            base * (w_env.tail_bound(m as f64, sq, 0.0) * a0 + lin * w_env.tail_bound(m as f64, sq, 0.5) * a1)
        };
        let m_cut = self.pol.scale(match self.pol.m_cut {
            Some(m) => m,
            None => smallest_cut(sq.ceil() as u64, |m| e_m(m) <= share)?,
        });
        self.ensure_b(m_cut)?;

        // c tail from |J_nu(x)| <= (x/2)^nu / nu!, in log space
        let nu = g.nu as f64;
        let b = &self.b[..=m_cut as usize];
        let a = &self.a[..=n_cut as usize];
        let ln_bm = log_sum((1..=m_cut).map(|m| {
            let w = b[m as usize].abs() * g.kappa(m);
            w.ln() + 0.5 * nu * (m as f64).ln()
        }));
        let ln_an = log_sum((1..=n_cut).map(|n| a[n as usize].abs().ln() + nu * (n as f64).ln()));
        let ln_c_const = (g.pref * SQRT3).ln() - ln_gamma(nu + 1.0) + nu * (2.0 * PI / g.denom).ln() + ln_bm + ln_an
            - (nu - 1.0).ln();
        let e_c = |c: f64| (ln_c_const - (nu - 1.0) * c.ln()).exp();
        let (c_cut, c_capped) = match self.pol.c_cut {
            Some(c) => (self.pol.scale(c), false),
            None => {
                let want = ((ln_c_const - share.ln()) / (nu - 1.0)).exp().ceil().max(1.0);
                let scaled = (want * self.pol.cut_scale).ceil();
                if scaled > self.pol.c_cap as f64 {
                    (self.pol.c_cap, true)
                } else {
                    (scaled as u64, false)
                }
            }
        };

        // dropped arguments: every (c, m, n) below the table floor
        let bk: f64 = pairwise_sum(&(1..=m_cut).map(|m| b[m as usize].abs() * g.kappa(m)).collect::<Vec<_>>());
        let reach = g.pref * SQRT3 * c_cut as f64 * bk * a0;
        let log_floor = (share.ln() - reach.max(1e-300).ln()).clamp(-700.0, -20.0);
        let x_max = 4.0 * PI * n_cut as f64 * (m_cut as f64).sqrt() / g.denom;
        let table = BesselTable::new(g.nu, x_max * (1.0 + 1e-12) + 1.0, log_floor)?;
        let e_neg = reach * table.negligible_bound();

        let c_apriori = q.powf(self.pol.eta) * n_cut as f64 * (m_cut as f64).sqrt() / q;
        Ok(Plan {
            geometry: g,
            n_cut,
            m_cut,
            c_cut,
            c_capped,
            c_apriori,
            tail: e_n(n_cut) + e_m(m_cut) + e_c(c_cut as f64) + e_neg,
            table,
        })
    }

    pub fn offdiag(&mut self, second: bool) -> Result<TermValue> {
        let kind = if second { OffDiag::Second } else { OffDiag::First };
        let plan = self.plan(kind)?;
        let kernel = Kernel::new(&plan, &self.a, &self.b)?;
        let per_c: Vec<(f64, u64)> = (1..plan.c_cut as usize + 1)
            .into_par_iter()
            .map(|c| kernel.modulus_term(c as u64))
            .collect::<Result<_>>()?;
        let mut values: Vec<f64> = per_c.iter().map(|x| x.0).collect();
        if self.pol.order == SumOrder::Descending {
            values.reverse();
        }
        let terms = per_c.iter().map(|x| x.1).sum();
        Ok(TermValue {
            value: pairwise_sum(&values),
            tail_bound: plan.tail,
            cutoffs: Cutoffs {
                n_cut: plan.n_cut,
                m_cut: plan.m_cut,
                c_cut: plan.c_cut,
                c_capped: plan.c_capped,
                c_apriori: plan.c_apriori,
                x_negligible: plan.table.x_negligible(),
                terms,
            },
        })
    }
}

// smallest integer >= lo with ok(n), assuming ok is monotone
fn smallest_cut(lo: u64, ok: impl Fn(u64) -> bool) -> Result<u64> {
    let lo = lo.max(1);
    if ok(lo) {
        return Ok(lo);
    }
    let mut hi = lo;
    while !ok(hi) {
        hi = hi.saturating_mul(2);
        if hi > 1 << 36 {
            return Err(Error::Capacity("truncation point beyond 2^36".into()));
        }
    }
    let mut bad = hi / 2;
    while hi - bad > 1 {
        let mid = bad + (hi - bad) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            bad = mid;
        }
    }
    Ok(hi)
}

// log of sum exp(x_i), skipping -inf entries
fn log_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.filter(|x| x.is_finite()).collect();
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return f64::NEG_INFINITY;
    }
    top + pairwise_sum(&v.iter().map(|x| (x - top).exp()).collect::<Vec<_>>()).ln()
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    kind: OffDiag,
    q: u64,
    nu: u32,
    /// The Bessel argument is 4 pi n sqrt(m) / (c * denom).
    denom: f64,
    pref: f64,
    mu: f64,
    kappa_max: f64,
}

impl Geometry {
    // |S| / (cq) <= kappa(m) * tau(c) / sqrt(c) by the Weil bound
    fn kappa(&self, m: u64) -> f64 {
        let q = self.q as f64;
        let rm = (m as f64).sqrt();
        match self.kind {
            OffDiag::First => 2.0 * rm / q.sqrt(),
            OffDiag::Second if m % self.q != 0 => rm / q,
            OffDiag::Second => 2.0 * rm / q.sqrt(),
        }
    }
}

struct Plan {
    geometry: Geometry,
    n_cut: u64,
    m_cut: u64,
    c_cut: u64,
    c_capped: bool,
    c_apriori: f64,
    tail: f64,
    table: BesselTable,
}

// r -> u * r^2 mod l, stepped through consecutive r without multiplications
#[derive(Clone, Copy)]
struct QuadIndex {
    s: u64,
    d: u64,
    two_u: u64,
    l: u64,
}

impl QuadIndex {
    fn new(u: u64, n0: u64, l: u64) -> Self {
        let u = u % l;
        let r = n0 % l;
        QuadIndex {
            s: mul_mod(u, mul_mod(r, r, l), l),
            d: mul_mod(u, (2 * r + 1) % l, l),
            two_u: (2 * u) % l,
            l,
        }
    }

    #[inline(always)]
    fn next(&mut self) -> usize {
        let cur = self.s as usize;
        // branch-free reduction: the wrapped difference is huge unless it is the right value
        let s = self.s + self.d;
        self.s = s.min(s.wrapping_sub(self.l));
        let d = self.d + self.two_u;
        self.d = d.min(d.wrapping_sub(self.l));
        cur
    }
}

fn fma_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("fma") && std::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

// S(a, t; l) = S(g, u t; l) with g = gcd(a, l) and u a unit
fn unit_class(a: u64, l: u64) -> (u64, u64) {
    let a = a % l;
    let g = gcd(a, l);
    if g == l {
        return (l, 1);
    }
    let (a1, l1) = (a / g, l / g);
    let mut u = a1;
    while gcd(u, l) != 1 {
        u += l1;
    }
    (g, u)
}

// Kloosterman rows S(g, . ; l), one per gcd class g
struct Rows {
    l: u64,
    rows: HashMap<u64, Vec<f64>>,
}

impl Rows {
    fn new(l: u64) -> Self {
        Rows { l, rows: HashMap::new() }
    }

    fn class(&mut self, a: u64) -> Result<(u64, u64)> {
        let (g, u) = unit_class(a, self.l);
        if !self.rows.contains_key(&g) {
            self.rows.insert(g, kloosterman_row(g as i64, self.l)?);
        }
        Ok((g, u))
    }

    fn row(&self, g: u64) -> &[f64] {
        &self.rows[&g]
    }
}

struct Kernel<'a> {
    g: Geometry,
    a: &'a [f64],
    b: &'a [f64],
    n_cut: u64,
    m_cut: u64,
    table: &'a BesselTable,
    // S(1, t; q) and S(0, t; q)
    q_unit: Vec<f64>,
    q_zero: Vec<f64>,
    fused: bool,
}

impl<'a> Kernel<'a> {
    fn new(plan: &'a Plan, a: &'a [f64], b: &'a [f64]) -> Result<Self> {
        let q = plan.geometry.q;
        Ok(Kernel {
            g: plan.geometry,
            a,
            b,
            n_cut: plan.n_cut,
            m_cut: plan.m_cut,
            table: &plan.table,
            q_unit: kloosterman_row(1, q)?,
            q_zero: kloosterman_row(0, q)?,
            fused: fma_available(),
        })
    }

    // pref / (cq) * sum_m b_m sum_n a_n S(., .; cq) J(...), and the term count
    fn modulus_term(&self, c: u64) -> Result<(f64, u64)> {
        let q = self.g.q;
        let coprime = c % q != 0;
        let mut rows_c = Rows::new(if coprime { c } else { c * q });
        let q_inv_c = if coprime && c > 1 { mod_inverse(q as i64, c)? } else { 0 };
        let c_inv_q = if coprime { mod_inverse(c as i64, q)? } else { 0 };
        let x_neg = self.table.x_negligible();
        let mut acc = Pairwise::real();
        let mut terms = 0u64;
        for m in 1..=self.m_cut {
            let bm = self.b[m as usize];
            if bm == 0.0 {
                continue;
            }
            let beta = 4.0 * PI * (m as f64).sqrt() / (c as f64 * self.g.denom);
            let n0 = ((x_neg / beta).ceil() as u64).max(1);
            if n0 > self.n_cut {
                continue;
            }
            let inner = match (self.g.kind, coprime) {
                (OffDiag::First, true) => {
                    // S(m, n^2; cq) = S(m qbar^2, n^2; c) S(m cbar^2, n^2; q)
                    let ac = mul_mod(m % c, mul_mod(q_inv_c, q_inv_c, c.max(1)), c.max(1));
                    let (gc, uc) = rows_c.class(ac)?;
                    let aq = mul_mod(m % q, mul_mod(c_inv_q, c_inv_q, q), q);
                    let row_q = if aq == 0 { &self.q_zero } else { &self.q_unit };
                    let uq = if aq == 0 { 1 } else { aq };
                    self.sum_two(n0, beta, rows_c.row(gc), QuadIndex::new(uc, n0, c), row_q, QuadIndex::new(uq, n0, q))
                }
                (OffDiag::First, false) => {
                    let l = c * q;
                    let (g, u) = rows_c.class(m % l)?;
                    self.sum_one(n0, beta, rows_c.row(g), QuadIndex::new(u, n0, l))
                }
                (OffDiag::Second, true) => {
                    // S(m, q n^2; cq) = c_q(m) S(m qbar, n^2; c)
                    let ramanujan = if m % q == 0 { (q - 1) as f64 } else { -1.0 };
                    let ac = mul_mod(m % c, q_inv_c, c.max(1));
                    let (gc, uc) = rows_c.class(ac)?;
                    ramanujan * self.sum_one(n0, beta, rows_c.row(gc), QuadIndex::new(uc, n0, c))
                }
                (OffDiag::Second, false) => {
                    if m % q != 0 {
                        // vanishes when q divides c but not m
                        continue;
                    }
                    let l = c * q;
                    let (g, u) = rows_c.class(m % l)?;
                    self.sum_one(n0, beta, rows_c.row(g), QuadIndex::new(mul_mod(u, q, l), n0, l))
                }
            };
            terms += self.n_cut - n0 + 1;
            acc.push(bm * inner);
        }
        Ok((self.g.pref * acc.total() / (c as f64 * q as f64), terms))
    }

    fn sum_one(&self, n0: u64, beta: f64, row: &[f64], idx: QuadIndex) -> f64 {
        #[cfg(target_arch = "x86_64")]
        if self.fused {
            // SAFETY: the avx2 and fma features were detected at run time
            return unsafe { self.sum_one_fma(n0, beta, row, idx) };
        }
        self.sum_one_body::<false>(n0, beta, row, idx)
    }

    fn sum_two(&self, n0: u64, beta: f64, row1: &[f64], i1: QuadIndex, row2: &[f64], i2: QuadIndex) -> f64 {
        #[cfg(target_arch = "x86_64")]
        if self.fused {
            // SAFETY: as above
            return unsafe { self.sum_two_fma(n0, beta, row1, i1, row2, i2) };
        }
        self.sum_two_body::<false>(n0, beta, row1, i1, row2, i2)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn sum_one_fma(&self, n0: u64, beta: f64, row: &[f64], idx: QuadIndex) -> f64 {
        self.sum_one_body::<true>(n0, beta, row, idx)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn sum_two_fma(&self, n0: u64, beta: f64, row1: &[f64], i1: QuadIndex, row2: &[f64], i2: QuadIndex) -> f64 {
        self.sum_two_body::<true>(n0, beta, row1, i1, row2, i2)
    }

    #[inline(always)]
    fn sum_one_body<const FUSED: bool>(&self, n0: u64, beta: f64, row: &[f64], mut idx: QuadIndex) -> f64 {
        debug_assert_eq!(row.len() as u64, idx.l);
        // SAFETY: QuadIndex only yields residues below its modulus, the row length
        self.sum_body::<FUSED>(n0, beta, || unsafe { *row.get_unchecked(idx.next()) })
    }

    #[inline(always)]
    fn sum_two_body<const FUSED: bool>(
        &self,
        n0: u64,
        beta: f64,
        row1: &[f64],
        mut i1: QuadIndex,
        row2: &[f64],
        mut i2: QuadIndex,
    ) -> f64 {
        debug_assert!(row1.len() as u64 == i1.l && row2.len() as u64 == i2.l);
        // SAFETY: as above
        self.sum_body::<FUSED>(n0, beta, || unsafe { *row1.get_unchecked(i1.next()) * *row2.get_unchecked(i2.next()) })
    }

    // sum over n0 <= n <= n_cut of a_n * kl(n) * J(beta n), where kl yields
    // the Kloosterman factor for consecutive n. The argument grows with n, so
    // the range splits into the part below the table, the table, and the rest.
    #[inline(always)]
    fn sum_body<const FUSED: bool>(&self, n0: u64, beta: f64, mut kl: impl FnMut() -> f64) -> f64 {
        let end = self.n_cut + 1;
        let (lo, hi) = self.table.dense_interval();
        let n_lo = first_reaching(beta, lo).clamp(n0, end);
        let n_hi = first_reaching(beta, hi).clamp(n_lo, end);
        let mut acc = Pairwise::real();
        let mut block = 0.0;
        for n in n0..n_lo {
            block += self.a[n as usize] * kl() * self.table.eval(beta * n as f64);
        }
        acc.push(block);
        let mut start = n_lo;
        while start < n_hi {
            let stop = (start + BLOCK).min(n_hi);
            let a = &self.a[start as usize..stop as usize];
            let mut j_vals = [0.0f64; BLOCK as usize];
            if beta < SHARED_NODE_STEP {
                self.table.eval_progression::<FUSED>(beta, start, &mut j_vals[..a.len()]);
            } else {
                for (i, slot) in j_vals[..a.len()].iter_mut().enumerate() {
                    *slot = self.table.eval_dense::<FUSED>(beta * (start + i as u64) as i64 as f64);
                }
            }
            let mut block = 0.0;
            for (an, jv) in a.iter().zip(&j_vals) {
                block += an * kl() * jv;
            }
            acc.push(block);
            start = stop;
        }
        let mut block = 0.0;
        for n in n_hi..end {
            block += self.a[n as usize] * kl() * self.table.eval(beta * n as f64);
        }
        acc.push(block);
        acc.total()
    }
}

const BLOCK: u64 = 256;
// below this increment several consecutive arguments share a table node
const SHARED_NODE_STEP: f64 = 0.05;

// smallest n >= 0 with beta * n >= x, as evaluated in floating point
fn first_reaching(beta: f64, x: f64) -> u64 {
    if x <= 0.0 {
        return 0;
    }
    let mut n = (x / beta).ceil().min(u64::MAX as f64 / 2.0) as u64;
    while n > 0 && beta * (n - 1) as f64 >= x {
        n -= 1;
    }
    while beta * (n as f64) < x {
        n += 1;
    }
    n
}

pub fn diagonal_delta1(spec: &WeightSpec, pol: &TruncationPolicy) -> Result<TermValue> {
    MomentEngine::new(spec, pol)?.diagonal(false)
}

pub fn diagonal_delta2(spec: &WeightSpec, pol: &TruncationPolicy) -> Result<TermValue> {
    MomentEngine::new(spec, pol)?.diagonal(true)
}

pub fn offdiag_o1(spec: &WeightSpec, pol: &TruncationPolicy) -> Result<TermValue> {
    MomentEngine::new(spec, pol)?.offdiag(false)
}

pub fn offdiag_o2(spec: &WeightSpec, pol: &TruncationPolicy) -> Result<TermValue> {
    MomentEngine::new(spec, pol)?.offdiag(true)
}

pub fn moment_total(spec: &WeightSpec, pol: &TruncationPolicy) -> Result<MomentReport> {
    let start = Instant::now();
    let mut engine = MomentEngine::new(spec, pol)?;
    let d1 = engine.diagonal(false)?;
    let d2 = engine.diagonal(true)?;
    let o2 = engine.offdiag(true)?;
    let o1 = engine.offdiag(false)?;
    let (s1, s2, total) = MomentReport::assemble(spec.k, d1.value, d2.value, o1.value, o2.value);
    for (name, v) in [("s1", s1), ("s2", s2), ("total", total)] {
        if !v.is_finite() {
            return Err(Error::Mismatch(format!("{name} is not finite: {v}")));
        }
    }
    let residues = residue_constants(spec)?;
    Ok(MomentReport {
        q: spec.q,
        k: spec.k,
        delta1: d1.value,
        delta2: d2.value,
        o1: o1.value,
        o2: o2.value,
        s1,
        s2,
        total,
        tail_bounds: TailBounds {
            delta1: d1.tail_bound,
            delta2: d2.tail_bound,
            o1: o1.tail_bound,
            o2: o2.tail_bound,
        },
        cutoffs: ReportCutoffs {
            delta1: d1.cutoffs,
            delta2: d2.cutoffs,
            o1: o1.cutoffs,
            o2: o2.cutoffs,
        },
        residues,
        main_term: residues.big_a * (spec.q as f64).ln() + residues.big_b,
        note: OLDFORM_NOTE.to_string(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Least-squares line through (log q, total).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    pub alpha: f64,
    pub beta: f64,
    pub max_residual: f64,
}

pub fn asymptotic_fit(points: &[(u64, f64)]) -> Result<AsymptoticFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points, need at least 3", points.len())));
    }
    let mut qs: Vec<u64> = points.iter().map(|p| p.0).collect();
    qs.sort_unstable();
    qs.dedup();
    if qs.len() != points.len() {
        return Err(Error::InsufficientData("levels must be distinct".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mx = pairwise_sum(&xs) / n;
    let my = pairwise_sum(&ys) / n;
    let sxx = pairwise_sum(&xs.iter().map(|x| (x - mx) * (x - mx)).collect::<Vec<_>>());
    let sxy = pairwise_sum(&xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).collect::<Vec<_>>());
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("levels do not spread".into()));
    }
    let alpha = sxy / sxx;
    let beta = my - alpha * mx;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - alpha * x - beta).abs())
        .fold(0.0, f64::max);
    Ok(AsymptoticFit {
        alpha,
        beta,
        max_residual,
    })
}

/// `count` distinct primes in [lo, hi], spread evenly in log q: the
/// smallest prime at or above each geometric target, moved up past
/// primes already taken. Always starts at the first prime >= lo.
pub fn scan_primes(lo: u64, hi: u64, count: usize) -> Result<Vec<u64>> {
    let all = crate::arith::primes_in(lo, hi);
    if count == 0 || all.len() < count {
        return Err(Error::InsufficientData(format!(
            "{} primes in [{lo}, {hi}], asked for {count}",
            all.len()
        )));
    }
    let mut out: Vec<u64> = Vec::with_capacity(count);
    let ratio = (hi as f64 / lo as f64).ln();
    for i in 0..count {
        let t = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
        let target = (lo as f64 * (ratio * t).exp()).round() as u64;
        let floor = out.last().map_or(0, |&p| p + 1);
        let start = all.partition_point(|&p| p < target.max(floor));
        // leave room for the primes still to come
        let idx = start.min(all.len() - (count - i));
        out.push(all[idx]);
    }
    Ok(out)
}

/// Moment reports for each level in `primes`, one after another.
pub fn moment_scan(k: u32, primes: &[u64], pol: &TruncationPolicy) -> Result<Vec<MomentReport>> {
    primes
        .iter()
        .map(|&q| moment_total(&WeightSpec::new(k, q)?, pol))
        .collect()
}

/// Smooth bump exp(tilt * x - sharpness / ((x - 1)(2 - x))) on (1, 2), zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub sharpness: f64,
    pub tilt: f64,
}

impl Bump {
    pub const STANDARD: Bump = Bump {
        sharpness: 1.0,
        tilt: 0.0,
    };

    pub fn new(sharpness: f64, tilt: f64) -> Result<Self> {
        if !(sharpness > 0.0) || !tilt.is_finite() {
            return Err(Error::Domain(format!("bad bump parameters ({sharpness}, {tilt})")));
        }
        Ok(Bump { sharpness, tilt })
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 1.0 || x >= 2.0 {
            return 0.0;
        }
        (self.tilt * x - self.sharpness / ((x - 1.0) * (2.0 - x))).exp()
    }
}

fn transition(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth step: 0 for x <= 1, 1 for x >= 2.
pub fn smooth_step(x: f64) -> f64 {
    let (u, v) = (transition(x - 1.0), transition(2.0 - x));
    u / (u + v)
}

/// chi(x) - chi(x/2), supported on [1, 4]; its dyadic dilates sum to 1.
pub fn dyadic_piece(x: f64) -> f64 {
    smooth_step(x) - smooth_step(0.5 * x)
}

/// Both sides of the Poisson identity for one (m, c, q, N).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    /// The dual sum ran over |h| <= dual_terms.
    pub dual_terms: u64,
    /// Change in rhs between the last two doublings of the dual range.
    pub doubling_change: f64,
}

pub const POISSON_MAX_MODULUS: u64 = 1500;

/// sum_n S(m, n^2; cq) J_{k-1}(4 pi n sqrt(m) / cq) V(n/N) against
/// (N / cq) sum_h c(h) i(h) with c(h) the complete character sum and i(h)
/// the oscillatory integral of the window.
pub fn poisson_crosscheck(m: u64, c: u64, q: u64, n_scale: f64, k: u32, bump: &Bump) -> Result<PoissonCheck> {
    let l = c.checked_mul(q).ok_or_else(|| Error::Capacity("cq overflows".into()))?;
    if l > POISSON_MAX_MODULUS {
        return Err(Error::Capacity(format!("cq = {l} exceeds {POISSON_MAX_MODULUS}")));
    }
    if m == 0 || c == 0 || !(n_scale >= 1.0) {
        return Err(Error::Domain("need m, c >= 1 and N >= 1".into()));
    }
    if k < 2 || k % 2 == 1 || k > 16 {
        return Err(Error::Unsupported(format!("weight {k}: the check runs for even k <= 16")));
    }
    let nu = k - 1;
    let lf = l as f64;
    let alpha = 4.0 * PI * n_scale * (m as f64).sqrt() / lf;
    let mut lhs_acc = Pairwise::real();
    let lo = n_scale.floor() as u64;
    let hi = (2.0 * n_scale).ceil() as u64;
    for n in lo..=hi {
        let w = bump.eval(n as f64 / n_scale);
        if w == 0.0 {
            continue;
        }
        let nn = mul_mod(n, n, l) as i64;
        let s = kloosterman(m as i64, nn, l)?;
        lhs_acc.push(s * bessel_j(nu, alpha * n as f64 / n_scale).value() * w);
    }
    let lhs = lhs_acc.total();

    let beta = n_scale / lf;
    let rhs_up_to = |h_max: u64| -> Result<f64> {
        let hs: Vec<i64> = (0..=h_max as i64).collect();
        let chars = charsum_o1_bruteforce_batch(m, &hs, c, q)?;
        let cycles = alpha / (2.0 * PI) + beta * h_max as f64;
        let panels = ((4.0 * cycles).ceil() as usize).max(64);
        let (gx, gw) = gauss_legendre(20);
        let width = 1.0 / panels as f64;
        let mut nodes = Vec::with_capacity(panels * gx.len());
        for p in 0..panels {
            let mid = 1.0 + (p as f64 + 0.5) * width;
            for (x, w) in gx.iter().zip(&gw) {
                let u = mid + 0.5 * width * x;
                let f = bump.eval(u) * bessel_j(nu, alpha * u).value();
                nodes.push((u, 0.5 * width * w * f));
            }
        }
        let mut acc = Pairwise::real();
        for (h, ch) in chars.iter().enumerate() {
            let mut integral = Pairwise::complex();
            for &(u, wf) in &nodes {
                let (s, co) = (-2.0 * PI * beta * h as f64 * u).sin_cos();
                integral.push(Complex64::new(co, s) * wf);
            }
            let i_h = integral.total();
            let mult = if h == 0 { 1.0 } else { 2.0 };
            acc.push(mult * (ch * i_h).re);
        }
        Ok(beta * acc.total())
    };
    let mut h = (2.0 * (m as f64).sqrt() + 10.0 / beta).ceil() as u64 + 10;
    let mut prev = rhs_up_to(h)?;
    loop {
        let next = rhs_up_to(2 * h)?;
        let change = (next - prev).abs();
        h *= 2;
        if change <= 1e-10 * next.abs().max(lhs.abs()) || h > 50_000 {
            let rel_err = (lhs - next).abs() / lhs.abs().max(1e-300);
            return Ok(PoissonCheck {
                lhs,
                rhs: next,
                rel_err,
                dual_terms: h,
                doubling_change: change,
            });
        }
        prev = next;
    }
}
