//! Acceptance suite: one PASS/FAIL line per criterion. Criteria 1-10 run on
//! a one-thread pool, then again on an eight-thread pool for criterion 11.
//! The binary exits 0 whatever the verdicts; a FAIL is a finding to report,
//! not a broken build.

use std::io::Write;
use std::time::Instant;

use sym2moment::afe::{residue_constants, weight_v, weight_w, AfeOptions, WeightSpec};
use sym2moment::arith::{divisor_count, epsilon_factor, gcd, jacobi_symbol};
use sym2moment::expsums::{charsum_sweep, gauss_quadratic, kloosterman};
use sym2moment::moment::{
    asymptotic_fit, diagonal_delta1, moment_total, offdiag_o1, offdiag_o2, poisson_crosscheck, scan_primes,
    Bump, TruncationPolicy,
};
use sym2moment::sieve::sieve_scan;
use sym2moment::specdata::{bundled_records, nonvanishing_report, Verdict};
use sym2moment::specfun::{zeta, zeta_deriv};

struct Outcome {
    pass: bool,
    detail: String,
    /// Every number the criterion computed, as printed for the determinism check.
    numbers: Vec<String>,
    seconds: f64,
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

type Check = fn() -> (bool, String, Vec<String>);

const CRITERIA: [(&str, f64, Check); 10] = [
    ("character-sum identity", 120.0, charsum_identity),
    ("Gauss-sum closed form", 30.0, gauss_closed_form),
    ("Weil bound", 30.0, weil_bound),
    ("Poisson identity", 60.0, poisson_identity),
    ("residue constants", 60.0, residue_checks),
    ("weight asymptotics", 120.0, weight_asymptotics),
    ("diagonal law trend", 300.0, diagonal_trend),
    ("moment asymptotic", 1800.0, moment_asymptotic),
    ("large-sieve scan", 300.0, large_sieve),
    ("eigenform fixture", 60.0, fixture_path),
];

fn charsum_identity() -> (bool, String, Vec<String>) {
    match charsum_sweep(12, 12, 1500, 1e-9) {
        Ok(r) => (
            r.mismatches == 0 && r.tuples > 0,
            format!(
                "{} tuples, {} mismatches, {} exact zeros, max rel err {:.1e} (without the reciprocity sign {} would fail)",
                r.tuples, r.mismatches, r.exact_zeros, r.max_rel_err, r.unsigned_wrong
            ),
            vec![
                r.tuples.to_string(),
                r.mismatches.to_string(),
                r.exact_zeros.to_string(),
                r.unsigned_wrong.to_string(),
                num(r.max_rel_err),
            ],
        ),
        Err(e) => (false, format!("error: {e}"), vec![]),
    }
}

fn gauss_closed_form() -> (bool, String, Vec<String>) {
    let mut worst = 0.0f64;
    let mut count = 0u64;
    let mut bad = 0u64;
    for c in (1..=999u64).step_by(2) {
        for a in 1..=20i64 {
            if gcd(a as u64, c) != 1 {
                continue;
            }
            let g = gauss_quadratic(a, 0, c).expect("modulus in range").value();
            let closed = epsilon_factor(c).expect("odd")
                * (c as f64).sqrt()
                * f64::from(jacobi_symbol(a, c).expect("odd"));
            let err = (g - closed).norm() / (c as f64).sqrt();
            worst = worst.max(err);
            count += 1;
            if err > 1e-10 {
                bad += 1;
            }
        }
    }
    (
        bad == 0,
        format!("{count} pairs (a, c), {bad} outside 1e-10 sqrt(c), worst {worst:.1e} sqrt(c)"),
        vec![count.to_string(), bad.to_string(), num(worst)],
    )
}

fn weil_bound() -> (bool, String, Vec<String>) {
    let mut max_ratio = 0.0f64;
    let mut bad = 0u64;
    for c in 1..=500u64 {
        let tau = divisor_count(c) as f64;
        for m in 1..=20u64 {
            for n in 1..=20u64 {
                let s = kloosterman(m as i64, n as i64, c).expect("small modulus");
                let bound = tau * (gcd(gcd(m, n), c) as f64).sqrt() * (c as f64).sqrt();
                max_ratio = max_ratio.max(s.abs() / bound);
                if s.abs() > bound * (1.0 + 1e-12) + 1e-9 {
                    bad += 1;
                }
            }
        }
    }
    (
        bad == 0,
        format!("200000 sums, {bad} violations, max |S|/bound {max_ratio:.6}"),
        vec![bad.to_string(), num(max_ratio)],
    )
}

fn poisson_identity() -> (bool, String, Vec<String>) {
    let points = [
        (2u64, 3u64, 5u64, 50.0, 6u32),
        (3, 3, 7, 80.0, 8),
        (5, 7, 11, 60.0, 12),
        (1, 9, 13, 120.0, 10),
        (4, 5, 13, 100.0, 16),
    ];
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut numbers = Vec::new();
    for (m, c, q, n, k) in points {
        match poisson_crosscheck(m, c, q, n, k, &Bump::STANDARD) {
            Ok(r) => {
                pass &= r.rel_err <= 1e-6;
                worst = worst.max(r.rel_err);
                numbers.extend([num(r.lhs), num(r.rhs), num(r.rel_err), r.dual_terms.to_string()]);
            }
            Err(e) => return (false, format!("({m},{c},{q},{n},{k}): {e}"), numbers),
        }
    }
    (pass, format!("5 points, worst rel err {worst:.1e}"), numbers)
}

// least-squares slope of V against log y on [1e-4, 1e-2] / q^2, where the
// next singularity of the integrand contributes O((q^{4/3} y)^{3/2})
fn v_fit_slope(spec: &WeightSpec) -> f64 {
    let q2 = (spec.q as f64).powi(2);
    let pts: Vec<(f64, f64)> = (0..9)
        .map(|i| {
            let y = 1e-4 * 10f64.powf(i as f64 * 0.25) / q2;
            (y.ln(), weight_v(y, spec).expect("valid y"))
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

fn residue_checks() -> (bool, String, Vec<String>) {
    let mut pass = true;
    let mut numbers = Vec::new();
    let mut notes = Vec::new();
    for k in [4u32, 12, 30, 1002] {
        for q in [101u64, 1009] {
            let spec = WeightSpec::new(k, q).expect("valid");
            let r = residue_constants(&spec).expect("constants");
            pass &= r.c_k == 1.0 && r.big_a > 0.0;
            numbers.extend([num(r.a_k), num(r.b_k), num(r.big_a), num(r.big_b)]);
        }
    }
    let mut worst = 0.0f64;
    for q in [101u64, 1009] {
        let spec = WeightSpec::new(12, q).expect("valid");
        let expected = -(1.0 - 1.0 / q as f64) / 2.0;
        let fitted = v_fit_slope(&spec);
        let r = residue_constants(&spec).expect("constants");
        let err = (fitted - expected).abs().max((r.a_k - expected).abs());
        worst = worst.max(err);
        pass &= err <= 1e-6;
        numbers.push(num(fitted));
        notes.push(format!("q={q}: fitted a_k {fitted:.9}"));
    }
    (
        pass,
        format!("c_k = 1 and A_k > 0 for k in {{4,12,30,1002}}; {}; worst |a_k + (1-1/q)/2| {worst:.1e}", notes.join(", ")),
        numbers,
    )
}

fn weight_asymptotics() -> (bool, String, Vec<String>) {
    let mut pass = true;
    let mut worst_w = 0.0f64;
    let mut worst_v = 0.0f64;
    let mut numbers = Vec::new();
    for k in [4u32, 12] {
        for q in [101u64, 1009] {
            let spec = WeightSpec::new(k, q).expect("valid");
            let r = residue_constants(&spec).expect("constants");
            for j in 2..=8 {
                let y = 10f64.powi(-j);
                let w = weight_w(y, &spec).expect("W");
                let v = weight_v(y, &spec).expect("V");
                let ew = (w - 1.0).abs() / y.powf(0.25);
                let ev = (v - r.a_k * y.ln() - r.b_k).abs() / (y.powf(0.25) + 1.0 / q as f64);
                worst_w = worst_w.max(ew);
                worst_v = worst_v.max(ev);
                pass &= ew <= 10.0 && ev <= 10.0;
                numbers.extend([num(w), num(v)]);
            }
        }
    }
    (
        pass,
        format!("max |W-1|/y^(1/4) = {worst_w:.3}, max |V-a log y-b|/(y^(1/4)+1/q) = {worst_v:.3} (limit 10)"),
        numbers,
    )
}

fn diagonal_trend() -> (bool, String, Vec<String>) {
    let mut errs = Vec::new();
    let mut numbers = Vec::new();
    let z = zeta(1.5).expect("zeta");
    let zd = zeta_deriv(1.5).expect("zeta'");
    for q in [101u64, 401, 1009, 4001, 10007] {
        let spec = WeightSpec::new(12, q).expect("valid");
        let d1 = match diagonal_delta1(&spec, &TruncationPolicy::default()) {
            Ok(t) => t,
            Err(e) => return (false, format!("q={q}: {e}"), numbers),
        };
        let r = residue_constants(&spec).expect("constants");
        let closed = (-r.a_k * (q as f64).ln() + r.b_k) * r.c_k * z - r.a_k * r.c_k * zd;
        let e = (d1.value - closed).abs();
        numbers.extend([num(d1.value), num(e)]);
        errs.push(e);
    }
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.4e}")).collect();
    // the pole of zeta(3/2 + 2u) at u = -1/4 in the Mellin form of the W
    // factor leaves a secondary term q^{-1/8} (alpha log q + beta)
    let qs = [101.0f64, 401.0, 1009.0, 4001.0, 10007.0];
    let pts: Vec<(f64, f64)> = qs.iter().zip(&errs).map(|(q, e)| (q.ln(), e * q.powf(0.125))).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 5.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 5.0;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let icpt = my - slope * mx;
    let misfit = pts.iter().map(|p| ((slope * p.0 + icpt) / p.1 - 1.0).abs()).fold(0.0, f64::max);
    numbers.extend([num(slope), num(icpt)]);
    (
        monotone,
        format!(
            "|Delta1 - closed form| at q = 101..10007: {}{}; fits q^(-1/8)({slope:.3} log q {icpt:+.3}) within {:.2}%, \
             whose size peaks near q = {:.0}",
            shown.join(", "),
            if monotone { "" } else { " (not decreasing)" },
            100.0 * misfit,
            (8.0 - icpt / slope).exp()
        ),
        numbers,
    )
}

fn moment_asymptotic() -> (bool, String, Vec<String>) {
    let mut numbers = Vec::new();
    let primes = scan_primes(101, 2003, 20).expect("enough primes");
    let pol = TruncationPolicy {
        tail_tol: 1e-4,
        ..TruncationPolicy::default()
    };
    let mut points = Vec::new();
    let mut a_sum = 0.0;
    let mut worst_tail = 0.0f64;
    for &q in &primes {
        let spec = WeightSpec::new(12, q).expect("valid");
        let r = match moment_total(&spec, &pol) {
            Ok(r) => r,
            Err(e) => return (false, format!("q={q}: {e}"), numbers),
        };
        numbers.extend([num(r.total), num(r.tail_bounds.total())]);
        worst_tail = worst_tail.max(r.tail_bounds.total());
        a_sum += r.residues.big_a;
        points.push((q, r.total));
    }
    let fit = asymptotic_fit(&points).expect("20 distinct levels");
    let a_k = a_sum / primes.len() as f64;
    let rel = (fit.alpha - a_k).abs() / a_k;
    // S = 2 S1 + 2 i^k S2 carries the diagonal main term twice
    let rel_doubled = (fit.alpha - 2.0 * a_k).abs() / (2.0 * a_k);
    // residual trend: least-squares slope of |residual| against log q
    let res: Vec<(f64, f64)> = points
        .iter()
        .map(|&(q, t)| {
            let x = (q as f64).ln();
            (x, (t - fit.alpha * x - fit.beta).abs())
        })
        .collect();
    let n = res.len() as f64;
    let mx = res.iter().map(|p| p.0).sum::<f64>() / n;
    let my = res.iter().map(|p| p.1).sum::<f64>() / n;
    let trend = res.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / res.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    numbers.extend([num(fit.alpha), num(fit.beta), num(fit.max_residual), num(trend)]);
    let scan_ok = rel <= 0.25 && trend <= 0.0;

    // k = 1002 at q = 101: O1 with a certified tail, O2 over moduli c <= 20
    // with the remainder bounded, both set against the 1e-20 claim
    let spec = WeightSpec::new(1002, 101).expect("valid");
    let d1 = diagonal_delta1(&spec, &pol).expect("diagonal");
    let o1 = offdiag_o1(&spec, &pol).expect("o1");
    let capped = TruncationPolicy { c_cap: 20, ..pol };
    let o2 = offdiag_o2(&spec, &capped).expect("o2");
    numbers.extend([num(d1.value), num(o1.value), num(o1.tail_bound), num(o2.value), num(o2.tail_bound)]);
    let dead = o1.value.abs() + o1.tail_bound <= 1e-20 && o2.value.abs() + o2.tail_bound <= 1e-20;
    let detail = format!(
        "k=12 over {} primes 101..2003: alpha {:.4} vs A_k {:.4} ({:.1}% off; {:.1}% off 2A_k), residual trend {:+.3e} per log q, max tail {:.1e}; \
         k=1002 q=101: Delta1 {:.6}, O1 {:.3e} (tail {:.1e}), O2 partial c<=20 {:.3e} ({}){}",
        primes.len(),
        fit.alpha,
        a_k,
        100.0 * rel,
        100.0 * rel_doubled,
        trend,
        worst_tail,
        d1.value,
        o1.value,
        o1.tail_bound,
        o2.value,
        if o2.tail_bound.is_finite() {
            format!("remainder bound {:.1e}", o2.tail_bound)
        } else {
            "remainder not bounded at this cap".to_string()
        },
        if dead { "" } else { " -> off-diagonals are not below 1e-20" }
    );
    (scan_ok && dead, detail, numbers)
}

fn large_sieve() -> (bool, String, Vec<String>) {
    let grid = [25u64, 50, 100, 200, 400];
    match sieve_scan(&grid, &grid, &[101, 103], 1) {
        Ok(rows) => {
            let worst = rows.iter().map(|r| r.normalized()).fold(0.0, f64::max);
            let numbers = rows.iter().map(|r| num(r.sum)).collect();
            (worst <= 20.0, format!("{} grid points, max ratio/log^2 = {worst:.5} (limit 20)", rows.len()), numbers)
        }
        Err(e) => (false, format!("error: {e}"), vec![]),
    }
}

fn fixture_path() -> (bool, String, Vec<String>) {
    let records = match bundled_records() {
        Ok(r) => r,
        Err(e) => return (false, format!("fixture rejected: {e}"), vec![]),
    };
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut numbers = Vec::new();
    let mut shown = Vec::new();
    let mut all_nonzero = true;
    for rec in &records {
        let mut base = None;
        for sigma in [1.0, 0.25, 0.5, 2.0] {
            for cut_scale in [1.0, 2.0] {
                let spec = rec.spec(sigma).expect("valid weight");
                let opts = AfeOptions {
                    tol: 1e-12,
                    cut_scale,
                };
                let rep = match nonvanishing_report(std::slice::from_ref(rec), &spec, &opts) {
                    Ok(mut r) => r.remove(0),
                    Err(e) => return (false, format!("{}: {e}", rec.label), numbers),
                };
                all_nonzero &= rep.verdict == Verdict::Nonzero;
                numbers.push(num(rep.product));
                let b = *base.get_or_insert(rep.product);
                worst = worst.max((rep.product - b).abs());
            }
        }
        shown.push(format!("{} {:.8}", rec.label, base.unwrap_or(f64::NAN)));
    }
    pass &= all_nonzero && worst <= 1e-8 && !records.is_empty();
    (
        pass,
        format!(
            "{} records valid, verdicts {}; products {}; max change over contours and doubling {worst:.1e}",
            records.len(),
            if all_nonzero { "all nonzero" } else { "not all nonzero" },
            shown.join(", ")
        ),
        numbers,
    )
}

fn run_all(print: bool) -> Vec<Outcome> {
    CRITERIA
        .iter()
        .enumerate()
        .map(|(i, (name, budget, check))| {
            let start = Instant::now();
            let (ok, detail, numbers) = check();
            let seconds = start.elapsed().as_secs_f64();
            let pass = ok && seconds < *budget;
            if print {
                let timing = if seconds < *budget {
                    format!("{seconds:.1}s")
                } else {
                    format!("{seconds:.1}s, over the {budget:.0}s budget")
                };
                println!(
                    "{} [{}] {name}: {detail} ({timing})",
                    if pass { "PASS" } else { "FAIL" },
                    i + 1
                );
                let _ = std::io::stdout().flush();
            }
            Outcome {
                pass,
                detail,
                numbers,
                seconds,
            }
        })
        .collect()
}

fn main() {
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool");
    let single = pool(1).install(|| run_all(true));
    let eight = pool(8).install(|| run_all(false));
    let differing: Vec<usize> = single
        .iter()
        .zip(&eight)
        .enumerate()
        .filter(|(_, (a, b))| a.numbers != b.numbers || a.detail != b.detail)
        .map(|(i, _)| i + 1)
        .collect();
    let det = differing.is_empty();
    let total_numbers: usize = single.iter().map(|o| o.numbers.len()).sum();
    println!(
        "{} [11] determinism: {} numbers from criteria 1-10 compared at 1 and 8 threads{} (8-thread pass {:.1}s)",
        if det { "PASS" } else { "FAIL" },
        total_numbers,
        if det { ", all identical".to_string() } else { format!(", criteria {differing:?} differ") },
        eight.iter().map(|o| o.seconds).sum::<f64>()
    );
    let passed = single.iter().filter(|o| o.pass).count() + usize::from(det);
    println!("acceptance: {passed}/11 criteria passed");
}
