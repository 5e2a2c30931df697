//! Hecke eigenvalue files and the per-form check that
//! L(1/2, f) L(1/2, Sym^2 f) is nonzero.
//!
//! File format: a header line
//! `# level=<int> weight=<int> label=<text> normalization=hecke [norm=<float>] [source=<text>]`
//! followed by `<n> <lambda_n>` lines with n = 1, 2, 3, ... and `---`
//! between records. Blank lines are ignored.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::afe::{afe_l_f, afe_l_sym2, AfeOptions, LevelMode, WeightSpec};
use crate::arith::{gcd, is_prime_unchecked};
use crate::error::{Error, Result};

/// Level-1 eigenforms of weights 12, 16, 18, 20, 22 and 26 with lambda(n)
/// for n <= 2000, from exact q-expansions of Delta * E_{k-12}.
pub const BUNDLED_FIXTURE: &str = include_str!("../data/level1_eigenforms.txt");

const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueRecord {
    pub level: u64,
    pub weight: u32,
    pub label: String,
    /// `lambdas[n - 1] = lambda(n)`, Hecke normalized.
    pub lambdas: Vec<f64>,
    pub petersson_norm: Option<f64>,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Nonzero,
    BelowThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonvanishingReport {
    pub label: String,
    pub l_f: f64,
    pub l_sym2: f64,
    pub product: f64,
    pub verdict: Verdict,
    /// Bound on |product - exact product| from both truncations.
    pub truncation_tail: f64,
}

impl EigenvalueRecord {
    /// Every identity the record violates, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let lam = &self.lambdas;
        let len = lam.len() as u64;
        let at = |n: u64| lam[(n - 1) as usize];
        if lam.is_empty() {
            out.push("no eigenvalues".to_string());
            return out;
        }
        if at(1) != 1.0 {
            out.push(format!("lambda(1) = {} instead of 1", at(1)));
        }
        if let Some(n) = lam.iter().position(|x| !x.is_finite()) {
            out.push(format!("lambda({}) is not finite", n + 1));
        }
        for m in 2..=len {
            for n in (m + 1)..=(len / m) {
                if gcd(m, n) != 1 {
                    continue;
                }
                let d = at(m) * at(n) - at(m * n);
                if d.abs() > IDENTITY_TOL * (1.0 + at(m * n).abs()) {
                    out.push(format!(
                        "multiplicativity lambda({m})lambda({n}) = lambda({}) fails by {d:e}",
                        m * n
                    ));
                }
            }
        }
        for p in (2..=len).filter(|&p| is_prime_unchecked(p)) {
            if at(p).abs() > 2.0 + IDENTITY_TOL {
                out.push(format!("Deligne bound |lambda({p})| <= 2 fails: {}", at(p)));
            }
            if self.level % p != 0 && p * p <= len {
                let d = at(p) * at(p) - at(p * p) - 1.0;
                if d.abs() > IDENTITY_TOL {
                    out.push(format!("Hecke relation lambda({p})^2 = lambda({})+1 fails by {d:e}", p * p));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation {
                label: self.label.clone(),
                msg: v.join("; "),
            })
        }
    }

    /// The weight spec the record's L-values are evaluated with: prime
    /// level as is, level 1 in the machinery-test mode.
    pub fn spec(&self, sigma: f64) -> Result<WeightSpec> {
        let base = if self.level == 1 {
            WeightSpec::level_one(self.weight)?
        } else {
            WeightSpec::new(self.weight, self.level)?
        };
        base.with_sigma(sigma)
    }
}

fn parse_header(line: &str, line_no: usize, source: &str) -> Result<EigenvalueRecord> {
    let err = |msg: String| Error::Parse { line: line_no, msg };
    let body = line.trim_start_matches('#').trim();
    let (mut level, mut weight, mut label, mut norm, mut hecke) = (None, None, None, None, false);
    let mut src = source.to_string();
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| err(format!("header field '{field}' is not key=value")))?;
        match key {
            "level" => level = Some(value.parse::<u64>().map_err(|e| err(format!("level: {e}")))?),
            "weight" => weight = Some(value.parse::<u32>().map_err(|e| err(format!("weight: {e}")))?),
            "label" => label = Some(value.to_string()),
            "norm" => {
                let v = value.parse::<f64>().map_err(|e| err(format!("norm: {e}")))?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(err(format!("norm must be positive, got {v}")));
                }
                norm = Some(v);
            }
            "source" => src = value.to_string(),
            "normalization" => {
                if value != "hecke" {
                    return Err(err(format!("normalization must be hecke, got '{value}'")));
                }
                hecke = true;
            }
            _ => return Err(err(format!("unknown header key '{key}'"))),
        }
    }
    if !hecke {
        return Err(err("header lacks normalization=hecke".into()));
    }
    let level = level.ok_or_else(|| err("header lacks level".into()))?;
    let weight = weight.ok_or_else(|| err("header lacks weight".into()))?;
    if level == 0 {
        return Err(err("level must be positive".into()));
    }
    if weight < 2 || weight % 2 == 1 {
        return Err(err(format!("weight must be even, got {weight}")));
    }
    Ok(EigenvalueRecord {
        level,
        weight,
        label: label.ok_or_else(|| err("header lacks label".into()))?,
        lambdas: Vec::new(),
        petersson_norm: norm,
        source: src,
    })
}

/// Parse and validate every record of `text`; `source` names the input.
pub fn parse_eigenfile(text: &str, source: &str) -> Result<Vec<EigenvalueRecord>> {
    let records = parse_records(text, source)?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

fn parse_records(text: &str, source: &str) -> Result<Vec<EigenvalueRecord>> {
    let mut records = Vec::new();
    let mut current: Option<EigenvalueRecord> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "---" {
            let rec = current
                .take()
                .ok_or(Error::Parse { line: line_no, msg: "separator without a record".into() })?;
            records.push(rec);
            continue;
        }
        if line.starts_with('#') {
            if current.is_some() {
                return Err(Error::Parse { line: line_no, msg: "header inside a record; missing ---".into() });
            }
            current = Some(parse_header(line, line_no, source)?);
            continue;
        }
        let rec = current
            .as_mut()
            .ok_or(Error::Parse { line: line_no, msg: "data line before any header".into() })?;
        let mut parts = line.split_whitespace();
        let (Some(n), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse { line: line_no, msg: format!("expected '<n> <lambda>', got '{line}'") });
        };
        let n: usize = n
            .parse()
            .map_err(|e| Error::Parse { line: line_no, msg: format!("index: {e}") })?;
        let v: f64 = v
            .parse()
            .map_err(|e| Error::Parse { line: line_no, msg: format!("eigenvalue: {e}") })?;
        if n != rec.lambdas.len() + 1 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected n = {}, got {n}", rec.lambdas.len() + 1),
            });
        }
        rec.lambdas.push(v);
    }
    records.extend(current);
    Ok(records)
}

pub fn read_eigenfile(path: &Path) -> Result<Vec<EigenvalueRecord>> {
    let text = std::fs::read_to_string(path)?;
    parse_eigenfile(&text, &path.display().to_string())
}

/// The bundled fixture, parsed and validated.
pub fn bundled_records() -> Result<Vec<EigenvalueRecord>> {
    parse_eigenfile(BUNDLED_FIXTURE, "bundled")
}

/// Inverse of [`parse_eigenfile`].
pub fn serialize_eigenfile(records: &[EigenvalueRecord]) -> String {
    let mut out = String::new();
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            out.push_str("---\n");
        }
        let _ = write!(out, "# level={} weight={} label={} normalization=hecke", r.level, r.weight, r.label);
        if let Some(norm) = r.petersson_norm {
            let _ = write!(out, " norm={norm}");
        }
        if !r.source.is_empty() && !r.source.contains(char::is_whitespace) {
            let _ = write!(out, " source={}", r.source);
        }
        out.push('\n');
        for (n, v) in r.lambdas.iter().enumerate() {
            let _ = writeln!(out, "{} {v}", n + 1);
        }
    }
    out
}

/// L(1/2, f), L(1/2, Sym^2 f) and their product for each record. Every
/// record must match `spec` in weight and level.
pub fn nonvanishing_report(
    records: &[EigenvalueRecord],
    spec: &WeightSpec,
    opts: &AfeOptions,
) -> Result<Vec<NonvanishingReport>> {
    let level = match spec.mode {
        LevelMode::Prime => spec.q,
        LevelMode::LevelOneTest => 1,
    };
    for r in records {
        if r.weight != spec.k || r.level != level {
            return Err(Error::Mismatch(format!(
                "record '{}' has weight {} level {}, spec has weight {} level {level}",
                r.label, r.weight, r.level, spec.k
            )));
        }
    }
    records
        .par_iter()
        .map(|r| {
            let f = afe_l_f(&r.lambdas, spec, opts)?;
            let s = afe_l_sym2(&r.lambdas, spec, opts)?;
            let product = f.value * s.value;
            let tail = f.value.abs() * s.tail_bound + s.value.abs() * f.tail_bound + f.tail_bound * s.tail_bound;
            Ok(NonvanishingReport {
                label: r.label.clone(),
                l_f: f.value,
                l_sym2: s.value,
                product,
                verdict: if product.abs() > 10.0 * tail { Verdict::Nonzero } else { Verdict::BelowThreshold },
                truncation_tail: tail,
            })
        })
        .collect()
}

pub const REPORT_CSV_HEADER: [&str; 6] = ["label", "l_f", "l_sym2", "product", "verdict", "truncation_tail"];

pub fn write_report_csv<W: std::io::Write>(out: W, reports: &[NonvanishingReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER).map_err(|e| Error::Io(e.to_string()))?;
    for r in reports {
        let verdict = match r.verdict {
            Verdict::Nonzero => "nonzero",
            Verdict::BelowThreshold => "below-threshold",
        };
        w.write_record([
            r.label.clone(),
            format!("{:e}", r.l_f),
            format!("{:e}", r.l_sym2),
            format!("{:e}", r.product),
            verdict.to_string(),
            format!("{:e}", r.truncation_tail),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
