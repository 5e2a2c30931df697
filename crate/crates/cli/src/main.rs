//! Command-line driver for the sym2moment library.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sym2moment::afe::{residue_constants, AfeOptions, MellinWeight, WeightKind, WeightSpec};
use sym2moment::expsums::charsum_sweep;
use sym2moment::moment::{
    asymptotic_fit, moment_total, poisson_crosscheck, scan_primes, write_csv, Bump, MomentReport, SumOrder,
    TruncationPolicy,
};
use sym2moment::sieve::{sieve_scan, write_sieve_csv};
use sym2moment::specdata::{bundled_records, nonvanishing_report, read_eigenfile, write_report_csv};
use sym2moment::{Error, Result};

const SUBCOMMANDS: [&str; 7] = ["weights", "charsum", "poisson", "moment", "scan", "sieve", "direct"];

#[derive(Parser, Debug)]
#[command(name = "sym2moment", version, about = "First moment of L(1/2,f)L(1/2,Sym^2 f) over prime-level newforms")]
struct Cli {
    /// Flat key=value file; flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to SYM2MOMENT_THREADS, then the core count).
    #[arg(long, global = true, env = "SYM2MOMENT_THREADS")]
    threads: Option<usize>,
    /// Write here instead of stdout; the file appears atomically.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Leave out timestamps and wall-clock times.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the weights V and W on a log grid.
    Weights(WeightsArgs),
    /// Check the closed form of the composite character sum.
    Charsum(CharsumArgs),
    /// Compare a smoothed Kloosterman-Bessel sum with its Poisson dual.
    Poisson(PoissonArgs),
    /// Compute the full moment at one level.
    Moment(MomentArgs),
    /// Compute the moment over many levels and fit A log q + B.
    Scan(ScanArgs),
    /// Large-sieve character double sums over a grid.
    Sieve(SieveArgs),
    /// L(1/2,f) L(1/2,Sym^2 f) for each form of an eigenvalue file.
    Direct(DirectArgs),
}

#[derive(Args, Debug)]
struct WeightsArgs {
    #[arg(long)]
    k: u32,
    #[arg(long)]
    q: u64,
    /// Range lo..hi of y, sampled evenly in log y.
    #[arg(long, default_value = "1e-6..1e2")]
    grid: String,
    #[arg(long, default_value_t = 41)]
    points: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
}

#[derive(Args, Debug)]
struct CharsumArgs {
    /// Sweep every admissible tuple up to --max-cq.
    #[arg(long)]
    verify: bool,
    #[arg(long, default_value_t = 1500)]
    max_cq: u64,
    #[arg(long, default_value_t = 12)]
    max_m: u64,
    #[arg(long, default_value_t = 12)]
    max_n: i64,
}

#[derive(Args, Debug)]
struct PoissonArgs {
    #[arg(long)]
    m: u64,
    #[arg(long)]
    c: u64,
    #[arg(long)]
    q: u64,
    /// The length N of the smoothed n-sum.
    #[arg(long)]
    n_scale: f64,
    #[arg(long)]
    k: u32,
    #[arg(long, default_value_t = 1.0)]
    sharpness: f64,
    #[arg(long, default_value_t = 0.0)]
    tilt: f64,
}

#[derive(Args, Debug, Clone)]
struct PolicyArgs {
    #[arg(long, default_value_t = 1e-10)]
    tail_tol: f64,
    #[arg(long)]
    n_cut: Option<u64>,
    #[arg(long)]
    m_cut: Option<u64>,
    #[arg(long)]
    c_cut: Option<u64>,
    #[arg(long, default_value_t = 100_000)]
    c_cap: u64,
    #[arg(long, default_value_t = 1.0)]
    cut_scale: f64,
    /// Reduce the modulus sum from the largest modulus down.
    #[arg(long)]
    descending: bool,
}

impl PolicyArgs {
    fn policy(&self) -> TruncationPolicy {
        TruncationPolicy {
            n_cut: self.n_cut,
            m_cut: self.m_cut,
            c_cut: self.c_cut,
            tail_tol: self.tail_tol,
            c_cap: self.c_cap,
            cut_scale: self.cut_scale,
            order: if self.descending { SumOrder::Descending } else { SumOrder::Ascending },
            ..TruncationPolicy::default()
        }
    }
}

#[derive(Args, Debug)]
struct MomentArgs {
    #[arg(long)]
    k: u32,
    #[arg(long)]
    q: u64,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long)]
    k: u32,
    /// Explicit levels; otherwise --count primes spread over [--q-min, --q-max].
    #[arg(long, value_delimiter = ',')]
    primes: Vec<u64>,
    #[arg(long, default_value_t = 101)]
    q_min: u64,
    #[arg(long, default_value_t = 2003)]
    q_max: u64,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args, Debug)]
struct SieveArgs {
    #[arg(long = "d", value_delimiter = ',', default_value = "25,50,100,200,400")]
    d_values: Vec<u64>,
    #[arg(long = "c1", value_delimiter = ',', default_value = "25,50,100,200,400")]
    c1_values: Vec<u64>,
    #[arg(long = "q", value_delimiter = ',', default_value = "101,103")]
    q_values: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    u: u64,
}

#[derive(Args, Debug)]
struct DirectArgs {
    /// Eigenvalue file; the bundled level-1 fixture when absent.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 1.0)]
    cut_scale: f64,
}

/// Insert the config file's settings as flags, unless the command line
/// already sets them.
fn merge_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = argv.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
    let mut out = argv.clone();
    let has_command = argv.iter().any(|a| SUBCOMMANDS.contains(&a.as_str()));
    let mut extra = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(Error::Parse {
            line: i + 1,
            msg: format!("expected key=value in {path}, got '{line}'"),
        })?;
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        if key == "command" {
            if !has_command {
                out.insert(1, value.to_string());
            }
            continue;
        }
        let flag = format!("--{key}");
        let given = argv.iter().any(|a| a == &flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        match value {
            "true" => extra.push(flag),
            "false" => {}
            _ => extra.push(format!("{flag}={value}")),
        }
    }
    out.extend(extra);
    Ok(out)
}

/// Write through a temporary file in the target directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

fn timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

struct Ctx {
    format: Option<Format>,
    stamp: bool,
}

impl Ctx {
    fn json(&self, mut v: Value) -> Vec<u8> {
        if self.stamp {
            if let Some(obj) = v.as_object_mut() {
                obj.insert("timestamp".into(), json!(timestamp()));
            }
        }
        let mut s = serde_json::to_string_pretty(&v).expect("values are finite");
        s.push('\n');
        s.into_bytes()
    }

    fn report(&self, r: MomentReport) -> MomentReport {
        if self.stamp {
            r
        } else {
            r.without_timing()
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Domain(format!("non-finite value in output: {e}")))
}

fn warn_small_weight(k: u32) {
    if k <= 1000 {
        eprintln!("warning: k = {k} <= 1000; the asymptotic error bound is not guaranteed in this range");
    }
}

fn log_grid(spec: &str, points: usize) -> Result<Vec<f64>> {
    let (lo, hi) = spec
        .split_once("..")
        .ok_or_else(|| Error::Domain(format!("grid must look like lo..hi, got '{spec}'")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::Domain(format!("grid bound '{s}': {e}")))
    };
    let (lo, hi) = (parse(lo)?, parse(hi)?);
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || points < 2 {
        return Err(Error::Domain(format!("need 0 < lo < hi and at least 2 points (got {lo}..{hi}, {points})")));
    }
    let step = (hi / lo).ln() / (points - 1) as f64;
    Ok((0..points).map(|i| lo * (step * i as f64).exp()).collect())
}

fn run_weights(a: &WeightsArgs, ctx: &Ctx) -> Result<Vec<u8>> {
    let spec = WeightSpec::new(a.k, a.q)?.with_sigma(a.sigma)?;
    let ys = log_grid(&a.grid, a.points)?;
    let (lo, hi) = (ys[0], *ys.last().expect("two points at least"));
    let v = MellinWeight::for_range(WeightKind::V, &spec, lo, hi)?;
    let w = MellinWeight::for_range(WeightKind::W, &spec, lo, hi)?;
    let rows: Vec<(f64, f64, f64)> = ys
        .iter()
        .map(|&y| Ok((y, v.eval(y)?, w.eval(y)?)))
        .collect::<Result<_>>()?;
    Ok(match ctx.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("y,V,W\n");
            for (y, vv, ww) in rows {
                s.push_str(&format!("{y:e},{vv:e},{ww:e}\n"));
            }
            s.into_bytes()
        }
        Format::Json => {
            let rows: Vec<Value> = rows.iter().map(|(y, vv, ww)| json!({"y": y, "V": vv, "W": ww})).collect();
            ctx.json(json!({"k": a.k, "q": a.q, "rows": rows}))
        }
    })
}

fn run_charsum(a: &CharsumArgs, ctx: &Ctx) -> Result<Vec<u8>> {
    if !a.verify {
        return Err(Error::Domain("charsum needs --verify".into()));
    }
    let r = charsum_sweep(a.max_m, a.max_n, a.max_cq, 1e-9)?;
    let out = match ctx.format {
        Some(Format::Json) => ctx.json(to_value(&r)?),
        _ => format!(
            "{} tuples, {} mismatches\nexact zeros: {}\nmax relative error: {:e}\nwithout the reciprocity sign: {} wrong\n",
            r.tuples, r.mismatches, r.exact_zeros, r.max_rel_err, r.unsigned_wrong
        )
        .into_bytes(),
    };
    if r.mismatches > 0 {
        return Err(Error::Mismatch(format!(
            "{} of {} tuples disagree, first {:?}",
            r.mismatches, r.tuples, r.first_mismatch
        )));
    }
    Ok(out)
}

fn run_poisson(a: &PoissonArgs, ctx: &Ctx) -> Result<Vec<u8>> {
    let bump = Bump::new(a.sharpness, a.tilt)?;
    let r = poisson_crosscheck(a.m, a.c, a.q, a.n_scale, a.k, &bump)?;
    Ok(match ctx.format.unwrap_or(Format::Json) {
        Format::Json => ctx.json(to_value(&r)?),
        Format::Csv => format!(
            "m,c,q,N,k,lhs,rhs,rel_err,dual_terms\n{},{},{},{},{},{:e},{:e},{:e},{}\n",
            a.m, a.c, a.q, a.n_scale, a.k, r.lhs, r.rhs, r.rel_err, r.dual_terms
        )
        .into_bytes(),
    })
}

fn csv_reports(reports: &[MomentReport]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(&mut buf, reports)?;
    Ok(buf)
}

fn run_moment(a: &MomentArgs, ctx: &Ctx) -> Result<Vec<u8>> {
    let spec = WeightSpec::new(a.k, a.q)?;
    let pol = a.policy.policy();
    pol.validate(&spec)?;
    warn_small_weight(a.k);
    let r = ctx.report(moment_total(&spec, &pol)?);
    match ctx.format.unwrap_or(Format::Json) {
        Format::Json => Ok(ctx.json(to_value(&r)?)),
        Format::Csv => csv_reports(&[r]),
    }
}

fn run_scan(a: &ScanArgs, ctx: &Ctx) -> Result<Vec<u8>> {
    let primes = if a.primes.is_empty() {
        scan_primes(a.q_min, a.q_max, a.count)?
    } else {
        a.primes.clone()
    };
    let pol = a.policy.policy();
    let specs: Vec<WeightSpec> = primes.iter().map(|&q| WeightSpec::new(a.k, q)).collect::<Result<_>>()?;
    for s in &specs {
        pol.validate(s)?;
    }
    warn_small_weight(a.k);
    let reports: Vec<MomentReport> = specs
        .iter()
        .map(|s| {
            let r = moment_total(s, &pol).map(|r| ctx.report(r));
            if let Ok(r) = &r {
                eprintln!("q = {}: total {:.10}", r.q, r.total);
            }
            r
        })
        .collect::<Result<_>>()?;
    let fit = if reports.len() >= 3 {
        Some(asymptotic_fit(&reports.iter().map(|r| (r.q, r.total)).collect::<Vec<_>>())?)
    } else {
        None
    };
    if let Some(f) = &fit {
        eprintln!("fit: alpha {:.6} beta {:.6} max residual {:.3e}", f.alpha, f.beta, f.max_residual);
    }
    match ctx.format.unwrap_or(Format::Csv) {
        Format::Csv => csv_reports(&reports),
        Format::Json => {
            let a_k: Vec<f64> = specs
                .iter()
                .map(|s| residue_constants(s).map(|r| r.big_a))
                .collect::<Result<_>>()?;
            Ok(ctx.json(json!({
                "k": a.k,
                "reports": to_value(&reports)?,
                "fit": to_value(&fit)?,
                "A_k": a_k,
            })))
        }
    }
}

fn run_sieve(a: &SieveArgs, ctx: &Ctx) -> Result<Vec<u8>> {
    let rows = sieve_scan(&a.d_values, &a.c1_values, &a.q_values, a.u)?;
    if let Some(worst) = rows.iter().map(|r| r.normalized()).reduce(f64::max) {
        eprintln!("max ratio / log^2(2 + D C1): {worst:.6}");
    }
    match ctx.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            write_sieve_csv(&mut buf, &rows)?;
            Ok(buf)
        }
        Format::Json => Ok(ctx.json(json!({ "rows": to_value(&rows)? }))),
    }
}

fn run_direct(a: &DirectArgs, ctx: &Ctx) -> Result<Vec<u8>> {
    let records = match &a.file {
        Some(p) => read_eigenfile(p)?,
        None => bundled_records()?,
    };
    let opts = AfeOptions {
        tol: a.tol,
        cut_scale: a.cut_scale,
    };
    if !(opts.tol > 0.0) || !(opts.cut_scale >= 1.0) {
        return Err(Error::Domain("tol must be positive and cut-scale >= 1".into()));
    }
    let mut reports = Vec::new();
    for r in &records {
        if r.level == 1 {
            eprintln!("note: '{}' has level 1; evaluated in the machinery-test mode", r.label);
        }
        let spec = r.spec(a.sigma)?;
        reports.extend(nonvanishing_report(std::slice::from_ref(r), &spec, &opts)?);
    }
    match ctx.format.unwrap_or(Format::Json) {
        Format::Json => Ok(ctx.json(json!({ "reports": to_value(&reports)? }))),
        Format::Csv => {
            let mut buf = Vec::new();
            write_report_csv(&mut buf, &reports)?;
            Ok(buf)
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let ctx = Ctx {
        format: cli.format,
        stamp: !cli.no_timestamp,
    };
    let bytes = match &cli.command {
        Command::Weights(a) => run_weights(a, &ctx)?,
        Command::Charsum(a) => run_charsum(a, &ctx)?,
        Command::Poisson(a) => run_poisson(a, &ctx)?,
        Command::Moment(a) => run_moment(a, &ctx)?,
        Command::Scan(a) => run_scan(a, &ctx)?,
        Command::Sieve(a) => run_sieve(a, &ctx)?,
        Command::Direct(a) => run_direct(a, &ctx)?,
    };
    match &cli.output {
        Some(p) => write_atomic(p, &bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let argv = match merge_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.threads.unwrap_or(0);
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be positive");
        return ExitCode::from(1);
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_capacity() { 2 } else { 1 })
        }
    }
}
