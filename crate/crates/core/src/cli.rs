//! `efx` command line: gen, solve, check, bench and oracle.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 postcondition failure or
//! failed check.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::fairness::{self, envy_report, is_po_bruteforce, Factor, Notion, PoStatus};
use crate::framework::{find_certificate, validate_certificate, CertificateMode, FrameworkError, FriendlyCertificate, SwapTrace, Validation};
use crate::initializers::{self, validate_rounded_er, PipelineError, PipelineOutput, RoundedValidation, DEFAULT_BUDGET};
use crate::market::is_mpb_allocation;
use crate::model::{generate_random, parse_instance, parse_rational, Allocation, Distribution, Instance, PriceVector, Rational};
use crate::oracle::{oracle_rows, write_oracle_csv, OracleRow};

/// Significant digits of the decimal factor column.
pub const DECIMAL_DIGITS: usize = 20;

pub const CSV_HEADER: [&str; 9] = ["instance", "method", "factor", "factor_decimal", "swaps", "cert_mode", "po", "ms", "flags"];

#[derive(Parser, Debug)]
#[command(name = "efx", version, about = "Approximate-EFX allocation of indivisible chores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate random instances.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// uniform-int:LO..HI or bivalued:K
        #[arg(long, default_value = "uniform-int:1..10")]
        dist: Distribution,
        /// Output file (count 1) or directory (count > 1); stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one pipeline on an instance.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        /// Rounded allocation (er4 only).
        #[arg(long)]
        alloc: Option<PathBuf>,
        /// Rounded prices (er4 only).
        #[arg(long)]
        prices: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        /// Write the output allocation here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the swap log here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check fairness and efficiency properties of an allocation.
    Check {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        alloc: PathBuf,
        #[arg(long)]
        prices: Option<PathBuf>,
        /// efx:L, efk:A:K, pefk:A:K, pefx:A, mpb, po, cert:L:strict|weak|weak-global
        #[arg(long, value_delimiter = ',', required = true)]
        props: Vec<String>,
        /// N_H for cert checks, 1-based; searched when omitted.
        #[arg(long, value_delimiter = ',')]
        nh: Option<Vec<usize>>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        /// Write the per-pair EFX envy table here.
        #[arg(long)]
        envy_csv: Option<PathBuf>,
    },
    /// Run methods over a corpus directory and emit CSV.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "auto")]
        methods: Vec<Method>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        /// Largest `n^m` for the brute-force PO column.
        #[arg(long, default_value_t = 1 << 16)]
        po_budget: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force oracle metrics as CSV.
    Oracle {
        #[arg(long, required_unless_present = "corpus")]
        instance: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Auto,
    Pef1,
    Bivalued,
    SmallM,
    Er4,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Auto => "auto",
            Method::Pef1 => "pef1",
            Method::Bivalued => "bivalued",
            Method::SmallM => "small-m",
            Method::Er4 => "er4",
        })
    }
}

impl Method {
    pub fn resolve(self, inst: &Instance) -> Method {
        match self {
            Method::Auto if inst.m() <= 2 * inst.n() => Method::SmallM,
            Method::Auto if inst.bivalued_ratio().is_some() => Method::Bivalued,
            Method::Auto => Method::Pef1,
            m => m,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Finding(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn load_instance(path: &Path) -> Result<Instance, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_instance(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_allocation(path: &Path, inst: &Instance) -> Result<Allocation, CliError> {
    Allocation::parse(&read(path)?, inst.n(), inst.m()).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_prices(path: &Path, inst: &Instance) -> Result<PriceVector, CliError> {
    PriceVector::parse(&read(path)?, inst.m()).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// One row of solve/bench output.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub instance: String,
    pub method: String,
    pub factor: Option<Factor>,
    pub swaps: Option<usize>,
    pub cert_mode: String,
    pub po: String,
    pub ms: u128,
    pub flags: Vec<String>,
}

impl RunReport {
    pub fn record(&self) -> [String; 9] {
        [
            self.instance.clone(),
            self.method.clone(),
            self.factor.as_ref().map_or_else(String::new, ToString::to_string),
            self.factor.as_ref().map_or_else(String::new, |f| f.to_decimal(DECIMAL_DIGITS)),
            self.swaps.map_or_else(String::new, |s| s.to_string()),
            self.cert_mode.clone(),
            self.po.clone(),
            self.ms.to_string(),
            self.flags.join(";"),
        ]
    }

    pub fn failed(&self) -> bool {
        self.flags.iter().any(|f| f.starts_with("error="))
    }

    pub fn is_finding(&self) -> bool {
        self.flags.iter().any(|f| f.starts_with("error=finding"))
    }
}

/// Whether an error is a postcondition failure or a finding rather than bad
/// input.
pub fn is_finding(e: &PipelineError) -> bool {
    !matches!(
        e,
        PipelineError::BudgetExceeded { .. }
            | PipelineError::NotBivalued
            | PipelineError::TooManyChores { .. }
            | PipelineError::RoundedInputInvalid(_)
            | PipelineError::Fairness(_)
            | PipelineError::Market(_)
    )
}

fn failure_trace(e: &PipelineError) -> Option<&SwapTrace> {
    match e {
        PipelineError::Framework(FrameworkError::PostconditionViolated { trace, .. }) => Some(trace),
        _ => None,
    }
}

/// Runs one method; `rounded` supplies the er4 input.
pub fn run_method(inst: &Instance, method: Method, rounded: Option<(&Allocation, &PriceVector)>, budget: u64) -> Result<PipelineOutput, PipelineError> {
    match method.resolve(inst) {
        Method::Pef1 => initializers::solve_2efx(inst, budget),
        Method::Bivalued => initializers::solve_bivalued(inst, budget),
        Method::SmallM => initializers::solve_small_m(inst),
        Method::Er4 => {
            let (x, p) = rounded.ok_or_else(|| PipelineError::RoundedInputInvalid(Vec::new()))?;
            match validate_rounded_er(inst, x, p) {
                RoundedValidation::Valid(input) => initializers::solve_4efx(inst, &input),
                RoundedValidation::Violations(v) => Err(PipelineError::RoundedInputInvalid(v)),
            }
        }
        Method::Auto => unreachable!("resolved above"),
    }
}

/// Re-checks a pipeline output and fills a report row.
fn report_for(id: &str, inst: &Instance, method: Method, out: &PipelineOutput, ms: u128, po_budget: u64) -> Result<RunReport, String> {
    let factor = fairness::efx_factor(inst, &out.allocation).map_err(|e| e.to_string())?;
    if factor != out.factor || factor != out.trace.final_factor {
        return Err(format!(
            "checker factor {factor} disagrees with solver factor {} / trace factor {}",
            out.factor, out.trace.final_factor
        ));
    }
    if !factor.at_most(&out.lambda) {
        return Err(format!("factor {factor} exceeds {}", out.lambda));
    }
    let po = match &out.prices {
        Some(p) if is_mpb_allocation(inst, &out.allocation, p).unwrap_or(false) => "fPO".to_string(),
        _ => match is_po_bruteforce(inst, &out.allocation, po_budget) {
            Ok(PoStatus::Po) => "PO".into(),
            Ok(PoStatus::Dominated(_)) => "dominated".into(),
            Ok(PoStatus::BudgetExceeded) => "unknown".into(),
            Err(e) => return Err(e.to_string()),
        },
    };
    Ok(RunReport {
        instance: id.to_string(),
        method: method.resolve(inst).to_string(),
        factor: Some(factor),
        swaps: Some(out.swap_count()),
        cert_mode: out.cert_mode(),
        po,
        ms,
        flags: out.flags.clone(),
    })
}

fn error_report(id: &str, method: Method, inst: Option<&Instance>, ms: u128, finding: bool, msg: &str) -> RunReport {
    let kind = if finding { "finding" } else { "input" };
    RunReport {
        instance: id.to_string(),
        method: inst.map_or(method, |i| method.resolve(i)).to_string(),
        factor: None,
        swaps: None,
        cert_mode: String::new(),
        po: String::new(),
        ms,
        flags: vec![format!("error={kind}: {msg}")],
    }
}

fn write_reports<W: Write>(w: W, rows: &[RunReport]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record(r.record())?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_gen(n: usize, m: usize, seed: u64, count: u64, dist: &Distribution, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    if count > 1 && out.is_none() {
        return Err(CliError::Usage("--out DIR is required when --count > 1".into()));
    }
    for k in 0..count {
        let s = seed + k;
        let inst = generate_random(s, n, m, dist).map_err(|e| CliError::Usage(e.to_string()))?;
        let text = format!("# seed {s} dist {dist}\n{}", inst.to_text());
        match out {
            None => stdout.write_all(text.as_bytes())?,
            Some(p) if count == 1 => fs::write(p, text)?,
            Some(dir) => {
                fs::create_dir_all(dir)?;
                fs::write(dir.join(format!("n{n}_m{m}_s{s}.txt")), text)?;
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    instance: &Path,
    method: Method,
    alloc: Option<&Path>,
    prices: Option<&Path>,
    budget: u64,
    out: Option<&Path>,
    trace_path: Option<&Path>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let inst = load_instance(instance).map_err(CliError::Usage)?;
    let rounded = match (method.resolve(&inst), alloc, prices) {
        (Method::Er4, Some(a), Some(p)) => Some((load_allocation(a, &inst)?, load_prices(p, &inst)?)),
        (Method::Er4, _, _) => return Err(CliError::Usage("er4 requires --alloc and --prices".into())),
        _ => None,
    };
    let id = instance.file_stem().map_or_else(|| "instance".into(), |s| s.to_string_lossy().into_owned());
    let start = Instant::now();
    let result = run_method(&inst, method, rounded.as_ref().map(|(x, p)| (x, p)), budget);
    let ms = start.elapsed().as_millis();
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            if let Some(t) = failure_trace(&e) {
                match trace_path {
                    Some(p) => fs::write(p, t.to_log())?,
                    None => stderr.write_all(t.to_log().as_bytes())?,
                }
            }
            return Err(if is_finding(&e) {
                CliError::Finding(e.to_string())
            } else {
                CliError::Usage(e.to_string())
            });
        }
    };
    if let Some(p) = trace_path {
        fs::write(p, output.trace.to_log())?;
    }
    let report = report_for(&id, &inst, method, &output, ms, 1 << 16).map_err(CliError::Finding)?;
    if let Some(p) = out {
        fs::write(p, output.allocation.to_text())?;
    }
    write_reports(stdout, &[report])?;
    Ok(())
}

fn parse_lambda(tok: &str, prop: &str) -> Result<Rational, CliError> {
    parse_rational(tok).ok_or_else(|| CliError::Usage(format!("bad number {tok:?} in {prop:?}")))
}

fn parse_k(tok: &str, prop: &str) -> Result<usize, CliError> {
    tok.parse().map_err(|_| CliError::Usage(format!("bad k {tok:?} in {prop:?}")))
}

#[allow(clippy::too_many_arguments)]
fn cmd_check(
    instance: &Path,
    alloc: &Path,
    prices: Option<&Path>,
    props: &[String],
    nh: Option<&[usize]>,
    budget: u64,
    envy_csv: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let inst = load_instance(instance).map_err(CliError::Usage)?;
    let x = load_allocation(alloc, &inst)?;
    let p = prices.map(|p| load_prices(p, &inst)).transpose()?;
    let need_prices = |prop: &str| p.as_ref().ok_or_else(|| CliError::Usage(format!("{prop} needs --prices")));
    let fe = |e: fairness::FairnessError| CliError::Usage(e.to_string());
    let mut all = true;
    for prop in props {
        let parts: Vec<&str> = prop.split(':').collect();
        let (pass, detail) = match parts.as_slice() {
            ["efx", l] => {
                let f = fairness::efx_factor(&inst, &x).map_err(fe)?;
                (f.at_most(&parse_lambda(l, prop)?), format!("factor={f}"))
            }
            ["efk", a, k] => (
                fairness::is_alpha_efk(&inst, &x, &parse_lambda(a, prop)?, parse_k(k, prop)?).map_err(fe)?,
                String::new(),
            ),
            ["pefk", a, k] => (
                fairness::is_pefk(&inst, &x, need_prices(prop)?, &parse_lambda(a, prop)?, parse_k(k, prop)?).map_err(fe)?,
                String::new(),
            ),
            ["pefx", a] => (
                fairness::is_pefx(&inst, &x, need_prices(prop)?, &parse_lambda(a, prop)?).map_err(fe)?,
                String::new(),
            ),
            ["mpb"] => (
                is_mpb_allocation(&inst, &x, need_prices(prop)?).map_err(|e| CliError::Usage(e.to_string()))?,
                String::new(),
            ),
            ["po"] => match is_po_bruteforce(&inst, &x, budget).map_err(fe)? {
                PoStatus::Po => (true, String::new()),
                PoStatus::Dominated(w) => (false, format!("witness={w}")),
                PoStatus::BudgetExceeded => return Err(CliError::Usage(format!("{prop}: n^m exceeds the budget {budget}"))),
            },
            ["cert", l, mode] => {
                let lambda = parse_lambda(l, prop)?;
                let mode = match *mode {
                    "strict" => CertificateMode::Strict,
                    "weak" => CertificateMode::Weak { global_minimum: false },
                    "weak-global" => CertificateMode::Weak { global_minimum: true },
                    other => return Err(CliError::Usage(format!("unknown certificate mode {other:?}"))),
                };
                let fwe = |e: FrameworkError| CliError::Usage(e.to_string());
                match nh {
                    Some(list) => {
                        let idx = list
                            .iter()
                            .map(|&i| if i >= 1 && i <= inst.n() { Ok(i - 1) } else { Err(CliError::Usage(format!("agent {i} out of range"))) })
                            .collect::<Result<Vec<_>, _>>()?;
                        let cert = FriendlyCertificate::new(&inst, &x, lambda, &idx, mode).map_err(fwe)?;
                        match validate_certificate(&inst, &x, &cert).map_err(fwe)? {
                            Validation::Valid => (true, format!("nh={}", one_based(&cert.nh))),
                            Validation::Violations(v) => {
                                (false, v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
                            }
                        }
                    }
                    None => match find_certificate(&inst, &x, &lambda, mode).map_err(fwe)? {
                        Some(cert) => (true, format!("nh={}", one_based(&cert.nh))),
                        None => (false, "no partition works".into()),
                    },
                }
            }
            _ => return Err(CliError::Usage(format!("unknown property {prop:?}"))),
        };
        all &= pass;
        let verdict = if pass { "PASS" } else { "FAIL" };
        if detail.is_empty() {
            writeln!(stdout, "{verdict} {prop}")?;
        } else {
            writeln!(stdout, "{verdict} {prop} {detail}")?;
        }
    }
    if let Some(path) = envy_csv {
        let report = envy_report(&inst, &x, Notion::Efx).map_err(fe)?;
        report.write_csv(fs::File::create(path)?)?;
    }
    if all {
        Ok(())
    } else {
        Err(CliError::Finding("some properties failed".into()))
    }
}

fn one_based(v: &[usize]) -> String {
    format!("{{{}}}", v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(","))
}

/// Instance files of a corpus: `*.txt`, sorted by name. Rounded inputs for
/// er4 sit next to them as `<stem>.alloc` and `<stem>.prices`.
pub fn corpus_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

fn bench_one(path: &Path, method: Method, budget: u64, po_budget: u64) -> RunReport {
    let id = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let inst = match load_instance(path) {
        Ok(i) => i,
        Err(e) => return error_report(&id, method, None, 0, false, &e),
    };
    let rounded = if method.resolve(&inst) == Method::Er4 {
        let load = || -> Result<(Allocation, PriceVector), CliError> {
            Ok((
                load_allocation(&path.with_extension("alloc"), &inst)?,
                load_prices(&path.with_extension("prices"), &inst)?,
            ))
        };
        match load() {
            Ok(r) => Some(r),
            Err(CliError::Usage(e) | CliError::Finding(e)) => return error_report(&id, method, Some(&inst), 0, false, &e),
        }
    } else {
        None
    };
    let start = Instant::now();
    let result = run_method(&inst, method, rounded.as_ref().map(|(x, p)| (x, p)), budget);
    let ms = start.elapsed().as_millis();
    match result {
        Ok(out) => report_for(&id, &inst, method, &out, ms, po_budget).unwrap_or_else(|e| error_report(&id, method, Some(&inst), ms, true, &e)),
        Err(e) => error_report(&id, method, Some(&inst), ms, is_finding(&e), &e.to_string()),
    }
}

fn cmd_bench(corpus: &Path, methods: &[Method], budget: u64, po_budget: u64, out: Option<&Path>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let files = corpus_files(corpus).map_err(|e| CliError::Usage(format!("{}: {e}", corpus.display())))?;
    let jobs: Vec<(&PathBuf, Method)> = files.iter().flat_map(|f| methods.iter().map(move |&m| (f, m))).collect();
    let rows: Vec<RunReport> = jobs.par_iter().map(|(f, m)| bench_one(f, *m, budget, po_budget)).collect();
    match out {
        Some(p) => write_reports(fs::File::create(p)?, &rows)?,
        None => write_reports(&mut *stdout, &rows)?,
    }
    let failures = rows.iter().filter(|r| r.failed()).count();
    let max = rows.iter().filter_map(|r| r.factor.clone()).max();
    let swaps: Vec<usize> = rows.iter().filter_map(|r| r.swaps).collect();
    let mean = if swaps.is_empty() {
        Rational::from_integer(0.into())
    } else {
        Rational::new(swaps.iter().sum::<usize>().into(), swaps.len().into())
    };
    writeln!(
        stderr,
        "instances={} rows={} max_factor={} mean_swaps={} failures={failures}",
        files.len(),
        rows.len(),
        max.map_or_else(|| "-".into(), |f| f.to_string()),
        fairness::decimal(&mean, 6),
    )?;
    if rows.iter().any(RunReport::is_finding) {
        Err(CliError::Finding(format!("{failures} row(s) failed")))
    } else {
        Ok(())
    }
}

fn cmd_oracle(instance: Option<&Path>, corpus: Option<&Path>, budget: u64, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut files = Vec::new();
    if let Some(p) = instance {
        files.push(p.to_path_buf());
    }
    if let Some(dir) = corpus {
        files.extend(corpus_files(dir)?);
    }
    let rows: Vec<Result<Vec<OracleRow>, String>> = files
        .par_iter()
        .map(|f| {
            let id = f.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            let inst = load_instance(f)?;
            oracle_rows(&id, &inst, budget).map_err(|e| format!("{id}: {e}"))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>().map_err(CliError::Usage)?;
    write_oracle_csv(&rows.concat(), stdout)?;
    Ok(())
}

/// Entry point shared by the binary and the tests.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Gen { n, m, seed, count, dist, out } => cmd_gen(*n, *m, *seed, *count, dist, out.as_deref(), stdout),
        Command::Solve {
            instance,
            method,
            alloc,
            prices,
            budget,
            out,
            trace,
        } => cmd_solve(
            instance,
            *method,
            alloc.as_deref(),
            prices.as_deref(),
            *budget,
            out.as_deref(),
            trace.as_deref(),
            stdout,
            stderr,
        ),
        Command::Check {
            instance,
            alloc,
            prices,
            props,
            nh,
            budget,
            envy_csv,
        } => cmd_check(instance, alloc, prices.as_deref(), props, nh.as_deref(), *budget, envy_csv.as_deref(), stdout),
        Command::Bench {
            corpus,
            methods,
            budget,
            po_budget,
            out,
        } => cmd_bench(corpus, methods, *budget, *po_budget, out.as_deref(), stdout, stderr),
        Command::Oracle { instance, corpus, budget } => cmd_oracle(instance.as_deref(), corpus.as_deref(), *budget, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
        Err(CliError::Finding(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
    }
}
