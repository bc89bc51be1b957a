//! Command-line dispatch. Every verb maps to one module operation set and
//! emits machine-readable JSON on stdout (CSV for per-sample streams).
//! Numeric domain violations are reported before any sampling or quadrature
//! runs; exit codes are nonzero exactly when a verdict or check fails.

use crate::determinantal::{self, KernelEvaluator};
use crate::eigensolver;
use crate::ensemble::{self, EnsembleKind, SampleSeed};
use crate::harness::{self, EnsembleSpec, ExperimentPlan, Verdict};
use crate::limits;
use crate::ples::{self, PlesResult};
use crate::semicircle;
use crate::testfn::{Observable, TestFunction};
use crate::{Error, Result, DEFAULT_DELTA, TIME_DELTA};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

/// Top-level argument grammar.
#[derive(Parser, Debug)]
#[command(
    name = "ples",
    version,
    about = "Spectral linear-statistics laboratory for Wigner ensembles"
)]
pub struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Sample spectra and stream per-sample statistic rows as CSV
    Sample(SampleArgs),
    /// Exact finite-n mean and variance from the determinantal kernel
    Exact(ExactArgs),
    /// Limiting variance of a (possibly truncated) spectral statistic
    LimitVariance(LimitVarianceArgs),
    /// Limiting covariance of the centered rank process at two times
    ProcessCov(ProcessCovArgs),
    /// Semicircle quantile at a rank fraction
    Quantile(QuantileArgs),
    /// Run an experiment plan file through the Monte Carlo harness
    Experiment(ExperimentArgs),
    /// Run the always-on invariant suite; exit nonzero on any failure
    Validate,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Ensemble kind: gue, gue-tridiag or wigner-matched
    #[arg(long, default_value = "gue-tridiag")]
    ensemble: String,
    /// Matrix dimension
    #[arg(long)]
    n: usize,
    /// Number of samples
    #[arg(long, default_value_t = 1)]
    samples: usize,
    /// Master seed; fully determines all stochastic output bytes
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Statistic descriptors, repeatable: typeA:f:u, typeB:f:y,
    /// counting:u or process:f:t (f as in the function registry)
    #[arg(long = "stat", alias = "stats", required = true)]
    stats: Vec<String>,
    /// Bulk margin for thresholds; admissible u lie in [-2+delta, 2-delta]
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Write rows to this file instead of stdout and print a JSON summary
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExactArgs {
    /// Matrix dimension
    #[arg(long)]
    n: usize,
    /// Test function from the registry (x, x2, x3, poly:..., ...)
    #[arg(long = "fn")]
    f: String,
    /// Optional truncation threshold; omitted means the whole spectrum
    #[arg(long)]
    u: Option<f64>,
}

#[derive(Args, Debug)]
struct LimitVarianceArgs {
    /// Test function from the registry
    #[arg(long = "fn")]
    f: String,
    /// Truncation threshold in [-2, 2]
    #[arg(long)]
    u: f64,
}

#[derive(Args, Debug)]
struct ProcessCovArgs {
    /// Test function from the registry
    #[arg(long = "fn")]
    f: String,
    /// First time in the band
    #[arg(long)]
    s: f64,
    /// Second time in the band
    #[arg(long)]
    t: f64,
}

#[derive(Args, Debug)]
struct QuantileArgs {
    /// Rank fraction in [0, 1]
    #[arg(long)]
    t: f64,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Path to a TOML plan
    #[arg(long)]
    plan: PathBuf,
    /// Parse and validate the plan, echo it as JSON, and exit without running
    #[arg(long)]
    check: bool,
}

/// Parse argv and dispatch; returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage text and picks 0 for --help/--version
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run_verb(cli.verb) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run_verb(verb: Verb) -> Result<i32> {
    match verb {
        Verb::Sample(args) => cmd_sample(args),
        Verb::Exact(args) => cmd_exact(args),
        Verb::LimitVariance(args) => cmd_limit_variance(args),
        Verb::ProcessCov(args) => cmd_process_cov(args),
        Verb::Quantile(args) => cmd_quantile(args),
        Verb::Experiment(args) => cmd_experiment(args),
        Verb::Validate => cmd_validate(),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{text}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            // consumer closed the pipe (e.g. head); not our failure
            std::process::exit(0);
        }
        return Err(e.into());
    }
    Ok(())
}

fn exit_if_broken_pipe(e: &csv::Error) {
    if let csv::ErrorKind::Io(io) = e.kind() {
        if io.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
    }
}

// ---------------------------------------------------------------------------
// sample

enum StatDescriptor {
    TypeA { f: TestFunction, u: f64 },
    TypeB { f: TestFunction, y: f64 },
    Counting { u: f64 },
    Process { f: TestFunction, t: f64 },
}

impl StatDescriptor {
    fn parse(text: &str) -> Result<Self> {
        let mut parts = text.splitn(3, ':');
        let kind = parts.next().unwrap_or_default();
        let err = |msg: &str| Error::invalid(format!("stat descriptor {text:?}: {msg}"));
        let num = |tok: Option<&str>, what: &str| -> Result<f64> {
            tok.ok_or_else(|| err(&format!("missing {what}")))?
                .trim()
                .parse::<f64>()
                .map_err(|_| err(&format!("bad {what}")))
        };
        match kind {
            "typeA" => {
                let f = TestFunction::from_str(parts.next().ok_or_else(|| err("missing f"))?)?;
                Ok(StatDescriptor::TypeA {
                    f,
                    u: num(parts.next(), "threshold u")?,
                })
            }
            "typeB" => {
                let f = TestFunction::from_str(parts.next().ok_or_else(|| err("missing f"))?)?;
                let y = num(parts.next(), "rank fraction y")?;
                if !(y > 0.0 && y <= 1.0) {
                    return Err(err("rank fraction outside (0, 1]"));
                }
                Ok(StatDescriptor::TypeB { f, y })
            }
            "counting" => Ok(StatDescriptor::Counting {
                u: num(parts.next(), "threshold u")?,
            }),
            "process" => {
                let f = TestFunction::from_str(parts.next().ok_or_else(|| err("missing f"))?)?;
                Ok(StatDescriptor::Process {
                    f,
                    t: num(parts.next(), "time t")?,
                })
            }
            _ => Err(err("unknown kind; expected typeA, typeB, counting or process")),
        }
    }

    fn label(&self) -> String {
        match self {
            StatDescriptor::TypeA { f, u } => format!("typeA[{f};u={u}]"),
            StatDescriptor::TypeB { f, y } => format!("typeB[{f};y={y}]"),
            StatDescriptor::Counting { u } => format!("counting[u={u}]"),
            StatDescriptor::Process { f, t } => format!("process[{f};t={t}]"),
        }
    }

    /// Domain checks that must fire before any sampling happens.
    fn check_domain(&self, delta: f64) -> Result<()> {
        let (lo, hi) = (-2.0 + delta, 2.0 - delta);
        match self {
            StatDescriptor::TypeA { u, .. } | StatDescriptor::Counting { u } => {
                if !(*u >= lo && *u <= hi) {
                    return Err(Error::invalid(format!(
                        "threshold {u} outside bulk window [{lo}, {hi}]"
                    )));
                }
            }
            StatDescriptor::TypeB { .. } => {}
            StatDescriptor::Process { t, .. } => {
                let (lo_t, hi_t) = (TIME_DELTA, 1.0 - TIME_DELTA);
                if !(*t >= lo_t && *t <= hi_t) {
                    return Err(Error::invalid(format!(
                        "time {t} outside band [{lo_t}, {hi_t}]"
                    )));
                }
            }
        }
        Ok(())
    }

    fn evaluate(
        &self,
        spectrum: &eigensolver::Spectrum,
        delta: f64,
    ) -> Result<PlesResult> {
        match self {
            StatDescriptor::TypeA { f, u } => ples::type_a_with(
                spectrum,
                f,
                *u,
                delta,
                crate::ples::CenteringMode::SemicircleIntegral,
            ),
            StatDescriptor::TypeB { f, y } => {
                let k = ((y * spectrum.n as f64).round() as usize).clamp(1, spectrum.n);
                ples::type_b(spectrum, f, k)
            }
            StatDescriptor::Counting { u } => ples::counting_statistic(spectrum, *u),
            StatDescriptor::Process { f, t } => ples::process_point(spectrum, f, *t),
        }
    }
}

#[derive(Serialize)]
struct SampleSummary {
    ensemble: EnsembleKind,
    n: usize,
    samples: usize,
    seed: u64,
    rows: usize,
    csv: PathBuf,
}

fn cmd_sample(args: SampleArgs) -> Result<i32> {
    let kind = EnsembleKind::from_str(&args.ensemble)?;
    if kind == EnsembleKind::WignerCustom {
        return Err(Error::invalid(
            "wigner-custom needs atom tables; describe it in an experiment plan instead",
        ));
    }
    if args.n == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if !(args.delta > 0.0 && args.delta < 2.0) {
        return Err(Error::invalid(format!("delta {} outside (0, 2)", args.delta)));
    }
    let stats: Vec<StatDescriptor> = args
        .stats
        .iter()
        .map(|s| StatDescriptor::parse(s))
        .collect::<Result<_>>()?;
    for s in &stats {
        s.check_domain(args.delta)?;
    }

    let spec = EnsembleSpec::of_kind(kind);
    let stdout = std::io::stdout();
    let mut sink: Box<dyn Write> = match &args.csv {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(stdout.lock()),
    };
    let mut w = csv::Writer::from_writer(&mut sink);
    let emit = |w: &mut csv::Writer<_>, record: [String; 8]| -> Result<()> {
        w.write_record(record).map_err(|e| {
            exit_if_broken_pipe(&e);
            Error::from(e)
        })
    };
    emit(
        &mut w,
        [
            "label", "kind", "n", "sample", "stream", "raw", "centered", "normalized",
        ]
        .map(String::from),
    )?;
    let mut rows = 0usize;
    for i in 0..args.samples {
        let seed = SampleSeed {
            master: args.seed,
            stream: i as u64,
        };
        let spectrum = harness::sample_spectrum(&spec, args.n, seed)?;
        for s in &stats {
            let r = s.evaluate(&spectrum, args.delta)?;
            emit(
                &mut w,
                [
                    s.label(),
                    r.statistic_kind.to_string(),
                    args.n.to_string(),
                    i.to_string(),
                    (i as u64).to_string(),
                    format!("{:.17e}", r.raw),
                    format!("{:.17e}", r.centered),
                    r.normalized.map(|v| format!("{v:.17e}")).unwrap_or_default(),
                ],
            )?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))?;
    drop(w);
    drop(sink);
    if let Some(path) = args.csv {
        print_json(&SampleSummary {
            ensemble: kind,
            n: args.n,
            samples: args.samples,
            seed: args.seed,
            rows,
            csv: path,
        })?;
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// closed-form and kernel verbs

#[derive(Serialize)]
struct ExactOutput {
    n: usize,
    f: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    u: Option<f64>,
    mean: f64,
    variance: f64,
}

fn cmd_exact(args: ExactArgs) -> Result<i32> {
    if args.n == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let f = TestFunction::from_str(&args.f)?;
    let (mean, variance) = match args.u {
        Some(u) => {
            if !u.is_finite() {
                return Err(Error::invalid("threshold must be finite"));
            }
            (
                determinantal::exact_threshold_mean(args.n, &f, u)?,
                determinantal::exact_threshold_variance(args.n, &f, u)?,
            )
        }
        None => {
            let phi = Observable::Plain(f.clone());
            (
                determinantal::exact_mean(args.n, &phi)?,
                determinantal::exact_variance(args.n, &phi)?,
            )
        }
    };
    print_json(&ExactOutput {
        n: args.n,
        f: f.to_string(),
        u: args.u,
        mean,
        variance,
    })?;
    Ok(0)
}

fn cmd_limit_variance(args: LimitVarianceArgs) -> Result<i32> {
    let f = TestFunction::from_str(&args.f)?;
    if !(args.u >= -2.0 && args.u <= 2.0) {
        return Err(Error::invalid(format!(
            "threshold {} outside the spectrum [-2, 2]",
            args.u
        )));
    }
    let lv = limits::limit_variance(&f, args.u)?;
    print_json(&lv)?;
    Ok(0)
}

#[derive(Serialize)]
struct ProcessCovOutput {
    f: String,
    s: f64,
    t: f64,
    covariance: f64,
}

fn cmd_process_cov(args: ProcessCovArgs) -> Result<i32> {
    let f = TestFunction::from_str(&args.f)?;
    let (lo, hi) = (TIME_DELTA, 1.0 - TIME_DELTA);
    for (name, v) in [("s", args.s), ("t", args.t)] {
        if !(v >= lo && v <= hi) {
            return Err(Error::invalid(format!(
                "time {name} = {v} outside band [{lo}, {hi}]"
            )));
        }
    }
    let covariance = limits::process_covariance(&f, args.s, args.t)?;
    print_json(&ProcessCovOutput {
        f: f.to_string(),
        s: args.s,
        t: args.t,
        covariance,
    })?;
    Ok(0)
}

#[derive(Serialize)]
struct QuantileOutput {
    t: f64,
    quantile: f64,
}

fn cmd_quantile(args: QuantileArgs) -> Result<i32> {
    let quantile = semicircle::quantile(args.t)?;
    print_json(&QuantileOutput {
        t: args.t,
        quantile,
    })?;
    Ok(0)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<i32> {
    let plan = ExperimentPlan::from_path(&args.plan)?;
    if args.check {
        print_json(&plan)?;
        return Ok(0);
    }
    let report = harness::run(&plan)?;
    print_json(&report)?;
    Ok(if report.all_passed { 0 } else { 1 })
}

// ---------------------------------------------------------------------------
// validate

fn check(name: &str, outcome: Result<(f64, f64, String)>) -> Verdict {
    match outcome {
        Ok((observed, bound, detail)) => Verdict {
            name: name.to_string(),
            passed: observed <= bound,
            detail,
        },
        Err(e) => Verdict {
            name: name.to_string(),
            passed: false,
            detail: format!("errored: {e}"),
        },
    }
}

fn validate_suite() -> Vec<Verdict> {
    let mut out = Vec::new();

    out.push(check("semicircle cdf and quantile invert each other", {
        (|| {
            let mut worst = 0.0f64;
            for i in 0..=100 {
                let t = i as f64 / 100.0;
                let gap = (semicircle::cdf(semicircle::quantile(t)?) - t).abs();
                worst = worst.max(gap);
            }
            Ok((worst, 1e-10, format!("max |F(Q(t)) - t| = {worst:.3e} over [0, 1]")))
        })()
    }));

    out.push(check("kernel trace equals the dimension", {
        (|| {
            let mut worst = 0.0f64;
            for n in [1usize, 8, 32] {
                let ev = KernelEvaluator::new(n)?;
                let rel = (ev.trace() - n as f64).abs() / n as f64;
                worst = worst.max(rel);
            }
            Ok((worst, 1e-6, format!("max relative trace defect {worst:.3e} at n in {{1, 8, 32}}")))
        })()
    }));

    out.push(check("oscillator wavefunctions are orthonormal on the grid", {
        (|| {
            let ev = KernelEvaluator::new(16)?;
            let mut worst = 0.0f64;
            for l in 0..16 {
                worst = worst.max(ev.orthonormality_defect(l));
            }
            Ok((worst, 1e-8, format!("max defect {worst:.3e} for the first 16 levels")))
        })()
    }));

    out.push(check("QL and Sturm bisection agree on tridiagonal spectra", {
        (|| {
            let tol = 1e-11;
            let mut worst = 0.0f64;
            for stream in 0..5u64 {
                let seed = SampleSeed {
                    master: 313,
                    stream,
                };
                let m = ensemble::sample_gue_tridiagonal(24, seed)?;
                let a = eigensolver::eigenvalues_tridiagonal(&m)?;
                let b = eigensolver::eigenvalues_bisection(&m, tol)?;
                for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                    worst = worst.max((x - y).abs());
                }
            }
            Ok((worst, 10.0 * tol, format!("max eigenvalue deviation {worst:.3e} on 5 seeded matrices")))
        })()
    }));

    out.push(check("sampled matrices satisfy trace and Frobenius identities", {
        (|| {
            let seed = SampleSeed {
                master: 314,
                stream: 0,
            };
            let m = ensemble::sample_gue_dense(32, seed)?;
            let s = eigensolver::eigenvalues_dense(&m)?;
            s.check_identities(m.trace(), m.frobenius_sq(), m.max_abs_entry())?;
            let t = ensemble::sample_gue_tridiagonal(
                64,
                SampleSeed {
                    master: 314,
                    stream: 1,
                },
            )?;
            let st = eigensolver::eigenvalues_tridiagonal(&t)?;
            st.check_identities(t.trace(), t.frobenius_sq(), t.max_abs_entry())?;
            Ok((0.0, 1.0, "identity checks passed at n = 32 (dense) and n = 64 (tridiagonal)".to_string()))
        })()
    }));

    out.push(check("threshold statistic decomposes through the counting function", {
        (|| {
            let seed = SampleSeed {
                master: 315,
                stream: 0,
            };
            let spec = harness::sample_spectrum(
                &EnsembleSpec::of_kind(EnsembleKind::GueTridiagonal),
                64,
                seed,
            )?;
            let residual = ples::decomposition_check(&spec, &TestFunction::Square, 0.5)?;
            Ok((residual, 1e-8, format!("decomposition residual {residual:.3e} at n = 64")))
        })()
    }));

    out.push(check("limiting variances match the closed forms at the edge", {
        (|| {
            let v1 = limits::limit_variance(&TestFunction::Identity, 2.0)?.value;
            let v2 = limits::limit_variance(&TestFunction::Square, 2.0)?.value;
            let worst = (v1 - 1.0).abs().max((v2 - 2.0).abs());
            Ok((worst, 1e-6, format!("|V[x] - 1| and |V[x^2] - 2| at most {worst:.3e}")))
        })()
    }));

    out.push(check("exact kernel moments match the scalar Gaussian at n = 1", {
        (|| {
            let phi = Observable::Plain(TestFunction::Square);
            let mean = determinantal::exact_mean(1, &phi)?;
            let var = determinantal::exact_variance(1, &phi)?;
            let worst = (mean - 1.0).abs().max((var - 2.0).abs());
            Ok((worst, 1e-9, format!("|mean - 1| and |variance - 2| at most {worst:.3e}")))
        })()
    }));

    out
}

#[derive(Serialize)]
struct ValidateReport {
    checks: Vec<Verdict>,
    all_passed: bool,
}

fn cmd_validate() -> Result<i32> {
    let checks = validate_suite();
    let all_passed = checks.iter().all(|c| c.passed);
    print_json(&ValidateReport { checks, all_passed })?;
    Ok(if all_passed { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_descriptors_parse_and_label() {
        let a = StatDescriptor::parse("typeA:x2:0.5").unwrap();
        assert_eq!(a.label(), "typeA[x2;u=0.5]");
        let b = StatDescriptor::parse("typeB:x:0.5").unwrap();
        assert_eq!(b.label(), "typeB[x;y=0.5]");
        let c = StatDescriptor::parse("counting:0").unwrap();
        assert_eq!(c.label(), "counting[u=0]");
        let p = StatDescriptor::parse("process:x3:0.25").unwrap();
        assert_eq!(p.label(), "process[x3;t=0.25]");
        assert!(StatDescriptor::parse("typeC:x:0").is_err());
        assert!(StatDescriptor::parse("typeA:x").is_err(), "missing threshold");
        assert!(StatDescriptor::parse("typeB:x:1.5").is_err(), "fraction out of range");
    }

    #[test]
    fn domain_checks_fire_before_compute() {
        let far = StatDescriptor::parse("typeA:x2:1.9").unwrap();
        assert!(far.check_domain(DEFAULT_DELTA).is_err());
        assert!(far.check_domain(0.05).is_ok(), "narrow margin admits 1.9");
        let late = StatDescriptor::parse("process:x2:0.99").unwrap();
        assert!(late.check_domain(DEFAULT_DELTA).is_err());
    }

    #[test]
    fn validate_suite_is_green() {
        for v in validate_suite() {
            assert!(v.passed, "{}: {}", v.name, v.detail);
        }
    }

    #[test]
    fn dispatch_rejects_unknown_verbs() {
        assert_ne!(dispatch(["ples", "frobnicate"]), 0);
    }
}
