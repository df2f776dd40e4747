use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use dsmin::harness::{
    config_with_overrides, persist, report, run_experiment, ExperimentConfig, InstanceSpec, Summary,
};
use dsmin::verify::{faulty_subgradient, run_verify, VerifyLevel};

#[derive(Parser)]
#[command(name = "dsmin", version, about = "Difference-of-submodular minimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Fast,
    Full,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set solver.rho=0.1` or `--set methods=dca,cdcar`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output root; traces go to `<out>/<name>/`. `DSMIN_OUT` takes precedence.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write traces, summary and plot data.
    Run(RunArgs),
    /// Run the oracle-backed invariant suites.
    Verify {
        #[arg(long, value_enum, default_value = "fast")]
        level: Level,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Time an experiment without writing output. Defaults to a d=50 speech instance.
    Bench(RunArgs),
    /// Rebuild summary and plot data from stored traces.
    Report {
        /// Directory holding `*.jsonl` traces.
        dir: PathBuf,
    },
}

const DEFAULT_BENCH: &str = r#"{"name": "bench", "instance": {"kind": "speech", "d": 50, "n_words": 150, "r": 10, "lambda": 1.0}}"#;

fn parse_overrides(raw: &[String]) -> anyhow::Result<Vec<(String, String)>> {
    raw.iter()
        .map(|s| match s.split_once('=') {
            Some((k, v)) if !k.is_empty() => Ok((k.trim().to_string(), v.to_string())),
            _ => bail!("override '{s}' is not KEY=VALUE"),
        })
        .collect()
}

fn load_config(args: &RunArgs, fallback: Option<&str>) -> anyhow::Result<ExperimentConfig> {
    let text = match (&args.config, fallback) {
        (Some(p), _) => std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?,
        (None, Some(t)) => t.to_string(),
        (None, None) => bail!("--config is required"),
    };
    let mut cfg = config_with_overrides(&text, &parse_overrides(&args.overrides)?)?;
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    cfg.solver.validate()?;
    Ok(cfg)
}

fn print_summary(s: &Summary) {
    println!("{:<8} {:>8} {:>14} {:>12} {:>14} {:>6} {:>6}", "method", "rho", "mean F", "std F", "best F", "fail", "uncert");
    for m in &s.methods {
        println!(
            "{:<8} {:>8} {:>14.6} {:>12.3e} {:>14.6} {:>6} {:>6}",
            m.method, m.rho, m.final_mean, m.final_std, m.best_final, m.n_failed, m.n_noncertified
        );
    }
}

fn exit_for(s: &Summary) -> u8 {
    let warned = s.methods.iter().any(|m| m.n_failed > 0 || m.n_noncertified > 0);
    if warned {
        eprintln!("warning: some cells failed or had non-certified inner solves");
        2
    } else {
        0
    }
}

fn output_root(flag: &Path) -> PathBuf {
    match std::env::var_os("DSMIN_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.to_path_buf(),
    }
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<u8> {
    let cfg = load_config(args, None)?;
    let res = run_experiment(&cfg)?;
    let dir = output_root(&args.out).join(&cfg.name);
    persist(&dir, &res.traces, &res.summary)?;
    print_summary(&res.summary);
    println!("wrote {} traces to {}", res.traces.len(), dir.display());
    Ok(exit_for(&res.summary))
}

fn cmd_bench(args: &RunArgs) -> anyhow::Result<u8> {
    let mut cfg = load_config(args, Some(DEFAULT_BENCH))?;
    cfg.solver.timing = true;
    if let InstanceSpec::Speech { d, .. } = &cfg.instance {
        println!("speech instance, d = {d}");
    }
    let start = Instant::now();
    let res = run_experiment(&cfg)?;
    let total = start.elapsed();
    println!("{:<8} {:>8} {:>6} {:>12}", "method", "rho", "cells", "mean ms");
    for m in &res.summary.methods {
        let ms: Vec<f64> = res
            .traces
            .iter()
            .filter(|t| t.outcome.method == m.method && t.outcome.rho == m.rho)
            .map(|t| t.records.last().map_or(0.0, |r| r.wall_ms))
            .collect();
        println!("{:<8} {:>8} {:>6} {:>12.2}", m.method, m.rho, ms.len(), ms.iter().sum::<f64>() / ms.len().max(1) as f64);
    }
    println!("{} cells in {:.2} s", res.traces.len(), total.as_secs_f64());
    Ok(exit_for(&res.summary))
}

fn cmd_verify(level: Level, inject_fault: bool) -> anyhow::Result<u8> {
    let level = match level {
        Level::Fast => VerifyLevel::Fast,
        Level::Full => VerifyLevel::Full,
    };
    let start = Instant::now();
    let rep = run_verify(level, inject_fault.then_some(faulty_subgradient as _))?;
    for s in &rep.suites {
        println!("{s}");
    }
    println!("{:.2} s", start.elapsed().as_secs_f64());
    Ok(if rep.passed() { 0 } else { 1 })
}

fn cmd_report(dir: &Path) -> anyhow::Result<u8> {
    let (summary, warnings) = report(dir)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    print_summary(&summary);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify { level, inject_fault } => cmd_verify(*level, *inject_fault),
        Command::Report { dir } => cmd_report(dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
