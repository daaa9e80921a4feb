use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ssdual_cli::bench::{render_table, run_bench, run_table};
use ssdual_cli::config::{BenchConfig, Dtype, Format};
use ssdual_cli::report::Report;
use ssdual_cli::suites::{registry, run_verify};
use ssdual_cli::{CliError, CliResult};

/// Verification, benchmarking and complexity tables for structured state
/// space algorithms.
#[derive(Debug, Parser)]
#[command(name = "ssdual", version)]
struct Cli {
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Base seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Floating point precision: f32 or f64.
    #[arg(long, global = true, default_value = "f64")]
    dtype: String,

    /// Grid overrides, e.g. `T=64,128,256,N=16`.
    #[arg(long, global = true)]
    grid: Option<String>,

    /// Record wall-clock times (reports then differ between runs).
    #[arg(long, global = true)]
    timing: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the equivalence suites; exits 1 if any case fails.
    Verify {
        /// Run only this suite (repeatable).
        #[arg(long = "suite")]
        suites: Vec<String>,
        /// Seeded instances per suite.
        #[arg(long, default_value_t = 8)]
        cases: usize,
        /// Corrupt one result to check that failures are caught.
        #[arg(long)]
        inject_fault: bool,
        /// json or csv.
        #[arg(long, default_value = "json")]
        format: String,
        /// List the suites and exit.
        #[arg(long)]
        list: bool,
    },
    /// Measure operation counts over the grid.
    Bench {
        /// Algorithm selector (repeatable); see `--list`.
        #[arg(long = "alg")]
        algorithms: Vec<String>,
        /// Timed repetitions per cell when `--timing` is set.
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        /// json or csv.
        #[arg(long, default_value = "json")]
        format: String,
        /// List the algorithm selectors and exit.
        #[arg(long)]
        list: bool,
    },
    /// Fitted complexity exponents beside the asymptotic ones.
    Table {
        /// text, json or csv.
        #[arg(long, default_value = "text")]
        format: String,
    },
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn render(report: &Report, format: Format) -> CliResult<String> {
    match format {
        Format::Csv => Ok(report.to_csv()),
        Format::Json => report.to_json(),
        Format::Text => Err(CliError::Config("text output is only available for `table`".into())),
    }
}

fn run(cli: Cli) -> CliResult<bool> {
    let dtype: Dtype = cli.dtype.parse()?;
    match cli.command {
        Command::Verify { suites, cases, inject_fault, format, list } => {
            if list {
                for s in registry() {
                    println!("{:<16} {}", s.name, s.description);
                }
                return Ok(true);
            }
            let mut cfg = BenchConfig { seed: cli.seed, dtype, suites, cases, inject_fault, timing: cli.timing, ..BenchConfig::verify_default() };
            if let Some(g) = &cli.grid {
                cfg.grid.apply(g)?;
            }
            let format: Format = format.parse()?;
            let report = run_verify(&cfg)?;
            emit(&cli.out, &render(&report, format)?)?;
            for f in report.failures() {
                eprintln!("FAIL {} ({}): error {:e}", f.case, f.params, f.max_rel_err);
            }
            eprintln!(
                "verify: {} cases in {} suites, {} failed",
                report.cases.len(),
                report.suites.len(),
                report.failures().count()
            );
            Ok(report.passed)
        }
        Command::Bench { algorithms, repetitions, format, list } => {
            if list {
                for s in ssdual_cli::bench::BenchAlg::selectors() {
                    println!("{s}");
                }
                return Ok(true);
            }
            let mut cfg = BenchConfig { seed: cli.seed, dtype, algorithms, repetitions, timing: cli.timing, ..BenchConfig::bench_default() };
            if let Some(g) = &cli.grid {
                cfg.grid.apply(g)?;
            }
            let format: Format = format.parse()?;
            let report = run_bench(&cfg)?;
            emit(&cli.out, &render(&report, format)?)?;
            for f in &report.fits {
                eprintln!("fit {} in {}: {:.3} (expected {:?})", f.name, f.axis, f.fitted, f.expected);
            }
            Ok(true)
        }
        Command::Table { format } => {
            let mut cfg = BenchConfig { seed: cli.seed, dtype, timing: cli.timing, ..BenchConfig::bench_default() };
            if let Some(g) = &cli.grid {
                cfg.grid.apply(g)?;
            }
            let (rows, report) = run_table(&cfg)?;
            let text = match format.parse()? {
                Format::Text => render_table(&rows),
                f => render(&report, f)?,
            };
            emit(&cli.out, &text)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
