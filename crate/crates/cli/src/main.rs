mod experiment;
mod output;
mod plotdata;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nuec::batch;
use nuec::datatypes::DataTypeKind;
use nuec::sim::verify::{self, Fault, VerifyOptions};
use nuec::sim::{run_simulation_with, RunOptions};

use experiment::Experiment;
use output::Format;

#[derive(Parser)]
#[command(name = "nuec", version, about = "Non-uniform replication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every config of an experiment file and append one row per run.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Also write `<out>.samples.csv` with one row every this many sync rounds.
        #[arg(long)]
        sample_every: Option<u64>,
    },
    /// Exhaustive and randomized property checks for one data type.
    Verify {
        #[arg(short = 't', long = "type")]
        data_type: DataTypeKind,
        /// Bound on the number of operations per enumerated log.
        #[arg(long, default_value_t = 4)]
        budget: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Check a deliberately broken hook (topk-rmv only).
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
    /// Turn a samples CSV into one series file per data type, engine and metric.
    Plotdata {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    MaskedForever,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, format, sample_every } => run(&config, &out, format, sample_every),
        Command::Verify { data_type, budget, seed, inject_fault } => verify(data_type, budget, seed, inject_fault),
        Command::Plotdata { input, out } => plotdata::run(&input, &out).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(config: &Path, out: &Path, format: Format, sample_every: Option<u64>) -> Result<bool> {
    let text = std::fs::read_to_string(config).with_context(|| format!("cannot read {}", config.display()))?;
    let exp = Experiment::parse(&text).with_context(|| format!("in {}", config.display()))?;
    let mut configs = exp.expand().with_context(|| format!("in {}", config.display()))?;
    if let Ok(seed) = std::env::var("NUEC_SEED") {
        let seed: u64 = seed.trim().parse().with_context(|| format!("NUEC_SEED must be an integer, got `{seed}`"))?;
        for c in &mut configs {
            c.seed = seed;
        }
    }
    if configs.is_empty() {
        bail!("{} expands to no configs", config.display());
    }
    let opts = RunOptions { sample_every, ..RunOptions::default() };
    let results = batch::map(&configs, |c| run_simulation_with(c, opts));
    let mut reports = Vec::with_capacity(results.len());
    let mut samples = Vec::new();
    for r in results {
        let (report, s) = r?;
        reports.push(report);
        samples.extend(s);
    }
    output::append_reports(out, format, &reports)?;
    if sample_every.is_some() {
        output::append_samples(&output::samples_path(out), &samples)?;
    }
    let mut ok = true;
    for r in &reports {
        if !(r.quiescent && r.oracle_match) {
            ok = false;
            eprintln!(
                "run failed: {} {} seed {}: quiescent={} oracleMatch={}",
                r.data_type, r.engine, r.seed, r.quiescent, r.oracle_match
            );
        }
    }
    Ok(ok)
}

fn verify(data_type: DataTypeKind, budget: usize, seed: u64, fault: Option<FaultArg>) -> Result<bool> {
    let opts = VerifyOptions {
        budget,
        seed,
        fault: fault.map(|f| match f {
            FaultArg::MaskedForever => Fault::MaskedForever,
        }),
    };
    let report = verify::verify(data_type, &opts);
    for c in &report.checks {
        println!("{c}");
    }
    println!(
        "{}: {} checks, {} failed",
        report.data_type,
        report.checks.len(),
        report.failures()
    );
    Ok(report.passed())
}
