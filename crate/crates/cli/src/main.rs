use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use latentgeo_cli::config::{load_config, ExperimentConfig, OutputFormat};
use latentgeo_cli::report::ExperimentReport;
use latentgeo_cli::runners;

#[derive(Parser, Debug)]
#[command(
    name = "latentgeo",
    version,
    about = "Geodesic distance experiments on decoder-defined manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output path; overrides the config `out` field.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format: csv or json.
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<OutputFormat>,

    /// Worker threads for the solve pool.
    #[arg(long, global = true, default_value_t = 4)]
    threads: usize,

    /// Reject configs carrying unknown keys instead of warning.
    #[arg(long, global = true, default_value_t = false)]
    strict: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare solver lengths against closed-form oracle lengths.
    Oracle,
    /// Check geodesic-distance agreement across reparametrized models.
    Invariance,
    /// Coefficient-of-variation stability protocol with a one-sided t-test.
    Cv,
    /// Solve a single pair and dump the optimized curve.
    Geodesic,
    /// Karcher mean of the configured latent points.
    Karcher,
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    match s {
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        other => Err(format!("unknown format \"{other}\"; expected csv or json")),
    }
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path, cli.strict)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.display().to_string());
    }
    if let Some(format) = cli.format {
        cfg.format = format;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExperimentReport> {
    let cfg = resolve_config(cli)?;
    let report = match cli.command {
        Command::Oracle => runners::run_oracle_experiment(&cfg, cli.threads)?,
        Command::Invariance => runners::run_invariance_experiment(&cfg, cli.threads)?,
        Command::Cv => runners::run_cv_experiment(&cfg, cli.threads)?,
        Command::Geodesic => runners::run_geodesic(&cfg, cli.threads)?,
        Command::Karcher => runners::run_karcher(&cfg, cli.threads)?,
    };

    match &cfg.out {
        Some(path) => report.write(std::path::Path::new(path), cfg.format)?,
        None => match cfg.format {
            OutputFormat::Json => print!("{}", report.to_json()?),
            OutputFormat::Csv => print!("{}", report.csv_payload()?),
        },
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            for message in &report.summary.messages {
                eprintln!("note: {message}");
            }
            if report.summary.pass {
                eprintln!("result: PASS");
                ExitCode::SUCCESS
            } else {
                eprintln!(
                    "result: FAIL (unconverged fraction {:.3})",
                    report.summary.unconverged_fraction
                );
                ExitCode::FAILURE
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
