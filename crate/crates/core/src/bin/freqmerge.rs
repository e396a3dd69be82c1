use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use freqmerge::harness::{emit_results, run_experiment, ExperimentConfig, ExperimentKind, OutputFormat, Overrides};
use freqmerge::{Error, ScoringMethod};

#[derive(Parser)]
#[command(name = "freqmerge", version, about = "Token reduction and diffusion classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-token frequency scores of the input grid
    Score(Common),
    /// Attention with merging, swept over merge ratios
    Merge(Common),
    /// Attention with KV downsampling, swept over factors and alphas
    Kvdown(Common),
    /// Paired Monte Carlo classification accuracy and mAP
    Classify(Common),
    /// Band statistics and the predicted effect of a spatial operator
    Spectral(Common),
    /// Several experiments in parallel; --seed is required
    #[command(mut_arg("seed", |a| a.required(true)))]
    Bench(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Merge ratio (fixes the ratio sweep to this value)
    #[arg(long)]
    ratio: Option<f64>,
    /// Downsample factor
    #[arg(long)]
    factor: Option<usize>,
    /// Fixed blend factor for KV downsampling
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Scoring method, e.g. laplacian_l1
    #[arg(long, value_parser = parse_method)]
    method: Option<ScoringMethod>,
    /// Worker threads
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn parse_method(s: &str) -> Result<ScoringMethod, String> {
    ScoringMethod::ALL
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| {
            let names: Vec<&str> = ScoringMethod::ALL.iter().map(|m| m.name()).collect();
            format!("unknown method {s:?}; expected one of {}", names.join(", "))
        })
}

fn split(command: Command) -> (ExperimentKind, Common) {
    match command {
        Command::Score(c) => (ExperimentKind::Score, c),
        Command::Merge(c) => (ExperimentKind::Merge, c),
        Command::Kvdown(c) => (ExperimentKind::Kvdown, c),
        Command::Classify(c) => (ExperimentKind::Classify, c),
        Command::Spectral(c) => (ExperimentKind::Spectral, c),
        Command::Bench(c) => (ExperimentKind::Bench, c),
    }
}

fn run(cli: Cli) -> freqmerge::Result<()> {
    let (kind, c) = split(cli.command);
    let overrides = Overrides {
        kind: Some(kind),
        seed: c.seed,
        out: c.out,
        format: c.format.map(|f| match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }),
        ratio: c.ratio,
        factor: c.factor,
        alpha: c.alpha,
        method: c.method,
        threads: c.threads,
    };
    let config = ExperimentConfig::resolve(c.config.as_deref(), &overrides)?;
    log::info!("running {} with config hash {}", kind.name(), config.hash());
    let records = run_experiment(&config)?;
    emit_results(&records, config.format, config.out.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
