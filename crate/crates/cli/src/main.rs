use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clinfact::ontology::UnmappedPolicy;
use clinfact::pipeline::{self, PipelineConfig};
use clinfact::Error;

/// Four-quadrant clinical statement benchmark pipeline.
#[derive(Debug, Parser)]
#[command(name = "clinfact", version)]
struct Cli {
    /// TOML pipeline config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Generation and split seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated training seeds, e.g. 42,43,44.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Abort on structured codes missing from the mapping table.
    #[arg(long, global = true)]
    strict: bool,
    /// Output root; overrides the config.
    #[arg(long, global = true, env = "CLINFACT_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load or synthesize the ontology and write graph tables plus stats.
    BuildGraph,
    /// Write a synthetic admission corpus from the graph artifact.
    SynthCorpus,
    /// Generate the four-quadrant dataset and its split.
    Generate,
    /// Train the baseline, DPO and risk-aware variants and report on test.
    TrainEval,
    /// Sweep the penalty weight from each trained baseline.
    Ablate,
    /// Print a summary of the artifacts under the output root.
    Report,
    /// Every stage in order.
    Run,
    /// Print the effective config as TOML.
    ShowConfig,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else if matches!(e, Error::Config(_) | Error::InvalidArgument(_)) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

fn effective_config(cli: &Cli) -> clinfact::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(s) = &cli.seeds {
        cfg.seeds = s.clone();
    }
    if cli.strict {
        cfg.unmapped = UnmappedPolicy::Strict;
    }
    if let Some(o) = &cli.out {
        cfg.paths.output = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> clinfact::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: &Cli) -> clinfact::Result<()> {
    let cfg = effective_config(cli)?;
    log::info!("output root {}", cfg.paths.output.display());
    match cli.command {
        Command::BuildGraph => print_json(&pipeline::build_graph(&cfg)?),
        Command::SynthCorpus => print_json(&pipeline::synth_corpus(&cfg)?),
        Command::Generate => print_json(&pipeline::generate(&cfg)?),
        Command::TrainEval => print_json(&pipeline::train_eval(&cfg)?.mean),
        Command::Ablate => print_json(&pipeline::ablate(&cfg)?.mean),
        Command::Report => {
            print!("{}", pipeline::report(&cfg)?);
            Ok(())
        }
        Command::Run => {
            pipeline::run_all(&cfg)?;
            print!("{}", pipeline::report(&cfg)?);
            Ok(())
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_toml_string()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
