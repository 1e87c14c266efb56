use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vlsynth::pipeline::{self, PipelineConfig, PipelineError, RunOptions, Stage};

/// Synthesizes visual-logic puzzle datasets stage by stage.
#[derive(Debug, Parser)]
#[command(name = "vlsynth", version)]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true, default_value = "vlsynth.toml")]
    config: PathBuf,
    /// Run a single stage by name instead of giving a subcommand.
    #[arg(long, global = true, value_parser = parse_stage)]
    stage: Option<Stage>,
    /// Skip stages whose outputs are up to date and continue evolution from its checkpoints.
    #[arg(long, global = true)]
    resume: bool,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Use the offline stub providers regardless of the config.
    #[arg(long, global = true)]
    stub_providers: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate hand-written seed rules and assign ids.
    SeedImport,
    /// Grow the rule pool with mutation, crossover and migration.
    Evolve,
    /// Remove near-duplicate rules and apply the rubric.
    Filter,
    /// Render image groups in every configured style.
    Render,
    /// Reject groups with duplicate, blank or low-detail panels.
    Qc,
    /// Build puzzles and compose their sheets.
    Assemble,
    /// Score readability and coherence.
    Annotate,
    /// Measure solver pass rates.
    Passrate,
    /// Select the training sample.
    Sample {
        /// Sample size; overrides `sampler.n`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Export the dataset and write the manifest.
    Stats,
    /// Run every stage in order.
    RunAll,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse()
}

enum Plan {
    One(Stage),
    All,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if cli.stub_providers {
        cfg.providers.stub = true;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    pipeline::PipelineConfig::validate(&cfg)?;
    vlsynth::par::set_workers(cfg.workers);

    let plan = match (&cli.command, cli.stage) {
        (Some(_), Some(_)) => return Err(PipelineError::Config("give either a subcommand or --stage, not both".into())),
        (None, None) => return Err(PipelineError::Config("no command given; see --help".into())),
        (None, Some(stage)) => Plan::One(stage),
        (Some(cmd), None) => match cmd {
            Command::SeedImport => Plan::One(Stage::SeedImport),
            Command::Evolve => Plan::One(Stage::Evolve),
            Command::Filter => Plan::One(Stage::Filter),
            Command::Render => Plan::One(Stage::Render),
            Command::Qc => Plan::One(Stage::Qc),
            Command::Assemble => Plan::One(Stage::Assemble),
            Command::Annotate => Plan::One(Stage::Annotate),
            Command::Passrate => Plan::One(Stage::Passrate),
            Command::Sample { n } => {
                if let Some(n) = n {
                    cfg.sampler.n = *n;
                }
                Plan::One(Stage::Sample)
            }
            Command::Stats => Plan::One(Stage::Stats),
            Command::RunAll => Plan::All,
        },
    };
    let opts = RunOptions { resume: cli.resume };
    let outcomes = match plan {
        Plan::One(stage) => vec![pipeline::run_stage(&cfg, stage, opts)?],
        Plan::All => pipeline::run_all(&cfg, opts)?,
    };
    for o in outcomes {
        let note = if o.skipped { " (skipped)" } else { "" };
        println!("{}: {}{note}", o.stage, o.summary);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
