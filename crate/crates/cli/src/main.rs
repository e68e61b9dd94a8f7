use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dds_cli::{run_stage, CliError, PipelineConfig, RunOptions, Stage};

#[derive(Parser)]
#[command(name = "dds", version, about = "Dynamic decoding temperature experiments on a synthetic dialogue corpus")]
struct Args {
    /// Pipeline configuration (JSON); every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Run even if upstream artifacts changed since they were produced.
    #[arg(long, global = true)]
    allow_stale: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write the synthetic train/valid/test corpus and vocabulary.
    Synth,
    /// Train the language model with standard NLL.
    TrainLm,
    /// Sample candidates per training context and attach diversity scores.
    Label,
    /// Drop labeled examples whose score contradicts their scenario.
    Filter,
    /// Fit the sentence-level and token-level regression heads.
    TrainHead,
    /// Train with per-example temperatures inside the softmax.
    DtTrain {
        /// Take training temperatures from the sentence head instead of labels.
        #[arg(long)]
        dt_use_predicted: bool,
    },
    /// Decode the test contexts under every sampler and temperature mode.
    Decode,
    /// Compute metrics for every decode output.
    Eval,
    /// Render the metric tables as text.
    Report,
}

impl Command {
    fn stage(self) -> Stage {
        match self {
            Command::Synth => Stage::Synth,
            Command::TrainLm => Stage::TrainLm,
            Command::Label => Stage::Label,
            Command::Filter => Stage::Filter,
            Command::TrainHead => Stage::TrainHead,
            Command::DtTrain { .. } => Stage::DtTrain,
            Command::Decode => Stage::Decode,
            Command::Eval => Stage::Eval,
            Command::Report => Stage::Report,
        }
    }
}

fn run(args: &Args) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    if let Command::DtTrain { dt_use_predicted: true } = args.command {
        config.dt.use_predicted = true;
    }
    let stage = args.command.stage();
    let manifest = run_stage(stage, &config, RunOptions { allow_stale: args.allow_stale })?;
    eprintln!(
        "{}: wrote {} file(s) to {} in {:.1}s",
        stage.command(),
        manifest.outputs.len(),
        config.out.display(),
        manifest.timings.seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
