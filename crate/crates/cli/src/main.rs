//! `gig`: build corpora, train and evaluate Graph-in-Graph description
//! generators.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gig_core::data::SynthConfig;
use gig_core::model::Setting;

use crate::commands::{BuildArgs, EvalArgs, GenerateArgs, TrainArgs};
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "gig", version, about = "Generate GO term descriptions with Graph-in-Graph networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse or synthesize a corpus, split it and build the vocabulary.
    BuildData {
        /// Corpus file in the line-oriented text format.
        #[arg(long, conflicts_with = "synth")]
        corpus: Option<PathBuf>,
        /// TOML file with synthetic corpus parameters.
        #[arg(long)]
        synth: Option<PathBuf>,
        /// Seed of the synthetic generator.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long, default_value_t = 3)]
        min_count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the setting in the config.
        #[arg(long)]
        setting: Option<String>,
        /// Overrides the first seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from `trainer.bin` in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Generate descriptions with a trained model.
    Generate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Specific term ids; may be repeated.
        #[arg(long = "term")]
        terms: Vec<String>,
        /// Beam width; greedy when absent or 1.
        #[arg(long)]
        beam: Option<usize>,
        /// Also export the top attended nodes per generated token.
        #[arg(long)]
        attention: bool,
        #[arg(long, default_value_t = 2)]
        top_k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a model or a hypothesis file with BLEU, ROUGE-L and METEOR.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, conflicts_with = "hypotheses")]
        model: Option<PathBuf>,
        /// Lines of `term<TAB>text`.
        #[arg(long)]
        hypotheses: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every configured setting under every seed and compare them.
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train on each corpus and test on all of them.
    CrossDomain {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run gradient and metric checks.
    Selftest,
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::BuildData {
            corpus,
            synth,
            seed,
            split_seed,
            min_count,
            out,
        } => {
            let synth = match (&corpus, synth) {
                (None, None) => Some(SynthConfig::default()),
                (_, Some(p)) => Some(commands::load_synth(&p)?),
                (Some(_), None) => None,
            };
            commands::build_data(&BuildArgs {
                corpus,
                synth,
                synth_seed: seed,
                split_seed,
                min_count,
                out,
            })
        }
        Command::Train {
            config,
            setting,
            seed,
            resume,
        } => {
            let setting = setting
                .map(|s| Setting::from_label(&s).ok_or_else(|| CliError::Usage(format!("unknown setting {s:?}"))))
                .transpose()?;
            commands::train(&TrainArgs {
                config: ExperimentConfig::load(&config)?,
                setting,
                seed,
                resume,
            })
        }
        Command::Generate {
            data,
            model,
            split,
            terms,
            beam,
            attention,
            top_k,
            out,
        } => commands::generate(&GenerateArgs {
            data,
            model,
            split,
            terms,
            beam,
            attention,
            top_k,
            out,
        }),
        Command::Eval {
            data,
            model,
            hypotheses,
            split,
            beam,
            out,
        } => commands::eval(&EvalArgs {
            data,
            model,
            hypotheses,
            split,
            beam,
            out,
        }),
        Command::Ablate { config } => commands::ablate(&ExperimentConfig::load(&config)?),
        Command::CrossDomain { config } => commands::cross_domain(&ExperimentConfig::load(&config)?),
        Command::Selftest => commands::selftest(),
    }
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
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
