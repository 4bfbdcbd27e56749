//! `iam`: dataset preparation, training, evaluation and the interactive interview.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use iam_core::data::{Separator, UserSet};
use iam_core::eval::protocol::{Method, Selector};

/// Exit status when a referenced file does not exist.
const EXIT_MISSING_FILE: u8 = 3;
/// Exit status for a model file written by another format version.
const EXIT_VERSION: u8 = 4;
/// Exit status for malformed or unusable input data.
const EXIT_DATA: u8 = 5;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "iam", version, about = "Cold-start interview recommender toolkit")]
pub struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key = value` settings file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Rating file: `user<sep>item<sep>rating[<sep>timestamp]`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Separator: tab, comma, dat (`::`), ws, or a literal string.
    #[arg(long)]
    pub format: Option<Separator>,
    /// Ratings strictly above this become likes.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Drop users with fewer ratings.
    #[arg(long)]
    pub min_user_ratings: Option<usize>,
    /// The first line is a header.
    #[arg(long)]
    pub header: bool,
}

#[derive(Args, Debug, Clone)]
pub struct HyperArgs {
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Mf,
    IamWarm,
    IamCold,
    IamCsw,
    Itemknn,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolChoice {
    Cold,
    Warm,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectChoice {
    Pop,
    Helf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeChoice {
    Default,
    Yahoo,
    Flixter,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load, filter and binarize a rating file; write it back normalized.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split users into train/valid/test and write the manifest.
    Split {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and save it.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, value_enum)]
        model: ModelChoice,
        /// Users whose Answer Sets the MF and ItemKNN models may train on.
        #[arg(long, default_value = "valid")]
        users: UserSet,
        /// ItemKNN neighbourhood size; all neighbours when absent.
        #[arg(long)]
        neighbours: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Interview text for cold and mixed models; defaults next to `--out`.
        #[arg(long)]
        interview_out: Option<PathBuf>,
    },
    /// Run the cold or warm protocol and write a results table.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value = "alpha")]
        select: Selector,
        #[arg(long)]
        questions: Option<usize>,
        #[arg(long, value_enum, default_value = "cold")]
        protocol: ProtocolChoice,
        #[arg(long, default_value = "test")]
        users: UserSet,
        #[arg(long)]
        neighbours: Option<usize>,
        /// Seeds `seed, seed+1, …`.
        #[arg(long, default_value_t = 3)]
        runs: usize,
        /// Evaluate a saved model instead of training one.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick interview items with a popularity heuristic.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, value_enum)]
        select: SelectChoice,
        #[arg(long)]
        questions: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid search on the validation users, then test the best config.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value = "alpha")]
        select: Selector,
        #[arg(long)]
        questions: Option<usize>,
        #[arg(long, value_enum, default_value = "cold")]
        protocol: ProtocolChoice,
        #[arg(long)]
        neighbours: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        grid_latent_dim: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        grid_lr: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        grid_lambda1: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        grid_lambda2: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy of a mixed model as post-interview ratings are folded in.
    CswSweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
        fractions: Vec<f64>,
        #[arg(long, default_value = "test")]
        users: UserSet,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project the weighted translations of a cold or mixed model onto two axes.
    ExportPca {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interactive interview on the terminal.
    Interview {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// `itemId<sep>title` lines.
        #[arg(long)]
        names: Option<PathBuf>,
    },
    /// Write a synthetic rating file with a planted low-rank structure.
    Synth {
        #[arg(long, value_enum, default_value = "default")]
        shape: ShapeChoice,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use iam_core::Error;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING_FILE,
                Error::Version { .. } => EXIT_VERSION,
                Error::Parse { .. }
                | Error::EmptyDataset
                | Error::TooFewUsers(_)
                | Error::Format(_)
                | Error::Csv(_)
                | Error::IndexOutOfRange { .. }
                | Error::Insufficient(_)
                | Error::NoData(_) => EXIT_DATA,
                _ => 1,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return EXIT_MISSING_FILE;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
