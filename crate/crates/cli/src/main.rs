//! `hargan`: ingest sensor data, train classifiers and per-class GANs,
//! generate and evaluate synthetic windows, benchmark epoch time.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use config::Family;

#[derive(Parser)]
#[command(name = "hargan", version, about = "GAN-based augmentation for wearable activity data")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides the config key of the
/// same name.
#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// JSON run config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dataset profile: pamap2, rwhar or toy.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// Classes trained in parallel by train-gan.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Window a raw recording and write a dataset directory.
    Ingest {
        #[arg(long, value_enum)]
        format: commands::RawFormat,
        /// Raw input (PAMAP2 directory or canonical CSV file); unused for `toy`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Window stride in samples; half the window length by default.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Train the validation classifier with one subject held out.
    TrainClassifier {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train one generator per class until the validation gate passes.
    TrainGan {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Classifier checkpoint used for the gate.
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long, value_enum)]
        family: Option<Family>,
        /// Leave the seconds column of the train logs empty so reruns are
        /// byte-identical.
        #[arg(long)]
        deterministic_log: bool,
    },
    /// Sample windows from a generator checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: usize,
    },
    /// Gate F1, confusion matrix and channel correlation of synthetic windows.
    Evaluate {
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long, conflicts_with = "windows", required_unless_present = "windows")]
        generator: Option<PathBuf>,
        /// A dataset directory written by `generate`.
        #[arg(long)]
        windows: Option<PathBuf>,
        /// Real dataset directory written by `ingest`.
        #[arg(long)]
        real: PathBuf,
        /// Real and synthetic windows averaged for the correlation.
        #[arg(short = 'x', long, default_value_t = 10)]
        x: usize,
        /// Windows drawn from the generator.
        #[arg(long, default_value_t = 128)]
        n: usize,
    },
    /// Mean epoch time of two GAN configs on the same class.
    Benchmark {
        #[arg(long)]
        config_a: PathBuf,
        #[arg(long)]
        config_b: PathBuf,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 2)]
        warmup: usize,
        #[arg(long, default_value_t = 0)]
        class: usize,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let c = &cli.common;
    match cli.command {
        Command::Ingest { format, input, stride } => commands::ingest(c, format, input, stride),
        Command::TrainClassifier { dataset } => commands::train_classifier(c, dataset),
        Command::TrainGan {
            dataset,
            classifier,
            family,
            deterministic_log,
        } => commands::train_gan(c, dataset, classifier, family, deterministic_log),
        Command::Generate { checkpoint, n } => commands::generate(c, &checkpoint, n),
        Command::Evaluate {
            classifier,
            generator,
            windows,
            real,
            x,
            n,
        } => commands::evaluate(c, &classifier, generator.as_deref(), windows.as_deref(), &real, x, n),
        Command::Benchmark {
            config_a,
            config_b,
            epochs,
            warmup,
            class,
        } => commands::benchmark(c, &config_a, &config_b, epochs, warmup, class),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hargan: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
