//! `scarmap`: end-to-end burned-area mapping pipeline.
//!
//! Subcommands mirror the pipeline stages and each is idempotent: rerunning
//! with the same inputs rewrites the same artifacts. The work directory is
//! taken from `--work`, falling back to the `SCARMAP_WORK_DIR` environment
//! variable, then the current directory.

mod config;
mod pipeline;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scarmap::dataset::Variant;

use pipeline::{Paths, SynthArgs};

#[derive(Parser)]
#[command(name = "scarmap", version, about = "Burned-area mapping pipeline")]
struct Cli {
    /// Work directory holding all pipeline artifacts.
    #[arg(long, global = true)]
    work: Option<PathBuf>,

    /// Size of the rayon thread pool (default: one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic raw corpus of pre/post tiles with scar labels.
    Synth {
        /// Output directory for tiles and records.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        tiles: usize,
        /// Tile height and width in pixels.
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// Target burned fraction of each tile.
        #[arg(long, default_value_t = 0.33)]
        burned_fraction: f64,
        /// Burn severity in [0, 1]; 0 leaves post identical to pre.
        #[arg(long, default_value_t = 1.0)]
        severity: f64,
        /// Additive noise amplitude.
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        /// Per-pixel probability for each defect kind.
        #[arg(long, default_value_t = 0.0)]
        defect_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Crop, filter and split a raw corpus into a variant dataset.
    BuildDataset {
        /// Raw corpus directory (tiles + records.csv).
        #[arg(long)]
        raw: PathBuf,
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Clean, standardize, pad and augment into tensor archives.
    Preprocess {
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        /// Flat key=value run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train on the prepared archives and save the best checkpoint.
    Train {
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed when given.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score the saved checkpoint on the test archive.
    Evaluate {
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
    },
    /// Run a hyperparameter grid over the train/val archives.
    Hpo {
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        /// Grid file; omitted means the built-in seven-row grid.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Produce diagnostic tables and plots from the evaluation.
    Report {
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).map_err(|e| e.to_string())
}

fn work_dir(cli: &Cli) -> PathBuf {
    cli.work
        .clone()
        .or_else(|| std::env::var_os("SCARMAP_WORK_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: &Cli) -> scarmap::Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| scarmap::Error::Contract(format!("thread pool: {e}")))?;
    }
    let paths = Paths { work: work_dir(cli) };
    match &cli.command {
        Command::Synth {
            out,
            tiles,
            size,
            burned_fraction,
            severity,
            noise,
            defect_rate,
            seed,
        } => pipeline::cmd_synth(&SynthArgs {
            out: out.clone(),
            tiles: *tiles,
            size: *size,
            burned_fraction: *burned_fraction,
            severity: *severity,
            noise: *noise,
            defect_rate: *defect_rate,
            seed: *seed,
        }),
        Command::BuildDataset { raw, variant, seed } => {
            pipeline::cmd_build_dataset(&paths, raw, *variant, *seed)
        }
        Command::Preprocess {
            variant,
            config,
            seed,
        } => {
            let file_config = config::load(config.as_deref())?;
            pipeline::cmd_preprocess(&paths, *variant, &file_config, *seed)
        }
        Command::Train {
            variant,
            config,
            seed,
        } => {
            let mut train_config = config::load(config.as_deref())?.train;
            if let Some(s) = seed {
                train_config.seed = *s;
            }
            pipeline::cmd_train(&paths, *variant, &train_config)
        }
        Command::Evaluate { variant } => pipeline::cmd_evaluate(&paths, *variant),
        Command::Hpo {
            variant,
            grid,
            seed,
        } => pipeline::cmd_hpo(&paths, *variant, grid.as_deref(), *seed),
        Command::Report { variant } => pipeline::cmd_report(&paths, *variant),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
