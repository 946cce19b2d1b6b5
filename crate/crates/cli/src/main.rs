use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gmptensor_cli::{
    cmd_bench, cmd_evaluate, cmd_export, cmd_generate, cmd_train, exit_code, parse_pair, Format,
    TrainOverrides,
};
use gmptensor::config::Window;
use gmptensor::Result;

/// Tensor-compressed behavioral models of power amplifiers: data
/// generation, identification, evaluation, and benchmark sweeps.
#[derive(Parser)]
#[command(name = "gmptensor", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the drive signal and amplifier response.
    Generate {
        /// Configuration file (built-in defaults when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Root seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configured model on generated data.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding x.ten / y.ten from `generate`.
        #[arg(long)]
        data: PathBuf,
        /// Name of the model entry to train.
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Regularization override.
        #[arg(long)]
        gamma: Option<f64>,
        /// Iteration/sweep count override.
        #[arg(long)]
        iters: Option<usize>,
        /// Rank override, comma-separated (e.g. 3 or 2,2 or 2,2,2).
        #[arg(long, value_delimiter = ',')]
        ranks: Option<Vec<usize>>,
        /// Train on a randomized mode-2/3 projection of the design.
        #[arg(long)]
        rp_als: bool,
        /// Projection target dims as "M2,P" (with --rp-als).
        #[arg(long)]
        proj: Option<String>,
    },
    /// Evaluate a saved model on a data window.
    Evaluate {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Evaluation window as "t0,n" (the configured test window when
        /// omitted).
        #[arg(long)]
        window: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Report format: csv or json.
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Train and evaluate every configured model; write the comparison
    /// table and any configured sweep.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Table format: csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Write plot-ready CSV data.
    Export {
        /// What to export: fista-pgd or als-nmse.
        #[arg(long)]
        what: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Model entry for solver comparisons (first full-tensor entry when
        /// omitted).
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, seed, out } => cmd_generate(config.as_deref(), seed, &out),
        Command::Train {
            config,
            data,
            model,
            out,
            seed,
            gamma,
            iters,
            ranks,
            rp_als,
            proj,
        } => {
            let proj = proj.as_deref().map(parse_pair).transpose()?;
            let overrides = TrainOverrides {
                seed,
                gamma,
                iterations: iters,
                ranks,
                rp_als,
                proj,
            };
            cmd_train(config.as_deref(), &data, &model, &out, &overrides)
        }
        Command::Evaluate {
            model,
            data,
            config,
            window,
            out,
            format,
        } => {
            let window = window
                .as_deref()
                .map(|w| parse_pair(w).map(|(t0, n)| Window { t0, n }))
                .transpose()?;
            let format: Format = format.parse()?;
            cmd_evaluate(&model, &data, config.as_deref(), window, &out, format)
        }
        Command::Bench {
            config,
            seed,
            out,
            format,
        } => {
            let format: Format = format.parse()?;
            cmd_bench(config.as_deref(), seed, &out, format)
        }
        Command::Export {
            what,
            config,
            seed,
            model,
            out,
        } => cmd_export(&what, config.as_deref(), seed, model.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
