use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use covclust::commands::{self, SummarizeOptions, Window};
use covclust::error::Error;
use covclust::io::RunConfig;

/// Bayesian clustering of covariance sub-matrices.
#[derive(Debug, Parser)]
#[command(name = "covclust", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset with known partition and parameters.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one chain per seed on a dataset directory.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated seeds; defaults to the `seeds` key of the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pool run archives into MAP, similarity, interval and trace reports.
    Summarize {
        /// Run directories, or directories containing them.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        /// `sampling`, `burnin` or `all`.
        #[arg(long, default_value = "sampling")]
        window: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Thin, stack and standardise per-subject time series.
    Preprocess {
        /// One `T x M` CSV per subject.
        #[arg(long, num_args = 1.., required = true)]
        subjects: Vec<PathBuf>,
        #[arg(long, default_value_t = 2)]
        lag: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain { .. } => 2,
        Error::Data(_) | Error::Parse { .. } | Error::Io { .. } | Error::Empty(_) => 3,
        _ => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = RunConfig::from_file(&config)?;
            let truth = commands::simulate(&cfg, &out)?;
            let j = truth.z.iter().max().map_or(0, |l| l + 1);
            eprintln!("wrote {} outcomes in {j} clusters to {}", truth.z.len(), out.display());
        }
        Command::Fit { config, data, seeds, out } => {
            let cfg = RunConfig::from_file(&config)?;
            let seeds = if seeds.is_empty() { cfg.seeds.clone() } else { seeds };
            let outcomes = commands::fit(&cfg, &data, &seeds, &out)?;
            let mut first_err = None;
            for o in outcomes {
                match o.result {
                    Ok(_) => eprintln!("seed {}: complete ({})", o.seed, o.dir.display()),
                    Err(e) => {
                        eprintln!("seed {}: {e}", o.seed);
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_err {
                return Err(e);
            }
        }
        Command::Summarize {
            runs,
            truth,
            level,
            threshold,
            window,
            out,
        } => {
            let opts = SummarizeOptions {
                level,
                threshold,
                window: window.parse::<Window>()?,
                truth,
            };
            let s = commands::summarize(&runs, &opts, &out)?;
            eprintln!(
                "{} draws from {} runs; MAP has {} clusters with mass {:.3}",
                s.draws,
                s.runs.len(),
                s.map_clusters,
                s.map_mass
            );
        }
        Command::Preprocess { subjects, lag, out } => commands::preprocess(&subjects, lag, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
