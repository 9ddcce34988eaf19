//! `kgm`: train and evaluate manifold knowledge graph embeddings.
//!
//! Exit status is 0 on success, 1 on runtime failures (I/O, unreadable
//! checkpoints, diverged training) and 2 on configuration or input
//! validation failures.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "kgm",
    version,
    about = "Manifold-based knowledge graph embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a key=value config file.
    Train {
        config: PathBuf,
        /// Leave wall-clock timings out of the training log.
        #[arg(long)]
        no_timings: bool,
    },
    /// Link prediction: HITS@N and mean rank in the raw and filtered settings.
    EvalLp {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Training triples, used for the filter and for relation categories.
        /// Defaults to the training file recorded in the checkpoint.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Validation triples, added to the filter.
        #[arg(long)]
        valid: Option<PathBuf>,
        /// Comma-separated cut-offs, e.g. `1,3,10`. Defaults to `eval.hits` from
        /// the checkpoint config.
        #[arg(long)]
        hits: Option<String>,
        #[arg(long)]
        no_filter: bool,
        #[arg(long)]
        no_raw: bool,
        #[arg(long)]
        no_timings: bool,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Triple classification with per-relation thresholds tuned on `--valid`.
    EvalTc {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write `head,relation,tail,label,score` CSV for labeled triples.
    ExportScores {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        triples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dataset statistics and the ill-posedness ratio T/(E+R).
    Stats {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// tph/hpt cut-off separating "1" from "N" sides.
        #[arg(long, default_value_t = kgm_core::graph::DEFAULT_CATEGORY_CUTOFF)]
        cutoff: f64,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_target(false)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, no_timings } => commands::train(&config, no_timings),
        Command::EvalLp {
            checkpoint,
            test,
            train,
            valid,
            hits,
            no_filter,
            no_raw,
            no_timings,
            out,
        } => commands::eval_lp(commands::EvalLpArgs {
            checkpoint,
            test,
            train,
            valid,
            hits,
            filter: !no_filter,
            raw: !no_raw,
            timings: !no_timings,
            out,
        }),
        Command::EvalTc {
            checkpoint,
            valid,
            test,
            out,
        } => commands::eval_tc(&checkpoint, &valid, &test, out.as_deref()),
        Command::ExportScores {
            checkpoint,
            triples,
            out,
        } => commands::export_scores(&checkpoint, &triples, &out),
        Command::Stats {
            train,
            valid,
            test,
            cutoff,
            json,
        } => commands::stats(&train, valid.as_deref(), test.as_deref(), cutoff, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            log::error!("{:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
