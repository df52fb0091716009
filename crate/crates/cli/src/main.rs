//! `epx`: form phalanxes, fit and apply ensembles of phalanxes, and evaluate
//! rankings of rare-class data.
//!
//! Exit codes:
//!
//! | code | meaning                                   |
//! |------|-------------------------------------------|
//! | 0    | success                                   |
//! | 2    | bad command line                          |
//! | 3    | unreadable or invalid config file         |
//! | 4    | file system error                         |
//! | 5    | invalid input data                        |
//! | 6    | unreadable or incompatible model file     |
//! | 7    | failure while fitting or evaluating       |

mod args;
mod commands;
mod config;
mod failure;
mod output;
mod svg;

use args::{Cli, Command};
use clap::Parser;
use failure::{ExitKind, Failure};
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::inject(argv) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report(&Failure::new(ExitKind::Compute, e.into()));
        }
    }
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Null(a) => commands::null(a),
        Command::ClusterGroups(a) => commands::cluster_groups(a),
        Command::Form(a) => commands::form(a),
        Command::Fit(a) => commands::fit(a),
        Command::Rank(a) => commands::rank(a),
        Command::Cv(a) => commands::cv(a),
        Command::Diversity(a) => commands::diversity(a),
        Command::PlotHits(a) => commands::plot_hits(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &Failure) -> ExitCode {
    eprintln!("error: {:#}", e.error);
    ExitCode::from(e.kind as u8)
}
