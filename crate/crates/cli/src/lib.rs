// SPDX-License-Identifier: Apache-2.0

//! File-mediated pipelines behind the `netreason` binary. Every subcommand
//! reads artifacts, writes new ones atomically into a fresh directory and
//! records a `run.json` manifest with the seed and a configuration hash.

pub mod args;
pub mod cmd;
pub mod error;
pub mod manifest;

use netreason_model::embed::Stage;

pub use args::{Cli, Command};
pub use error::{CliError, Result};

pub fn run(cli: &Cli) -> Result<()> {
    if cli.jobs > 0 {
        // Ignore the error when a pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    match &cli.command {
        Command::GenCorpus(a) => cmd::corpus::gen_corpus(a),
        Command::Ingest(a) => cmd::corpus::ingest(a),
        Command::Split(a) => cmd::corpus::split(a),
        Command::TrainPred(a) => cmd::train::train_pred(a),
        Command::TrainAlign1(a) => cmd::train::train_align(a, Stage::One),
        Command::TrainAlign2(a) => cmd::train::train_align(a, Stage::Two),
        Command::Annotate(a) => cmd::pipeline::annotate(a),
        Command::Prompt(a) => cmd::pipeline::prompt(a),
        Command::Generate(a) => cmd::pipeline::generate_cmd(a),
        Command::Eval(a) => cmd::evaluate::eval(a, cli.jobs),
        Command::Report(a) => cmd::evaluate::report(a),
    }
}
