//! Experiment harness: dataset generation, encoder pretraining, seeded
//! multi-run training, audits and reports.

pub mod args;
pub mod audit;
pub mod commands;
pub mod config;
pub mod failure;
pub mod summary;

use anyhow::Result;

use args::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    let root = cli.output_dir.as_deref();
    match &cli.command {
        Command::GenData(a) => commands::gen_data::run(a, root).map(drop),
        Command::Pretrain(a) => commands::pretrain::run(a, root).map(drop),
        Command::Train(a) => commands::train::run(a, root).map(drop),
        Command::Audit(a) => commands::audit::run(a, root),
        Command::Report(a) => commands::report::run(a, root).map(drop),
    }
}
