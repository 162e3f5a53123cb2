use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use eru_core::RunConfig;

mod ensemble;
mod evaluate;
mod gen_heatmaps;
mod loss_check;
mod report;

#[derive(Parser)]
#[command(
    name = "eru",
    version,
    about = "Embodied reference understanding pipeline: pointing heatmaps, prediction ensembling, evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render pointing heatmaps for every annotation
    GenHeatmaps(gen_heatmaps::Args),
    /// Fuse the two models' predictions into one box per image
    Ensemble(ensemble::Args),
    /// Score final predictions against ground truth
    Evaluate(evaluate::Args),
    /// Verify analytic loss gradients against finite differences
    LossCheck(loss_check::Args),
    /// Pretty-print a stored evaluation report
    Report(report::Args),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenHeatmaps(args) => gen_heatmaps::run(args),
        Command::Ensemble(args) => ensemble::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::LossCheck(args) => loss_check::run(args),
        Command::Report(args) => report::run(args),
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}
