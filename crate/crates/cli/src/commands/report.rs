use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use eru_core::EvalReport;

#[derive(clap::Args)]
pub struct Args {
    /// A report.json written by `eru evaluate`
    #[arg(long)]
    input: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let content = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let report = EvalReport::from_json(&content)
        .with_context(|| format!("parsing {}", args.input.display()))?;
    print!("{}", report.to_text());
    Ok(())
}
