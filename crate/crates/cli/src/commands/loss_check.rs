use anyhow::{bail, Result};
use eru_core::losses::grad::run_grad_check_suite;

#[derive(clap::Args)]
pub struct Args {
    /// Seed for the random configurations
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Configurations sampled per loss
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Maximum acceptable relative error
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

pub fn run(args: Args) -> Result<()> {
    if args.trials == 0 {
        bail!("--trials must be positive");
    }
    let report = run_grad_check_suite(args.seed, args.trials, args.epsilon);
    println!("{report}");
    if report.max_rel_error() >= args.tolerance {
        bail!(
            "gradient check failed: max relative error {:.3e} >= tolerance {:.3e}",
            report.max_rel_error(),
            args.tolerance
        );
    }
    println!("gradient check passed (tolerance {:.1e})", args.tolerance);
    Ok(())
}
