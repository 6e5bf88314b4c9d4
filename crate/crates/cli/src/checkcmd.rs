//! `check`: run every invariant suite, print one line per check, and emit a
//! JSON report. Exit code 0 iff all pass.

use std::path::PathBuf;

use clap::Args;
use spinsphere::check::{run_all, CheckConfig};
use spinsphere::Result;

#[derive(Args)]
pub struct CheckArgs {
    /// Bandwidth used by the bandwidth-dependent suites.
    #[arg(long, default_value_t = 32)]
    bandwidth: usize,

    /// Seed for the randomized suites.
    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Write the JSON report here.
    #[arg(long)]
    output: Option<PathBuf>,

    /// Fault-injection hook: flip one Δ-table sign so the Wigner oracle
    /// must fail.
    #[arg(long, hide = true)]
    inject_delta_sign_flip: bool,
}

pub fn run(args: CheckArgs) -> Result<i32> {
    println!("seed: {}", args.seed);
    let cfg = CheckConfig {
        bandwidth: args.bandwidth.max(8),
        seed: args.seed,
        inject_delta_sign_flip: args.inject_delta_sign_flip,
    };
    let reports = run_all(&cfg);
    let mut all_passed = true;
    for r in &reports {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!(
            "{status}  {:<32} max_error {:>10.3e}  tol {:>8.1e}  [{}]",
            r.name, r.max_error, r.tolerance, r.detail
        );
        all_passed &= r.passed;
    }
    if let Some(path) = &args.output {
        std::fs::write(path, serde_json::to_string_pretty(&reports)?)?;
        println!("report written to {}", path.display());
    }
    println!(
        "{} of {} checks passed",
        reports.iter().filter(|r| r.passed).count(),
        reports.len()
    );
    Ok(if all_passed { 0 } else { 1 })
}
