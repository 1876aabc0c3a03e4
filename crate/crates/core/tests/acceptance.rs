//! The acceptance suite at desk scale: the full scenario matrix at
//! n = 200,000 per treatment setting, one line per criterion.
//!
//! Prints the report and exits 0 so the workspace test run stays usable.
//! Set `PREGSIM_ACCEPTANCE_STRICT=1` to exit non-zero on any gating failure.

use std::process::ExitCode;

use pregsim::manifest::ConfigSource;
use pregsim::scenario::RunConfig;
use pregsim::verify::{verify, CheckStatus};

const N: u64 = 200_000;
const SEED: u64 = 20_240_601;

fn main() -> ExitCode {
    let strict = std::env::var("PREGSIM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let report = match verify(&RunConfig::new(N, SEED), &ConfigSource::bundled()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("acceptance suite could not run: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("{report}");

    let evaluated = report
        .checks
        .iter()
        .filter(|c| (1..=9).contains(&c.id) && !matches!(c.status, CheckStatus::Skipped(_)))
        .count();
    if evaluated != 9 {
        eprintln!("only {evaluated} of 9 criteria evaluated");
        return ExitCode::FAILURE;
    }
    let failed = report.checks.iter().filter(|c| c.failed()).count();
    println!("{failed} of 9 criteria failing");
    if strict && failed > 0 {
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
