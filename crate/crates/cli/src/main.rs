//! `pregsim`: run the scenario matrix, verify it, or compare two runs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pregsim::manifest::{compare_runs, execute, BatchOptions, ConfigSource};
use pregsim::output::OutputFormat;
use pregsim::scenario::RunConfig;
use pregsim::verify::verify;
use pregsim::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_ESTIMATION: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

/// Simulate pregnancy cohorts with missing outcomes and measure the bias of
/// three analytic-sample designs across the 36-scenario matrix.
#[derive(Debug, Parser)]
#[command(name = "pregsim", version)]
struct Cli {
    /// Schedule file (TOML). Defaults to the bundled schedules.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Pregnancies per treatment-effect setting.
    #[arg(long, default_value_t = 200_000)]
    n: u64,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    #[arg(long, default_value_t = 0)]
    replicate: u64,

    /// Scenario ids to run, e.g. `1,7,30`. All 36 when omitted.
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<u32>>,

    /// Worker threads. Output does not depend on this.
    #[arg(long)]
    threads: Option<usize>,

    #[arg(long, default_value = "out")]
    out: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Also write every generated pregnancy, one file per treatment setting.
    #[arg(long)]
    dump_cohort: bool,

    /// Run the acceptance checks instead of writing result files.
    #[arg(long, conflicts_with_all = ["compare", "dump_cohort"])]
    verify: bool,

    /// Compare the result files of two output directories.
    #[arg(long, num_args = 2, value_names = ["DIR_A", "DIR_B"], conflicts_with = "dump_cohort")]
    compare: Option<Vec<PathBuf>>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Io { .. } => EXIT_CONFIG,
        _ => EXIT_ESTIMATION,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("pregsim: {e}");
    ExitCode::from(exit_code(&e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(dirs) = &cli.compare {
        return match compare_runs(&dirs[0], &dirs[1]) {
            Ok(differ) if differ.is_empty() => {
                println!("identical");
                ExitCode::SUCCESS
            }
            Ok(differ) => {
                for name in differ {
                    println!("differs: {name}");
                }
                ExitCode::from(EXIT_VERIFY)
            }
            Err(e @ Error::Contract(_)) => {
                eprintln!("pregsim: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
            Err(e) => fail(e),
        };
    }

    let config = match &cli.config {
        Some(path) => ConfigSource::from_path(path),
        None => Ok(ConfigSource::bundled()),
    };
    let config = match config {
        Ok(c) => c,
        Err(e) => return fail(e),
    };

    let mut run = RunConfig::new(cli.n, cli.seed);
    run.replicate_id = cli.replicate;
    run.scenario_filter = cli.scenarios.clone();
    run.output_dir = cli.out.clone();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return fail(Error::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => return fail(Error::Config(format!("thread pool: {e}"))),
    };

    if cli.verify {
        return pool.install(|| match verify(&run, &config) {
            Ok(report) => {
                println!("{report}");
                if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_VERIFY)
                }
            }
            Err(e) => fail(e),
        });
    }

    let opts = BatchOptions {
        format: cli.format.into(),
        dump_cohort: cli.dump_cohort,
    };
    match pool.install(|| execute(&run, &config, opts)) {
        Ok((_, manifest)) => {
            println!(
                "{} scenarios, {} files in {} ({} ms)",
                manifest.scenario_ids.len(),
                manifest.files.len() + 1,
                run.output_dir.display(),
                manifest.total_wall_ms
            );
            for s in manifest.scenarios.iter().filter(|s| s.error.is_some()) {
                eprintln!(
                    "scenario {} failed: {}",
                    s.id,
                    s.error.as_deref().unwrap_or("")
                );
            }
            if manifest.failed_scenarios.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ESTIMATION)
            }
        }
        Err(e) => fail(e),
    }
}
