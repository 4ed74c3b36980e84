//! Command-line pipeline: dataset generation, k-space splitting, training,
//! reconstruction, evaluation, and the three comparison experiment suites.
//!
//! Every run is reproducible from (config file, seed, dataset manifest):
//! randomness flows through explicit seeds, evaluation order is fixed, and
//! CSV/PGM outputs are byte-stable.

pub mod args;
pub mod commands;
pub mod pgm;
pub mod report;

use clap::error::ErrorKind;
use clap::Parser;
use std::sync::Once;

static THREAD_POOL: Once = Once::new();

/// Cap rayon's worker count from RECON_THREADS (default: number of cores).
fn init_threads() {
    THREAD_POOL.call_once(|| {
        if let Ok(value) = std::env::var("RECON_THREADS") {
            match value.parse::<usize>() {
                Ok(n) if n >= 1 => {
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
                _ => eprintln!(
                    "warning: ignoring RECON_THREADS={value:?} (expected a positive integer)"
                ),
            }
        }
    });
}

/// Exit codes: 0 success, 2 usage error, 1 runtime failure.
pub fn run(argv: &[String]) -> i32 {
    init_threads();
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    2
                }
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(commands::CommandError::Usage(e)) => {
            eprintln!("error: {e}");
            2
        }
        Err(commands::CommandError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
