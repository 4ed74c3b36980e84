//! Subcommand implementations.

mod evaluate;
mod experiment;
mod gen_data;
mod gen_split;
mod reconstruct;
mod train;

use crate::args::Command;
use recon_core::ReconError;

/// Usage errors exit 2, runtime failures exit 1.
#[derive(Debug)]
pub enum CommandError {
    Usage(ReconError),
    Runtime(ReconError),
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CommandError::Usage(e) | CommandError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

fn usage(e: ReconError) -> CommandError {
    CommandError::Usage(e)
}

fn runtime(e: ReconError) -> CommandError {
    CommandError::Runtime(e)
}

pub fn dispatch(cmd: Command) -> Result<(), CommandError> {
    match cmd {
        Command::GenData(a) => gen_data::run(a.resolve().map_err(usage)?).map_err(runtime),
        Command::GenSplit(a) => gen_split::run(a.resolve().map_err(usage)?).map_err(runtime),
        Command::Train(a) => train::run(a.resolve().map_err(usage)?).map_err(runtime),
        Command::Reconstruct(a) => {
            reconstruct::run(a.resolve().map_err(usage)?).map_err(runtime)
        }
        Command::Evaluate(a) => evaluate::run(a.resolve().map_err(usage)?).map_err(runtime),
        Command::Experiment(a) => experiment::run(a.resolve().map_err(usage)?).map_err(runtime),
    }
}

pub(crate) mod util {
    use recon_core::dataio::Scan;
    use recon_core::rng::Splitmix64;
    use recon_core::sampling::{split_omega, SplitOptions, SplitScheme, SplitSpec};
    use recon_core::Result;

    /// Deterministic per-scan split seed from a run seed.
    pub fn split_seed(seed: u64, index: usize) -> u64 {
        Splitmix64::with_stream(seed, 0x7370_6c69 ^ index as u64).next_u64()
    }

    /// Generate a split for every scan (overwriting any existing one).
    pub fn attach_splits(
        scans: &mut [Scan],
        rho: f64,
        scheme: SplitScheme,
        seed: u64,
        opts: &SplitOptions,
    ) -> Result<Vec<(String, SplitSpec)>> {
        let mut out = Vec::with_capacity(scans.len());
        for (i, scan) in scans.iter_mut().enumerate() {
            let split = split_omega(&scan.mask, rho, scheme, split_seed(seed, i), opts)?;
            out.push((scan.scan_id.clone(), split.clone()));
            scan.split = Some(split);
        }
        Ok(out)
    }
}
