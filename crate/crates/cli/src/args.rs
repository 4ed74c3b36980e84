//! Argument parsing and config-file resolution.
//!
//! Every numeric knob is a clap `Option` so precedence is explicit:
//! a flag given on the command line wins, then a value from `--config`
//! (flat JSON, snake_case keys), then the documented default.

use clap::{Args, Parser, Subcommand, ValueEnum};
use recon_core::network::NetConfig;
use recon_core::sampling::SplitScheme;
use recon_core::training::LossKind;
use recon_core::{ReconError, Result};
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "recon",
    version,
    about = "Self-supervised multi-coil MRI reconstruction on synthetic phantoms",
    subcommand_required = true,
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic multi-coil phantom dataset
    GenData(GenDataArgs),
    /// Attach data-consistency/loss k-space splits to a dataset
    GenSplit(GenSplitArgs),
    /// Train an unrolled reconstruction network
    Train(TrainArgs),
    /// Reconstruct every scan of a dataset
    Reconstruct(ReconstructArgs),
    /// Score reconstructions against the dataset references
    Evaluate(EvaluateArgs),
    /// Run a named experiment suite
    Experiment(ExperimentArgs),
}

/// Flat config file: any subset of the CLI knobs as JSON, e.g.
/// `{"rho": 0.2, "epochs": 80}`. Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scans: Option<usize>,
    pub size: Option<usize>,
    pub coils: Option<usize>,
    pub accel: Option<usize>,
    pub acs: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub seed: Option<u64>,
    pub rho: Option<f64>,
    pub split_scheme: Option<String>,
    pub split_sigma: Option<f64>,
    pub exclude_acs: Option<bool>,
    pub loss: Option<String>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub checkpoint_every: Option<usize>,
    pub unrolls: Option<usize>,
    pub cg_iters: Option<usize>,
    pub channels: Option<usize>,
    pub res_blocks: Option<usize>,
    pub solver: Option<String>,
    pub solver_iters: Option<usize>,
    pub cg_tol: Option<f64>,
    pub tgv_alpha1: Option<f64>,
    pub tgv_alpha0: Option<f64>,
    pub tgv_iters: Option<usize>,
}

pub fn load_file_config(path: Option<&PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                ReconError::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text).map_err(|e| {
                ReconError::parameter("config", format!("{}: {e}", p.display()))
            })
        }
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn ensure(cond: bool, name: &str, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(ReconError::parameter(name, msg))
    }
}

fn is_power_of_two(n: usize) -> bool {
    n > 0 && n & (n - 1) == 0
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset name recorded in the manifest [default: synthetic]
    #[arg(long)]
    pub name: Option<String>,
    /// Number of scans [default: 20]
    #[arg(long)]
    pub scans: Option<usize>,
    /// Grid size (rows = cols, power of two) [default: 64]
    #[arg(long)]
    pub size: Option<usize>,
    /// Number of receiver coils [default: 4]
    #[arg(long)]
    pub coils: Option<usize>,
    /// Uniform undersampling rate R [default: 4]
    #[arg(long)]
    pub accel: Option<usize>,
    /// Fully sampled autocalibration lines [default: 8]
    #[arg(long)]
    pub acs: Option<usize>,
    /// Noise std per real component at acquired points [default: 0.01]
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Generation seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub struct ResolvedGenData {
    pub out: PathBuf,
    pub name: String,
    pub gen: recon_core::dataio::GenParams,
}

impl GenDataArgs {
    pub fn resolve(self) -> Result<ResolvedGenData> {
        let file = load_file_config(self.config.as_ref())?;
        let size = pick(self.size, file.size, 64);
        let gen = recon_core::dataio::GenParams {
            scans: pick(self.scans, file.scans, 20),
            rows: size,
            cols: size,
            ncoils: pick(self.coils, file.coils, 4),
            accel: pick(self.accel, file.accel, 4),
            acs_lines: pick(self.acs, file.acs, 8),
            noise_sigma: pick(self.noise_sigma, file.noise_sigma, 0.01),
            seed: pick(self.seed, file.seed, 1),
        };
        ensure(gen.scans >= 1, "scans", "must be >= 1")?;
        ensure(
            is_power_of_two(size) && size >= 8,
            "size",
            "must be a power of two >= 8",
        )?;
        ensure(gen.ncoils >= 1, "coils", "must be >= 1")?;
        ensure(gen.accel >= 1, "accel", "must be >= 1")?;
        ensure(gen.acs_lines <= size, "acs", "must not exceed the grid size")?;
        ensure(gen.noise_sigma >= 0.0, "noise-sigma", "must be >= 0")?;
        Ok(ResolvedGenData {
            out: self.out,
            name: pick(self.name, None, "synthetic".to_string()),
            gen,
        })
    }
}

#[derive(Args, Debug)]
pub struct GenSplitArgs {
    /// Dataset directory to annotate
    #[arg(long)]
    pub data: PathBuf,
    /// JSON config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Loss-subset fraction of the acquired points, in (0, 1) [default: 0.4]
    #[arg(long)]
    pub rho: Option<f64>,
    /// Loss-subset selection: uniform or gaussian [default: gaussian]
    #[arg(long)]
    pub split_scheme: Option<String>,
    /// Gaussian density std in k-space columns [default: cols/4]
    #[arg(long)]
    pub split_sigma: Option<f64>,
    /// Keep autocalibration columns out of the loss subset
    #[arg(long)]
    pub exclude_acs: bool,
    /// Split seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub struct ResolvedGenSplit {
    pub data: PathBuf,
    pub rho: f64,
    pub scheme: SplitScheme,
    pub sigma: Option<f64>,
    pub exclude_acs: bool,
    pub seed: u64,
}

pub fn validate_rho(rho: f64) -> Result<()> {
    ensure(
        rho > 0.0 && rho < 1.0,
        "rho",
        "must lie in the open interval (0, 1)",
    )
}

impl GenSplitArgs {
    pub fn resolve(self) -> Result<ResolvedGenSplit> {
        let file = load_file_config(self.config.as_ref())?;
        let rho = pick(self.rho, file.rho, 0.4);
        validate_rho(rho)?;
        let scheme_name = pick(
            self.split_scheme,
            file.split_scheme,
            "gaussian".to_string(),
        );
        let sigma = pick(self.split_sigma.map(Some), file.split_sigma.map(Some), None);
        if let Some(s) = sigma {
            ensure(s > 0.0, "split-sigma", "must be positive")?;
        }
        Ok(ResolvedGenSplit {
            data: self.data,
            rho,
            scheme: SplitScheme::parse(&scheme_name)?,
            sigma,
            exclude_acs: self.exclude_acs || file.exclude_acs.unwrap_or(false),
            seed: pick(self.seed, file.seed, 1),
        })
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint output path (.ksrd)
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training loss: selfsup or supervised [default: selfsup]
    #[arg(long)]
    pub loss: Option<String>,
    /// Epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 1e-3]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Training seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Unroll count T [default: 10]
    #[arg(long)]
    pub unrolls: Option<usize>,
    /// CG iterations per data-consistency unit [default: 10]
    #[arg(long)]
    pub cg_iters: Option<usize>,
    /// Convolution channels [default: 16]
    #[arg(long)]
    pub channels: Option<usize>,
    /// Residual blocks [default: 4]
    #[arg(long)]
    pub res_blocks: Option<usize>,
    /// Write an intermediate checkpoint every N epochs (0 = never)
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Fraction for splits generated when scans lack one [default: 0.4]
    #[arg(long)]
    pub rho: Option<f64>,
    /// Scheme for splits generated when scans lack one [default: gaussian]
    #[arg(long)]
    pub split_scheme: Option<String>,
}

#[derive(Debug)]
pub struct ResolvedTrain {
    pub data: PathBuf,
    pub out: PathBuf,
    pub loss: LossKind,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub net: NetConfig,
    pub checkpoint_every: usize,
    pub rho: f64,
    pub scheme: SplitScheme,
}

impl TrainArgs {
    pub fn resolve(self) -> Result<ResolvedTrain> {
        let file = load_file_config(self.config.as_ref())?;
        let defaults = NetConfig::default();
        let net = NetConfig {
            unrolls: pick(self.unrolls, file.unrolls, defaults.unrolls),
            cg_iters: pick(self.cg_iters, file.cg_iters, defaults.cg_iters),
            channels: pick(self.channels, file.channels, defaults.channels),
            res_blocks: pick(self.res_blocks, file.res_blocks, defaults.res_blocks),
            ..defaults
        };
        net.validate()?;
        ensure(net.unrolls >= 1, "unrolls", "must be >= 1")?;
        let lr = pick(self.lr, file.lr, 1e-3);
        ensure(lr > 0.0, "lr", "must be positive")?;
        let rho = pick(self.rho, file.rho, 0.4);
        validate_rho(rho)?;
        let scheme_name = pick(self.split_scheme, file.split_scheme, "gaussian".to_string());
        Ok(ResolvedTrain {
            data: self.data,
            out: self.out,
            loss: LossKind::parse(&pick(self.loss, file.loss, "selfsup".to_string()))?,
            epochs: pick(self.epochs, file.epochs, 100),
            lr,
            seed: pick(self.seed, file.seed, 1),
            net,
            checkpoint_every: pick(self.checkpoint_every, file.checkpoint_every, 0),
            rho,
            scheme: SplitScheme::parse(&scheme_name)?,
        })
    }
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for reconstructed images
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Classical solver: cgsense or tgv (mutually exclusive with --checkpoint)
    #[arg(long)]
    pub solver: Option<String>,
    /// Trained network checkpoint (mutually exclusive with --solver)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// CG iterations for cgsense [default: 50]
    #[arg(long)]
    pub cg_iters: Option<usize>,
    /// CG relative residual tolerance [default: 1e-10]
    #[arg(long)]
    pub cg_tol: Option<f64>,
    /// First-order TGV weight [default: 2e-3]
    #[arg(long)]
    pub tgv_alpha1: Option<f64>,
    /// Second-order TGV weight [default: 4e-3]
    #[arg(long)]
    pub tgv_alpha0: Option<f64>,
    /// TGV primal-dual iterations [default: 500]
    #[arg(long)]
    pub tgv_iters: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum ReconMethod {
    CgSense { iters: usize, tol: f64 },
    Tgv { alpha1: f64, alpha0: f64, iters: usize },
    Checkpoint(PathBuf),
}

#[derive(Debug)]
pub struct ResolvedReconstruct {
    pub data: PathBuf,
    pub out: PathBuf,
    pub method: ReconMethod,
}

impl ReconstructArgs {
    pub fn resolve(self) -> Result<ResolvedReconstruct> {
        let file = load_file_config(self.config.as_ref())?;
        let solver = pick(self.solver.map(Some), file.solver.map(Some), None);
        let method = match (solver, self.checkpoint) {
            (Some(name), None) => match name.as_str() {
                "cgsense" => ReconMethod::CgSense {
                    iters: pick(self.cg_iters, file.solver_iters, 50),
                    tol: pick(self.cg_tol, file.cg_tol, 1e-10),
                },
                "tgv" => {
                    let alpha1 = pick(self.tgv_alpha1, file.tgv_alpha1, 2e-3);
                    let alpha0 = pick(self.tgv_alpha0, file.tgv_alpha0, 4e-3);
                    ensure(alpha1 > 0.0, "tgv-alpha1", "must be positive")?;
                    ensure(alpha0 > 0.0, "tgv-alpha0", "must be positive")?;
                    ReconMethod::Tgv {
                        alpha1,
                        alpha0,
                        iters: pick(self.tgv_iters, file.tgv_iters, 500),
                    }
                }
                other => {
                    return Err(ReconError::parameter(
                        "solver",
                        format!("unknown solver `{other}`, expected cgsense or tgv"),
                    ))
                }
            },
            (None, Some(path)) => ReconMethod::Checkpoint(path),
            (None, None) => {
                return Err(ReconError::parameter(
                    "solver",
                    "either --solver or --checkpoint is required",
                ))
            }
            (Some(_), Some(_)) => {
                return Err(ReconError::parameter(
                    "solver",
                    "--solver and --checkpoint are mutually exclusive",
                ))
            }
        };
        Ok(ResolvedReconstruct {
            data: self.data,
            out: self.out,
            method,
        })
    }
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Dataset directory holding the reference images
    #[arg(long)]
    pub data: PathBuf,
    /// Directory of reconstructions written by `reconstruct`
    #[arg(long)]
    pub recon: PathBuf,
    /// Output CSV path
    #[arg(long)]
    pub out: PathBuf,
    /// Method label recorded in the CSV [default: recon]
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Debug)]
pub struct ResolvedEvaluate {
    pub data: PathBuf,
    pub recon: PathBuf,
    pub out: PathBuf,
    pub method: String,
}

impl EvaluateArgs {
    pub fn resolve(self) -> Result<ResolvedEvaluate> {
        Ok(ResolvedEvaluate {
            data: self.data,
            recon: self.recon,
            out: self.out,
            method: self.method.unwrap_or_else(|| "recon".to_string()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Uniform vs Gaussian loss-subset selection at rho = 0.1
    LambdaScheme,
    /// Self-supervised training across rho in {0.05, 0.1, 0.2, 0.3, 0.4}
    RhoSweep,
    /// CG-SENSE vs TGV vs supervised vs self-supervised
    Compare,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Which suite to run
    #[arg(value_enum)]
    pub suite: Suite,
    /// Training dataset directory
    #[arg(long)]
    pub train: PathBuf,
    /// Test dataset directory
    #[arg(long)]
    pub test: PathBuf,
    /// Output directory for CSV, provenance and images
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Epochs [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 1e-3]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for splits, init and shuffling [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Unroll count T [default: 5]
    #[arg(long)]
    pub unrolls: Option<usize>,
    /// CG iterations per data-consistency unit [default: 10]
    #[arg(long)]
    pub cg_iters: Option<usize>,
    /// Convolution channels [default: 8]
    #[arg(long)]
    pub channels: Option<usize>,
    /// Residual blocks [default: 2]
    #[arg(long)]
    pub res_blocks: Option<usize>,
    /// Loss-subset fraction where the suite does not fix it [default: 0.4]
    #[arg(long)]
    pub rho: Option<f64>,
    /// Split scheme where the suite does not fix it [default: gaussian]
    #[arg(long)]
    pub split_scheme: Option<String>,
    /// CG-SENSE baseline iterations [default: 50]
    #[arg(long)]
    pub solver_iters: Option<usize>,
    /// CG-SENSE baseline tolerance [default: 1e-10]
    #[arg(long)]
    pub cg_tol: Option<f64>,
    /// First-order TGV weight [default: 2e-3]
    #[arg(long)]
    pub tgv_alpha1: Option<f64>,
    /// Second-order TGV weight [default: 4e-3]
    #[arg(long)]
    pub tgv_alpha0: Option<f64>,
    /// TGV primal-dual iterations [default: 500]
    #[arg(long)]
    pub tgv_iters: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub suite: Suite,
    pub train: PathBuf,
    pub test: PathBuf,
    pub out: PathBuf,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub net: NetConfig,
    pub rho: f64,
    pub scheme: SplitScheme,
    pub solver_iters: usize,
    pub cg_tol: f64,
    pub tgv_alpha1: f64,
    pub tgv_alpha0: f64,
    pub tgv_iters: usize,
}

impl ExperimentArgs {
    pub fn resolve(self) -> Result<ResolvedExperiment> {
        let file = load_file_config(self.config.as_ref())?;
        // Desk-scale experiment defaults: small enough that a full suite runs
        // in minutes on a laptop CPU while keeping the unrolled structure.
        let net = NetConfig {
            unrolls: pick(self.unrolls, file.unrolls, 5),
            cg_iters: pick(self.cg_iters, file.cg_iters, 10),
            channels: pick(self.channels, file.channels, 8),
            res_blocks: pick(self.res_blocks, file.res_blocks, 2),
            ..NetConfig::default()
        };
        net.validate()?;
        ensure(net.unrolls >= 1, "unrolls", "must be >= 1")?;
        // The scheme-comparison suite runs at the small loss fraction the
        // comparison is about; the others default to the favored 0.4.
        let default_rho = match self.suite {
            Suite::LambdaScheme => 0.1,
            _ => 0.4,
        };
        let rho = pick(self.rho, file.rho, default_rho);
        validate_rho(rho)?;
        let lr = pick(self.lr, file.lr, 1e-3);
        ensure(lr > 0.0, "lr", "must be positive")?;
        let tgv_alpha1 = pick(self.tgv_alpha1, file.tgv_alpha1, 2e-3);
        let tgv_alpha0 = pick(self.tgv_alpha0, file.tgv_alpha0, 4e-3);
        ensure(tgv_alpha1 > 0.0, "tgv-alpha1", "must be positive")?;
        ensure(tgv_alpha0 > 0.0, "tgv-alpha0", "must be positive")?;
        let scheme_name = pick(self.split_scheme, file.split_scheme, "gaussian".to_string());
        Ok(ResolvedExperiment {
            suite: self.suite,
            train: self.train,
            test: self.test,
            out: self.out,
            epochs: pick(self.epochs, file.epochs, 50),
            lr,
            seed: pick(self.seed, file.seed, 1),
            net,
            rho,
            scheme: SplitScheme::parse(&scheme_name)?,
            solver_iters: pick(self.solver_iters, file.solver_iters, 50),
            cg_tol: pick(self.cg_tol, file.cg_tol, 1e-10),
            tgv_alpha1,
            tgv_alpha0,
            tgv_iters: pick(self.tgv_iters, file.tgv_iters, 500),
        })
    }
}
