use super::util;
use crate::args::ResolvedGenSplit;
use recon_core::dataio::{read_dataset, write_splits};
use recon_core::sampling::SplitOptions;
use recon_core::Result;

pub fn run(cfg: ResolvedGenSplit) -> Result<()> {
    let (_, mut scans) = read_dataset(&cfg.data)?;
    let opts = SplitOptions {
        sigma: cfg.sigma,
        exclude_acs: cfg.exclude_acs,
    };
    let splits = util::attach_splits(&mut scans, cfg.rho, cfg.scheme, cfg.seed, &opts)?;
    write_splits(&cfg.data, &splits)?;
    let (loss_pts, omega_pts) = (
        scans[0].split.as_ref().map(|s| s.loss_count()).unwrap_or(0),
        scans[0].mask.count(),
    );
    println!(
        "attached {} splits (rho {}, {} scheme, {} of {} points in the loss set per scan)",
        splits.len(),
        cfg.rho,
        cfg.scheme.name(),
        loss_pts,
        omega_pts
    );
    Ok(())
}
