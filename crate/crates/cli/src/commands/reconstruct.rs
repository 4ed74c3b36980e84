use crate::args::{ReconMethod, ResolvedReconstruct};
use crate::pgm::write_pgm;
use rayon::prelude::*;
use recon_core::dataio::{read_blob, read_dataset, write_blob, NetworkCheckpoint, Scan};
use recon_core::network::unrolled_forward;
use recon_core::solvers::{cg_sense, tgv_reconstruct};
use recon_core::{ComplexImage, Result};

fn reconstruct_one(scan: &Scan, method: &ReconMethod, ckpt: Option<&NetworkCheckpoint>) -> Result<ComplexImage> {
    let op = scan.omega_operator()?;
    match method {
        ReconMethod::CgSense { iters, tol } => {
            Ok(cg_sense(&op, &scan.kspace, *iters, *tol)?.0)
        }
        ReconMethod::Tgv {
            alpha1,
            alpha0,
            iters,
        } => tgv_reconstruct(&op, &scan.kspace, *alpha1, *alpha0, *iters),
        ReconMethod::Checkpoint(_) => {
            let ckpt = ckpt.expect("checkpoint loaded before dispatch");
            unrolled_forward(&ckpt.params, &ckpt.cfg, &op, &scan.kspace)
        }
    }
}

pub fn run(cfg: ResolvedReconstruct) -> Result<()> {
    let (_, scans) = read_dataset(&cfg.data)?;
    let ckpt = match &cfg.method {
        ReconMethod::Checkpoint(path) => Some(read_blob::<NetworkCheckpoint>(path)?),
        _ => None,
    };
    std::fs::create_dir_all(&cfg.out)?;

    let images: Vec<(String, ComplexImage)> = scans
        .par_iter()
        .map(|scan| {
            reconstruct_one(scan, &cfg.method, ckpt.as_ref())
                .map(|img| (scan.scan_id.clone(), img))
        })
        .collect::<Result<_>>()?;

    for (scan_id, image) in &images {
        write_blob(&cfg.out.join(format!("{scan_id}_recon.ksrd")), image)?;
        write_pgm(&cfg.out.join(format!("{scan_id}_recon.pgm")), image)?;
    }
    println!("reconstructed {} scans into {}", images.len(), cfg.out.display());
    Ok(())
}
