use super::util;
use crate::args::ResolvedTrain;
use recon_core::dataio::{read_dataset, write_blob, NetworkCheckpoint};
use recon_core::sampling::{split_omega, SplitOptions};
use recon_core::training::{fit_with_callback, LossKind, TrainOptions};
use recon_core::Result;
use serde::Serialize;

#[derive(Serialize)]
struct TrainingSummary {
    loss: String,
    epochs: usize,
    lr: f64,
    seed: u64,
    unrolls: usize,
    cg_iters: usize,
    channels: usize,
    res_blocks: usize,
    trainable_parameters: usize,
    epoch_losses: Vec<f64>,
}

pub fn run(cfg: ResolvedTrain) -> Result<()> {
    let (_, mut scans) = read_dataset(&cfg.data)?;

    // Self-supervised training needs a split per scan; scans without one get
    // a deterministic split derived from the run seed.
    if cfg.loss == LossKind::SelfsupKspace {
        for (i, scan) in scans.iter_mut().enumerate() {
            if scan.split.is_none() {
                scan.split = Some(split_omega(
                    &scan.mask,
                    cfg.rho,
                    cfg.scheme,
                    util::split_seed(cfg.seed, i),
                    &SplitOptions::default(),
                )?);
            }
        }
    }

    let opts = TrainOptions {
        epochs: cfg.epochs,
        lr: cfg.lr,
        seed: cfg.seed,
    };
    if let Some(parent) = cfg.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let stem = cfg.out.with_extension("");
    let result = fit_with_callback(&scans, &cfg.net, cfg.loss, &opts, |epoch, params, loss| {
        println!("epoch {:>4}: mean loss {loss:.6}", epoch + 1);
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            let path = format!("{}_epoch{:04}.ksrd", stem.display(), epoch + 1);
            write_blob(
                std::path::Path::new(&path),
                &NetworkCheckpoint {
                    cfg: cfg.net.clone(),
                    params: params.clone(),
                },
            )?;
        }
        Ok(())
    })?;

    write_blob(
        &cfg.out,
        &NetworkCheckpoint {
            cfg: cfg.net.clone(),
            params: result.params.clone(),
        },
    )?;
    let summary = TrainingSummary {
        loss: cfg.loss.name().to_string(),
        epochs: cfg.epochs,
        lr: cfg.lr,
        seed: cfg.seed,
        unrolls: cfg.net.unrolls,
        cg_iters: cfg.net.cg_iters,
        channels: cfg.net.channels,
        res_blocks: cfg.net.res_blocks,
        trainable_parameters: result.params.len(),
        epoch_losses: result.epoch_losses.clone(),
    };
    std::fs::write(
        cfg.out.with_extension("json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    println!(
        "trained {} model for {} epochs; checkpoint at {}",
        cfg.loss.name(),
        cfg.epochs,
        cfg.out.display()
    );
    Ok(())
}
