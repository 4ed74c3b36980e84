use super::util;
use crate::args::{ResolvedExperiment, Suite};
use crate::pgm::write_pgm;
use crate::report::{write_metrics_csv, MetricRow};
use rayon::prelude::*;
use recon_core::dataio::{read_dataset, Manifest, Scan};
use recon_core::metrics::{nmse, ssim};
use recon_core::network::{unrolled_forward, NetworkParams};
use recon_core::sampling::{SplitOptions, SplitScheme};
use recon_core::solvers::{cg_sense, tgv_reconstruct};
use recon_core::training::{fit, LossKind, TrainOptions};
use recon_core::{ComplexImage, ReconError, Result};
use std::path::Path;

pub fn run(cfg: ResolvedExperiment) -> Result<()> {
    let (train_manifest, train_scans) = read_dataset(&cfg.train)?;
    let (test_manifest, test_scans) = read_dataset(&cfg.test)?;
    for scan in &test_scans {
        if scan.ref_image.is_none() {
            return Err(ReconError::Config(format!(
                "test scan {} has no reference image",
                scan.scan_id
            )));
        }
    }
    let images_dir = cfg.out.join("images");
    std::fs::create_dir_all(&images_dir)?;
    for scan in &test_scans {
        write_pgm(
            &images_dir.join(format!("{}_reference.pgm", scan.scan_id)),
            scan.ref_image.as_ref().expect("checked above"),
        )?;
    }

    let rows = match cfg.suite {
        Suite::LambdaScheme => lambda_scheme(&cfg, &train_scans, &test_scans, &images_dir)?,
        Suite::RhoSweep => rho_sweep(&cfg, &train_scans, &test_scans, &images_dir)?,
        Suite::Compare => compare(&cfg, &train_scans, &test_scans, &images_dir)?,
    };
    write_metrics_csv(&cfg.out.join("metrics.csv"), &rows)?;
    write_provenance(&cfg, &train_manifest, &test_manifest)?;
    println!(
        "{:?} suite finished: {} metric rows under {}",
        cfg.suite,
        rows.len(),
        cfg.out.display()
    );
    Ok(())
}

/// Train a self-supervised model on a fresh copy of the training cohort with
/// the given split configuration.
fn train_selfsup(
    cfg: &ResolvedExperiment,
    train_scans: &[Scan],
    rho: f64,
    scheme: SplitScheme,
) -> Result<NetworkParams> {
    let mut scans = train_scans.to_vec();
    util::attach_splits(&mut scans, rho, scheme, cfg.seed, &SplitOptions::default())?;
    let opts = TrainOptions {
        epochs: cfg.epochs,
        lr: cfg.lr,
        seed: cfg.seed,
    };
    Ok(fit(&scans, &cfg.net, LossKind::SelfsupKspace, &opts)?.params)
}

fn train_supervised(cfg: &ResolvedExperiment, train_scans: &[Scan]) -> Result<NetworkParams> {
    let opts = TrainOptions {
        epochs: cfg.epochs,
        lr: cfg.lr,
        seed: cfg.seed,
    };
    Ok(fit(train_scans, &cfg.net, LossKind::SupervisedImage, &opts)?.params)
}

/// Reconstruct every test scan with `recon`, write PGMs tagged `suffix`, and
/// return one metric row per scan.
fn score<F>(
    test_scans: &[Scan],
    method: &str,
    rho: Option<f64>,
    scheme: Option<&str>,
    images_dir: &Path,
    suffix: &str,
    recon: F,
) -> Result<Vec<MetricRow>>
where
    F: Fn(&Scan) -> Result<ComplexImage> + Sync,
{
    let images: Vec<(String, ComplexImage)> = test_scans
        .par_iter()
        .map(|scan| recon(scan).map(|img| (scan.scan_id.clone(), img)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(images.len());
    for ((scan_id, image), scan) in images.iter().zip(test_scans.iter()) {
        write_pgm(&images_dir.join(format!("{scan_id}_{suffix}.pgm")), image)?;
        let reference = scan.ref_image.as_ref().expect("checked by caller");
        rows.push(MetricRow {
            scan_id: scan_id.clone(),
            method: method.to_string(),
            rho,
            scheme: scheme.map(str::to_string),
            nmse: nmse(reference, image)?,
            ssim: ssim(reference, image)?,
        });
    }
    Ok(rows)
}

fn model_recon(params: &NetworkParams, cfg: &ResolvedExperiment, scan: &Scan) -> Result<ComplexImage> {
    // Inference consumes the full acquired set, regardless of the training
    // split.
    unrolled_forward(params, &cfg.net, &scan.omega_operator()?, &scan.kspace)
}

/// Uniform vs Gaussian loss-subset selection at fixed rho.
fn lambda_scheme(
    cfg: &ResolvedExperiment,
    train_scans: &[Scan],
    test_scans: &[Scan],
    images_dir: &Path,
) -> Result<Vec<MetricRow>> {
    let (uniform, gaussian) = rayon::join(
        || train_selfsup(cfg, train_scans, cfg.rho, SplitScheme::UniformRandom),
        || train_selfsup(cfg, train_scans, cfg.rho, SplitScheme::GaussianDensity),
    );
    let (uniform, gaussian) = (uniform?, gaussian?);
    let mut rows = score(
        test_scans,
        "selfsup",
        Some(cfg.rho),
        Some("uniform"),
        images_dir,
        "selfsup_uniform",
        |scan| model_recon(&uniform, cfg, scan),
    )?;
    rows.extend(score(
        test_scans,
        "selfsup",
        Some(cfg.rho),
        Some("gaussian"),
        images_dir,
        "selfsup_gaussian",
        |scan| model_recon(&gaussian, cfg, scan),
    )?);
    Ok(rows)
}

/// Self-supervised training across the loss-fraction sweep.
fn rho_sweep(
    cfg: &ResolvedExperiment,
    train_scans: &[Scan],
    test_scans: &[Scan],
    images_dir: &Path,
) -> Result<Vec<MetricRow>> {
    const RHOS: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.4];
    let models: Vec<(f64, NetworkParams)> = RHOS
        .par_iter()
        .map(|&rho| train_selfsup(cfg, train_scans, rho, cfg.scheme).map(|m| (rho, m)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (rho, params) in &models {
        rows.extend(score(
            test_scans,
            "selfsup",
            Some(*rho),
            Some(cfg.scheme.name()),
            images_dir,
            &format!("selfsup_rho{rho}"),
            |scan| model_recon(params, cfg, scan),
        )?);
    }
    Ok(rows)
}

/// CG-SENSE, TGV, supervised and self-supervised on one test cohort.
fn compare(
    cfg: &ResolvedExperiment,
    train_scans: &[Scan],
    test_scans: &[Scan],
    images_dir: &Path,
) -> Result<Vec<MetricRow>> {
    let mut rows = score(
        test_scans,
        "cgsense",
        None,
        None,
        images_dir,
        "cgsense",
        |scan| {
            Ok(cg_sense(
                &scan.omega_operator()?,
                &scan.kspace,
                cfg.solver_iters,
                cfg.cg_tol,
            )?
            .0)
        },
    )?;
    rows.extend(score(test_scans, "tgv", None, None, images_dir, "tgv", |scan| {
        tgv_reconstruct(
            &scan.omega_operator()?,
            &scan.kspace,
            cfg.tgv_alpha1,
            cfg.tgv_alpha0,
            cfg.tgv_iters,
        )
    })?);

    let (supervised, selfsup) = rayon::join(
        || train_supervised(cfg, train_scans),
        || train_selfsup(cfg, train_scans, cfg.rho, cfg.scheme),
    );
    let (supervised, selfsup) = (supervised?, selfsup?);
    rows.extend(score(
        test_scans,
        "supervised",
        None,
        None,
        images_dir,
        "supervised",
        |scan| model_recon(&supervised, cfg, scan),
    )?);
    rows.extend(score(
        test_scans,
        "selfsup",
        Some(cfg.rho),
        Some(cfg.scheme.name()),
        images_dir,
        "selfsup",
        |scan| model_recon(&selfsup, cfg, scan),
    )?);
    Ok(rows)
}

fn write_provenance(
    cfg: &ResolvedExperiment,
    train_manifest: &Manifest,
    test_manifest: &Manifest,
) -> Result<()> {
    let doc = serde_json::json!({
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "suite": format!("{:?}", cfg.suite),
        "config": {
            "epochs": cfg.epochs,
            "lr": cfg.lr,
            "seed": cfg.seed,
            "unrolls": cfg.net.unrolls,
            "cg_iters": cfg.net.cg_iters,
            "channels": cfg.net.channels,
            "res_blocks": cfg.net.res_blocks,
            "rho": cfg.rho,
            "split_scheme": cfg.scheme.name(),
            "solver_iters": cfg.solver_iters,
            "cg_tol": cfg.cg_tol,
            "tgv_alpha1": cfg.tgv_alpha1,
            "tgv_alpha0": cfg.tgv_alpha0,
            "tgv_iters": cfg.tgv_iters,
        },
        "train_dataset": { "name": train_manifest.name, "seed": train_manifest.seed, "scans": train_manifest.scan_count },
        "test_dataset": { "name": test_manifest.name, "seed": test_manifest.seed, "scans": test_manifest.scan_count },
    });
    std::fs::write(
        cfg.out.join("provenance.json"),
        serde_json::to_string_pretty(&doc)? + "\n",
    )?;
    Ok(())
}
