use crate::args::ResolvedEvaluate;
use crate::report::{write_metrics_csv, MetricRow};
use recon_core::dataio::{read_blob, read_dataset};
use recon_core::metrics::{nmse, ssim};
use recon_core::{ComplexImage, ReconError, Result};

pub fn run(cfg: ResolvedEvaluate) -> Result<()> {
    let (_, scans) = read_dataset(&cfg.data)?;
    let mut rows = Vec::with_capacity(scans.len());
    for scan in &scans {
        let reference = scan.ref_image.as_ref().ok_or_else(|| {
            ReconError::Config(format!(
                "scan {} has no reference image to score against",
                scan.scan_id
            ))
        })?;
        let path = cfg.recon.join(format!("{}_recon.ksrd", scan.scan_id));
        let recon: ComplexImage = read_blob(&path)?;
        rows.push(MetricRow {
            scan_id: scan.scan_id.clone(),
            method: cfg.method.clone(),
            rho: scan.split.as_ref().map(|s| s.rho),
            scheme: scan.split.as_ref().map(|s| s.scheme.name().to_string()),
            nmse: nmse(reference, &recon)?,
            ssim: ssim(reference, &recon)?,
        });
    }
    if let Some(parent) = cfg.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_metrics_csv(&cfg.out, &rows)?;
    println!("wrote {} metric rows to {}", rows.len(), cfg.out.display());
    Ok(())
}
