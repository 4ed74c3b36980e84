//! Metrics CSV emission with deterministic formatting and row order.

use recon_core::Result;
use std::path::Path;

/// One CSV row. `rho`/`scheme` are empty for methods without a k-space split.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub scan_id: String,
    pub method: String,
    pub rho: Option<f64>,
    pub scheme: Option<String>,
    pub nmse: f64,
    pub ssim: f64,
}

fn fmt_rho(rho: Option<f64>) -> String {
    rho.map(|r| format!("{r}")).unwrap_or_default()
}

/// Write `scan_id,method,rho,scheme,nmse,ssim` rows sorted by
/// (scan_id, method, rho, scheme) for diff-stable output. UTF-8, LF line
/// endings.
pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut sorted: Vec<&MetricRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.scan_id, &a.method, fmt_rho(a.rho), &a.scheme).cmp(&(
            &b.scan_id,
            &b.method,
            fmt_rho(b.rho),
            &b.scheme,
        ))
    });
    let mut out = String::from("scan_id,method,rho,scheme,nmse,ssim\n");
    for row in sorted {
        out.push_str(&format!(
            "{},{},{},{},{:.10e},{:.10e}\n",
            row.scan_id,
            row.method,
            fmt_rho(row.rho),
            row.scheme.clone().unwrap_or_default(),
            row.nmse,
            row.ssim
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
