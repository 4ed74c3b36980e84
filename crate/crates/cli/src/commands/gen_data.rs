use crate::args::ResolvedGenData;
use recon_core::dataio::{generate_dataset, write_dataset};
use recon_core::Result;

pub fn run(cfg: ResolvedGenData) -> Result<()> {
    let scans = generate_dataset(&cfg.gen)?;
    let manifest = write_dataset(&cfg.out, &cfg.name, &scans, &cfg.gen)?;
    println!(
        "wrote {} scans ({}x{}, {} coils, R={}, {} ACS lines) to {}",
        manifest.scan_count,
        cfg.gen.rows,
        cfg.gen.cols,
        cfg.gen.ncoils,
        cfg.gen.accel,
        cfg.gen.acs_lines,
        cfg.out.display()
    );
    Ok(())
}
