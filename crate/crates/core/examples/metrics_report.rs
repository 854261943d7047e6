//! Computes MMD, COV, 1-NNA and RS between a torus reference set and three
//! candidate sets: fresh tori, noisier tori and spheres.
//!
//! `cargo run --release --example metrics_report`

use smoothdiff::geometry::{generate_shape, PointCloud, ShapeKind, ShapeSpec};
use smoothdiff::metrics::evaluate;

fn family(name: &str, noise: f64, seed0: u64) -> smoothdiff::Result<Vec<PointCloud>> {
    (0..30)
        .map(|i| generate_shape(&ShapeSpec::new(ShapeKind::from_name(name)?, 256, noise, seed0 + i)))
        .collect()
}

fn main() -> smoothdiff::Result<()> {
    let reference = family("torus", 0.02, 0)?;
    println!("{:<14} {:>9} {:>6} {:>7} {:>9}", "candidate", "MMD×100", "COV", "1-NNA", "RS");
    for (label, set) in [
        ("torus", family("torus", 0.02, 1000)?),
        ("noisy torus", family("torus", 0.06, 2000)?),
        ("sphere", family("sphere", 0.02, 3000)?),
    ] {
        let r = evaluate(&reference, &set, 10)?;
        println!("{label:<14} {:>9.4} {:>6.3} {:>7.3} {:>9.3}", r.mmd_x100(), r.cov, r.one_nna, r.rs);
    }
    Ok(())
}
