//! Sweeps the constraint neighbourhood size for a trained checkpoint and
//! writes the table to CSV.
//!
//! `cargo run --release --example k_sweep -- model.sdpc [out.csv]`

use smoothdiff::checkpoint;
use smoothdiff::geometry::{generate_shape, PointCloud, ShapeKind, ShapeSpec};
use smoothdiff::sampler::SamplerConfig;
use smoothdiff::sweep::{sweep_k, write_sweep_csv};

fn main() -> smoothdiff::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).map(String::as_str).unwrap_or("torus.sdpc");
    let out = args.get(2).map(String::as_str).unwrap_or("sweep.csv");
    let (model, _) = checkpoint::load(path.as_ref())?;
    let reference: Vec<PointCloud> = (0..64)
        .map(|i| generate_shape(&ShapeSpec::new(ShapeKind::from_name("torus")?, 256, 0.02, i)))
        .collect::<Result<_, _>>()?;

    let rows = sweep_k(&model, &SamplerConfig::default(), &[5, 10, 15, 20, 25, 30, 35], 10, 256, 30, &reference)?;
    for r in &rows {
        println!("k={:>2}  S {:>9.2}  (baseline {:.2})  RS {:.2}", r.k, r.mean_smoothness, r.baseline_smoothness, r.rs);
    }
    write_sweep_csv(out.as_ref(), &rows)?;
    println!("wrote {out}");
    Ok(())
}
