//! Trains the full latent model on 64 synthetic tori with the desk settings
//! from `configs/torus_desk.toml` and saves a checkpoint.
//!
//! `cargo run --release --example train_torus -- [epochs] [out.sdpc]`

use std::time::Instant;

use smoothdiff::checkpoint;
use smoothdiff::config::RunConfig;
use smoothdiff::geometry::{generate_shape, PointCloud, ShapeKind, ShapeSpec};
use smoothdiff::score_models::GenerativeModel;
use smoothdiff::training::Trainer;

const DESK: &str = include_str!("../../../configs/torus_desk.toml");

fn main() -> smoothdiff::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mut run = RunConfig::from_toml(DESK)?;
    if let Some(e) = args.get(1).and_then(|s| s.parse().ok()) {
        run.epochs = e;
    }
    let out = args.get(2).cloned().unwrap_or_else(|| "torus.sdpc".into());

    let dataset: Vec<PointCloud> = (0..64)
        .map(|i| generate_shape(&ShapeSpec::new(ShapeKind::from_name("torus")?, run.n_points, 0.02, i)))
        .collect::<Result<_, _>>()?;

    let model = GenerativeModel::new(run.model(), run.schedule()?, run.seed)?;
    let mut trainer = Trainer::new(model, run.train())?;
    let start = Instant::now();
    for _ in 0..run.epochs {
        let r = trainer.run_epoch(&dataset)?;
        println!(
            "epoch {:4}  recon {:.4}  latent {:.4}  entropy {:.2}  total {:.4}  [{:.1}s]",
            r.epoch,
            r.recon,
            r.latent,
            r.entropy,
            r.total,
            start.elapsed().as_secs_f64()
        );
    }
    checkpoint::save(out.as_ref(), &trainer.model, run.epochs)?;
    println!("saved {out}");
    Ok(())
}
