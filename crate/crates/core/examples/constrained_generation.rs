//! Samples a trained checkpoint with and without the smoothness constraint
//! and compares mean smoothness and RS against a torus reference set.
//!
//! `cargo run --release --example constrained_generation -- model.sdpc [alpha] [t_constraint] [clouds]`

use smoothdiff::geometry::{generate_shape, knn_smoothness, PointCloud, ShapeKind, ShapeSpec};
use smoothdiff::metrics::mean_smoothness;
use smoothdiff::sampler::{generate, ConstraintMode, SamplerConfig};
use smoothdiff::checkpoint;

fn main() -> smoothdiff::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).map(String::as_str).unwrap_or("torus.sdpc");
    let alpha: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let t_constraint: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let n_clouds: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(20);
    let k = 30;

    let (model, epochs) = checkpoint::load(path.as_ref())?;
    println!("{path}: {epochs} epochs");
    let reference: Vec<PointCloud> = (0..64)
        .map(|i| generate_shape(&ShapeSpec::new(ShapeKind::from_name("torus")?, 256, 0.02, i)))
        .collect::<Result<_, _>>()?;
    let s_data = mean_smoothness(&reference, k)?;

    let guided = SamplerConfig {
        alpha,
        knn_k: k,
        mode: ConstraintMode::FrozenScore,
        t_constraint,
        seed: 1,
        ..SamplerConfig::default()
    };
    let plain = guided.unconstrained();
    let a: Vec<PointCloud> = generate(&model, &guided, n_clouds, 256)?.into_iter().map(|c| c.0).collect();
    let b: Vec<PointCloud> = generate(&model, &plain, n_clouds, 256)?.into_iter().map(|c| c.0).collect();
    let mut wins = 0;
    for (ca, cb) in a.iter().zip(&b) {
        if knn_smoothness(ca, k)? < knn_smoothness(cb, k)? {
            wins += 1;
        }
    }
    let (sa, sb) = (mean_smoothness(&a, k)?, mean_smoothness(&b, k)?);
    println!("data S {s_data:.3}");
    println!("alpha=0        S {sb:.3}  RS {:.3}", (sb - s_data).abs());
    println!("alpha={alpha:<8} S {sa:.3}  RS {:.3}", (sa - s_data).abs());
    println!("guided smoother in {wins}/{n_clouds} paired seeds");
    Ok(())
}
