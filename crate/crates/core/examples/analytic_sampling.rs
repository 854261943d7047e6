//! Reverse-time sampling from a known Gaussian mixture score, with and
//! without the smoothness constraint.
//!
//! `cargo run --release --example analytic_sampling -- [alpha]`

use ndarray::array;
use smoothdiff::geometry::knn_smoothness;
use smoothdiff::sampler::{sample_cloud, ConstraintMode, SamplerConfig};
use smoothdiff::score_models::GaussianMixtureScore;
use smoothdiff::{rng, VpSchedule};

fn main() -> smoothdiff::Result<()> {
    let alpha: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let schedule = VpSchedule::default();
    let field = GaussianMixtureScore::new(array![[2.0, 0.0, 0.0], [-2.0, 0.0, 0.0]], 0.3, vec![0.5, 0.5], schedule)?;

    let plain = SamplerConfig::default().unconstrained();
    let guided = SamplerConfig {
        alpha,
        knn_k: 10,
        mode: ConstraintMode::ExactChain,
        ..SamplerConfig::default()
    };
    for (name, config) in [("plain", plain), ("guided", guided)] {
        let (cloud, _) = sample_cloud(&field, &schedule, None, 2000, &config, &mut rng::seeded(1))?;
        let right: Vec<f64> = cloud.points().rows().into_iter().filter(|p| p[0] > 0.0).map(|p| p[0]).collect();
        println!(
            "{name:>7}: {:.3} of points right, right-mode mean x {:.4}, S(k=10) {:.2}",
            right.len() as f64 / 2000.0,
            right.iter().sum::<f64>() / right.len() as f64,
            knn_smoothness(&cloud, 10)?
        );
    }
    Ok(())
}
