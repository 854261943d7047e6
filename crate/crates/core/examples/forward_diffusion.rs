//! Pushes a torus through the forward VP perturbation kernel and prints the
//! signal and noise scales along with the shrinking signal-to-noise ratio.
//!
//! `cargo run --release --example forward_diffusion`

use smoothdiff::geometry::{generate_shape, knn_smoothness, PointCloud, ShapeKind, ShapeSpec};
use smoothdiff::{rng, VpSchedule};

fn main() -> smoothdiff::Result<()> {
    let schedule = VpSchedule::default();
    let cloud = generate_shape(&ShapeSpec::new(ShapeKind::from_name("torus")?, 1024, 0.0, 3))?;
    let mut r = rng::seeded(0);
    println!("{:>6} {:>9} {:>9} {:>10} {:>10} {:>10}", "t", "a_t", "b_t", "SNR", "rms", "S(k=10)");
    for t in [1e-5, 0.01, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0] {
        let (a, b) = schedule.coefficients(t)?;
        let noise = rng::normal_matrix(&mut r, cloud.len(), 3);
        let xt = PointCloud::new(schedule.perturb(cloud.view(), t, noise.view())?)?;
        let rms = (xt.points().mapv(|v| v * v).mean().unwrap_or(0.0)).sqrt();
        println!(
            "{t:>6.3} {a:>9.5} {b:>9.5} {:>10.3e} {rms:>10.4} {:>10.2}",
            a * a / (b * b),
            knn_smoothness(&xt, 10)?
        );
    }
    Ok(())
}
