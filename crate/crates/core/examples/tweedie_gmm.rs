//! Checks Tweedie denoising against the closed-form posterior mean of a
//! two-component Gaussian mixture at several noise levels.
//!
//! `cargo run --release --example tweedie_gmm`

use ndarray::array;
use smoothdiff::sampler::tweedie_denoise;
use smoothdiff::score_models::{GaussianMixtureScore, ScoreField};
use smoothdiff::{rng, VpSchedule};

fn main() -> smoothdiff::Result<()> {
    let schedule = VpSchedule::default();
    let field = GaussianMixtureScore::new(array![[1.5, 0.0, 0.0], [-1.0, 1.0, 0.0]], 0.4, vec![0.3, 0.7], schedule)?;
    let xt = rng::normal_matrix(&mut rng::seeded(9), 500, 3);
    println!("{:>6} {:>14} {:>12}", "t", "max |error|", "mean |x̂|");
    for t in [1e-3, 0.05, 0.2, 0.5, 1.0] {
        let score = field.score(xt.view(), None, t)?;
        let xhat = tweedie_denoise(&schedule, xt.view(), score.view(), t)?;
        let exact = field.posterior_mean(xt.view(), t)?;
        let err = (&xhat - &exact).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
        let size = xhat.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / 500.0;
        println!("{t:>6.3} {err:>14.3e} {size:>12.4}");
    }
    Ok(())
}
