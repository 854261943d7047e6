use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{ModelConfig, ScoreField};
use crate::nn::{time_embedding, MlpCache, MlpShape, ResidualMlp};
use crate::sde::VpSchedule;
use crate::{Error, Result};

/// Conditional per-point score network `s_ψ(x_t, z, t)`.
///
/// Each point goes through the same [`ResidualMlp`] with the conditioning
/// vector `[z; emb(t)]` fed to every layer. The raw output is divided by
/// `b_t`, so the network regresses unit-scale noise.
#[derive(Debug, Clone)]
pub struct MlpScoreNet {
    mlp: ResidualMlp,
    params: Vec<f64>,
    latent_dim: usize,
    time_embed_dim: usize,
    schedule: VpSchedule,
}

/// Saved activations of one decoder evaluation.
#[derive(Debug, Clone)]
pub struct DecoderCache {
    mlp: MlpCache,
    inv_b: f64,
}

impl MlpScoreNet {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, schedule: VpSchedule, rng: &mut R) -> Self {
        let mlp = ResidualMlp::new(Self::shape(config));
        let params = mlp.init_params(rng);
        Self {
            mlp,
            params,
            latent_dim: config.latent_dim,
            time_embed_dim: config.time_embed_dim,
            schedule,
        }
    }

    pub(crate) fn shape(config: &ModelConfig) -> MlpShape {
        MlpShape {
            input: 3,
            cond: config.latent_dim + config.time_embed_dim,
            hidden: config.decoder_hidden,
            blocks: config.decoder_blocks,
            output: 3,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.mlp.n_params() {
            return Err(Error::Checkpoint(format!(
                "decoder expects {} parameters, got {}",
                self.mlp.n_params(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    fn conditioning(&self, z: ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
        if z.len() != self.latent_dim {
            return Err(Error::InvalidInput(format!(
                "latent code has dimension {}, decoder expects {}",
                z.len(),
                self.latent_dim
            )));
        }
        let emb = time_embedding(t, self.time_embed_dim);
        Ok(concatenate(Axis(0), &[z, emb.view()]).expect("1-d concat"))
    }

    pub fn forward(&self, xt: ArrayView2<f64>, z: ArrayView1<f64>, t: f64) -> Result<(Array2<f64>, DecoderCache)> {
        if xt.ncols() != 3 {
            return Err(Error::InvalidInput(format!("expected N×3 points, got {} columns", xt.ncols())));
        }
        let b = self.schedule.diffusion_std(t)?;
        if b == 0.0 {
            return Err(Error::SingularTime(t));
        }
        let cond = self.conditioning(z, t)?;
        let (mut y, mlp) = self.mlp.forward(&self.params, xt, cond.view());
        let inv_b = 1.0 / b;
        y.mapv_inplace(|v| v * inv_b);
        Ok((y, DecoderCache { mlp, inv_b }))
    }

    /// Gradients of `⟨dscore, s⟩`: accumulates parameter gradients into
    /// `grad` (if given) and returns `(d/dx_t, d/dz)`.
    pub fn backward(
        &self,
        cache: &DecoderCache,
        dscore: ArrayView2<f64>,
        grad: Option<&mut [f64]>,
    ) -> (Array2<f64>, Array1<f64>) {
        let dy = dscore.mapv(|v| v * cache.inv_b);
        let (dx, dcond) = self.mlp.backward(&self.params, &cache.mlp, dy.view(), grad);
        let dz = dcond.slice(ndarray::s![..self.latent_dim]).to_owned();
        (dx, dz)
    }

    fn require_z<'a>(&self, z: Option<ArrayView1<'a, f64>>) -> Result<ArrayView1<'a, f64>> {
        z.ok_or_else(|| Error::InvalidInput("decoder score needs a latent code".into()))
    }
}

impl ScoreField for MlpScoreNet {
    fn score(&self, xt: ArrayView2<f64>, z: Option<ArrayView1<f64>>, t: f64) -> Result<Array2<f64>> {
        Ok(self.forward(xt, self.require_z(z)?, t)?.0)
    }

    fn input_vjp(
        &self,
        xt: ArrayView2<f64>,
        z: Option<ArrayView1<f64>>,
        t: f64,
        cotangent: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        let (_, cache) = self.forward(xt, self.require_z(z)?, t)?;
        Ok(self.backward(&cache, cotangent, None).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            latent_dim: 4,
            time_embed_dim: 6,
            decoder_hidden: 8,
            decoder_blocks: 2,
            ..ModelConfig::default()
        }
    }

    fn randomized(seed: u64) -> MlpScoreNet {
        let mut r = rng::seeded(seed);
        let mut net = MlpScoreNet::new(&tiny_config(), VpSchedule::default(), &mut r);
        for v in net.params_mut() {
            *v = r.random_range(-0.4..0.4);
        }
        net
    }

    #[test]
    fn fresh_network_outputs_zero() {
        let net = MlpScoreNet::new(&tiny_config(), VpSchedule::default(), &mut rng::seeded(0));
        let x = rng::normal_matrix(&mut rng::seeded(1), 10, 3);
        let z = rng::normal_vector(&mut rng::seeded(2), 4);
        let s = net.score(x.view(), Some(z.view()), 0.5).unwrap();
        assert!(s.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn permutation_equivariant_bitwise() {
        let net = randomized(3);
        let x = rng::normal_matrix(&mut rng::seeded(4), 12, 3);
        let z = rng::normal_vector(&mut rng::seeded(5), 4);
        let s = net.score(x.view(), Some(z.view()), 0.3).unwrap();
        let perm: Vec<usize> = (0..12).rev().collect();
        let xp = Array2::from_shape_fn((12, 3), |(i, a)| x[[perm[i], a]]);
        let sp = net.score(xp.view(), Some(z.view()), 0.3).unwrap();
        for i in 0..12 {
            assert_eq!(sp.row(i), s.row(perm[i]));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = randomized(7);
        let x = rng::normal_matrix(&mut rng::seeded(8), 5, 3);
        let z = rng::normal_vector(&mut rng::seeded(9), 4);
        let w = rng::normal_matrix(&mut rng::seeded(10), 5, 3);
        let t = 0.4;
        let f = |net: &MlpScoreNet, x: &Array2<f64>, z: &Array1<f64>| {
            (&net.score(x.view(), Some(z.view()), t).unwrap() * &w).sum()
        };
        let (_, cache) = net.forward(x.view(), z.view(), t).unwrap();
        let mut g = vec![0.0; net.params().len()];
        let (dx, dz) = net.backward(&cache, w.view(), Some(&mut g));
        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);

        for i in (0..g.len()).step_by(5) {
            let mut p = net.clone();
            p.params_mut()[i] += h;
            let fp = f(&p, &x, &z);
            p.params_mut()[i] -= 2.0 * h;
            let fm = f(&p, &x, &z);
            assert!(rel((fp - fm) / (2.0 * h), g[i]) < 1e-4);
        }
        for i in 0..5 {
            for a in 0..3 {
                let mut xp = x.clone();
                xp[[i, a]] += h;
                let mut xm = x.clone();
                xm[[i, a]] -= h;
                assert!(rel((f(&net, &xp, &z) - f(&net, &xm, &z)) / (2.0 * h), dx[[i, a]]) < 1e-4);
            }
        }
        for j in 0..4 {
            let mut zp = z.clone();
            zp[j] += h;
            let mut zm = z.clone();
            zm[j] -= h;
            assert!(rel((f(&net, &x, &zp) - f(&net, &x, &zm)) / (2.0 * h), dz[j]) < 1e-4);
        }
        let vjp = net.input_vjp(x.view(), Some(z.view()), t, w.view()).unwrap();
        assert_eq!(vjp, dx);
    }

    #[test]
    fn latent_dimension_is_checked() {
        let net = randomized(1);
        let x = Array2::zeros((3, 3));
        let z = Array1::zeros(5);
        assert!(matches!(net.score(x.view(), Some(z.view()), 0.5), Err(Error::InvalidInput(_))));
        assert!(matches!(net.score(x.view(), None, 0.5), Err(Error::InvalidInput(_))));
        assert!(matches!(net.score(x.view(), Some(Array1::zeros(4).view()), 0.0), Err(Error::SingularTime(_))));
    }
}
