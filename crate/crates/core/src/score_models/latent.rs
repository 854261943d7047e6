use ndarray::{Array1, ArrayView1, Axis};
use rand::Rng;

use super::ModelConfig;
use crate::nn::{time_embedding, MlpCache, MlpShape, ResidualMlp};
use crate::sde::VpSchedule;
use crate::{Error, Result};

/// Score model `s_θ(z_t, t)` of the learned latent prior: a residual dense
/// network over `z_t` conditioned on the time embedding, output divided by `b_t`.
#[derive(Debug, Clone)]
pub struct LatentScoreNet {
    mlp: ResidualMlp,
    params: Vec<f64>,
    latent_dim: usize,
    time_embed_dim: usize,
    schedule: VpSchedule,
}

#[derive(Debug, Clone)]
pub struct LatentCache {
    mlp: MlpCache,
    inv_b: f64,
}

impl LatentScoreNet {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, schedule: VpSchedule, rng: &mut R) -> Self {
        let mlp = ResidualMlp::new(MlpShape {
            input: config.latent_dim,
            cond: config.time_embed_dim,
            hidden: config.latent_hidden,
            blocks: config.latent_blocks,
            output: config.latent_dim,
        });
        let params = mlp.init_params(rng);
        Self {
            mlp,
            params,
            latent_dim: config.latent_dim,
            time_embed_dim: config.time_embed_dim,
            schedule,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn schedule(&self) -> VpSchedule {
        self.schedule
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
                "latent net expects {} parameters, got {}",
                self.mlp.n_params(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    pub fn forward(&self, zt: ArrayView1<f64>, t: f64) -> Result<(Array1<f64>, LatentCache)> {
        if zt.len() != self.latent_dim {
            return Err(Error::InvalidInput(format!(
                "latent has dimension {}, network expects {}",
                zt.len(),
                self.latent_dim
            )));
        }
        let b = self.schedule.diffusion_std(t)?;
        if b == 0.0 {
            return Err(Error::SingularTime(t));
        }
        let emb = time_embedding(t, self.time_embed_dim);
        let row = zt.insert_axis(Axis(0));
        let (y, mlp) = self.mlp.forward(&self.params, row, emb.view());
        let inv_b = 1.0 / b;
        Ok((y.row(0).mapv(|v| v * inv_b), LatentCache { mlp, inv_b }))
    }

    pub fn score(&self, zt: ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
        Ok(self.forward(zt, t)?.0)
    }

    /// Accumulates parameter gradients of `⟨dscore, s⟩` and returns `d/dz_t`.
    pub fn backward(&self, cache: &LatentCache, dscore: ArrayView1<f64>, grad: Option<&mut [f64]>) -> Array1<f64> {
        let dy = dscore.mapv(|v| v * cache.inv_b).insert_axis(Axis(0));
        let (dx, _) = self.mlp.backward(&self.params, &cache.mlp, dy.view(), grad);
        dx.row(0).to_owned()
    }
}
