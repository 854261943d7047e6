//! Score fields `s(x_t, z, t) ≈ ∇ log p_t(x_t | z)`.
//!
//! [`ScoreField`] is the contract the sampler drives. It is realised in
//! closed form by [`GaussianMixtureScore`] and by the learned
//! [`MlpScoreNet`] decoder. [`PointEncoder`] and [`LatentScoreNet`] complete
//! the latent-variable model.

mod decoder;
mod encoder;
mod gmm;
mod latent;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

pub use decoder::MlpScoreNet;
pub use encoder::{reparameterize, EncoderCache, PointEncoder, LOGVAR_MAX, LOGVAR_MIN};
pub use gmm::GaussianMixtureScore;
pub use latent::LatentScoreNet;

use crate::{Error, Result};

/// Estimated score of a noisy point set.
pub trait ScoreField: Sync {
    /// Score at every row of `xt`; the output has the shape of `xt`.
    fn score(&self, xt: ArrayView2<f64>, z: Option<ArrayView1<f64>>, t: f64) -> Result<Array2<f64>>;

    /// Vector–Jacobian product `cᵀ·∂s/∂x_t`, row by row.
    fn input_vjp(
        &self,
        _xt: ArrayView2<f64>,
        _z: Option<ArrayView1<f64>>,
        _t: f64,
        _cotangent: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        Err(Error::UnsupportedMode(
            "score field does not provide input gradients".into(),
        ))
    }
}

/// Anything that scores a latent vector.
pub trait LatentField {
    fn latent_score(&self, zt: ArrayView1<f64>, t: f64) -> Result<Array1<f64>>;
}

impl LatentField for latent::LatentScoreNet {
    fn latent_score(&self, zt: ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
        self.score(zt, t)
    }
}

impl<F> LatentField for F
where
    F: Fn(ArrayView1<f64>, f64) -> Result<Array1<f64>>,
{
    fn latent_score(&self, zt: ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
        self(zt, t)
    }
}

/// The score that is identically zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroScore;

impl ScoreField for ZeroScore {
    fn score(&self, xt: ArrayView2<f64>, _z: Option<ArrayView1<f64>>, _t: f64) -> Result<Array2<f64>> {
        Ok(Array2::zeros(xt.raw_dim()))
    }

    fn input_vjp(
        &self,
        xt: ArrayView2<f64>,
        _z: Option<ArrayView1<f64>>,
        _t: f64,
        _cotangent: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        Ok(Array2::zeros(xt.raw_dim()))
    }
}

/// Architecture hyperparameters of the three networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub time_embed_dim: usize,
    pub decoder_hidden: usize,
    pub decoder_blocks: usize,
    pub encoder_hidden: usize,
    pub encoder_features: usize,
    pub latent_hidden: usize,
    pub latent_blocks: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            time_embed_dim: 64,
            decoder_hidden: 256,
            decoder_blocks: 6,
            encoder_hidden: 128,
            encoder_features: 256,
            latent_hidden: 256,
            latent_blocks: 6,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("latent_dim", self.latent_dim),
            ("time_embed_dim", self.time_embed_dim),
            ("decoder_hidden", self.decoder_hidden),
            ("encoder_hidden", self.encoder_hidden),
            ("encoder_features", self.encoder_features),
            ("latent_hidden", self.latent_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !self.time_embed_dim.is_multiple_of(2) {
            return Err(Error::InvalidParameter("time_embed_dim must be even".into()));
        }
        Ok(())
    }
}

/// Encoder, conditional decoder and latent prior trained together.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    pub config: ModelConfig,
    pub schedule: crate::sde::VpSchedule,
    pub encoder: PointEncoder,
    pub decoder: MlpScoreNet,
    pub latent: LatentScoreNet,
}

impl GenerativeModel {
    /// Freshly initialised networks; the seed fixes every initial weight.
    pub fn new(config: ModelConfig, schedule: crate::sde::VpSchedule, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::rng::seeded(seed);
        let encoder = PointEncoder::new(&config, &mut rng);
        let decoder = MlpScoreNet::new(&config, schedule, &mut rng);
        let latent = LatentScoreNet::new(&config, schedule, &mut rng);
        Ok(Self {
            config,
            schedule,
            encoder,
            decoder,
            latent,
        })
    }
}
