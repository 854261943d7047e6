//! Flat TOML run configuration. Every key is optional; unknown keys are
//! rejected so a typo cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::sampler::{ConstraintMode, SamplerConfig};
use crate::score_models::ModelConfig;
use crate::sde::VpSchedule;
use crate::training::{EntropyMode, TimeSampling, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,

    pub beta_min: f64,
    pub beta_max: f64,

    pub latent_dim: usize,
    pub time_embed_dim: usize,
    pub decoder_hidden: usize,
    pub decoder_blocks: usize,
    pub encoder_hidden: usize,
    pub encoder_features: usize,
    pub latent_hidden: usize,
    pub latent_blocks: usize,

    pub batch_size: usize,
    pub epochs: usize,
    pub lr_encoder: f64,
    pub lr_decoder: f64,
    pub lr_latent: f64,
    pub constant_epochs: usize,
    pub decay_epochs: usize,
    pub time_floor: f64,
    pub entropy_mode: EntropyMode,
    pub time_sampling: TimeSampling,

    pub n_steps: usize,
    pub alpha: f64,
    pub knn_k: usize,
    pub graph_refresh_stride: usize,
    pub constraint_mode: ConstraintMode,
    pub eps_t: f64,
    pub t_constraint: f64,
    pub terminal_denoise: bool,
    pub n_points: usize,
    pub n_clouds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_parts(
            0,
            VpSchedule::default(),
            &ModelConfig::default(),
            &TrainConfig::default(),
            &SamplerConfig::default(),
        )
    }
}

impl RunConfig {
    pub fn from_parts(
        seed: u64,
        schedule: VpSchedule,
        model: &ModelConfig,
        train: &TrainConfig,
        sampler: &SamplerConfig,
    ) -> Self {
        Self {
            seed,
            dataset: None,
            output_dir: None,
            beta_min: schedule.beta_min,
            beta_max: schedule.beta_max,
            latent_dim: model.latent_dim,
            time_embed_dim: model.time_embed_dim,
            decoder_hidden: model.decoder_hidden,
            decoder_blocks: model.decoder_blocks,
            encoder_hidden: model.encoder_hidden,
            encoder_features: model.encoder_features,
            latent_hidden: model.latent_hidden,
            latent_blocks: model.latent_blocks,
            batch_size: train.batch_size,
            epochs: train.epochs,
            lr_encoder: train.lr_encoder,
            lr_decoder: train.lr_decoder,
            lr_latent: train.lr_latent,
            constant_epochs: train.constant_epochs,
            decay_epochs: train.decay_epochs,
            time_floor: train.time_floor,
            entropy_mode: train.entropy_mode,
            time_sampling: train.time_sampling,
            n_steps: sampler.n_steps,
            alpha: sampler.alpha,
            knn_k: sampler.knn_k,
            graph_refresh_stride: sampler.graph_refresh_stride,
            constraint_mode: sampler.mode,
            eps_t: sampler.eps_t,
            t_constraint: sampler.t_constraint,
            terminal_denoise: sampler.terminal_denoise,
            n_points: 256,
            n_clouds: 20,
        }
    }

    pub fn schedule(&self) -> Result<VpSchedule> {
        VpSchedule::new(self.beta_min, self.beta_max)
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            latent_dim: self.latent_dim,
            time_embed_dim: self.time_embed_dim,
            decoder_hidden: self.decoder_hidden,
            decoder_blocks: self.decoder_blocks,
            encoder_hidden: self.encoder_hidden,
            encoder_features: self.encoder_features,
            latent_hidden: self.latent_hidden,
            latent_blocks: self.latent_blocks,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr_encoder: self.lr_encoder,
            lr_decoder: self.lr_decoder,
            lr_latent: self.lr_latent,
            constant_epochs: self.constant_epochs,
            decay_epochs: self.decay_epochs,
            seed: self.seed,
            time_floor: self.time_floor,
            entropy_mode: self.entropy_mode,
            time_sampling: self.time_sampling,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            n_steps: self.n_steps,
            alpha: self.alpha,
            knn_k: self.knn_k,
            graph_refresh_stride: self.graph_refresh_stride,
            mode: self.constraint_mode,
            seed: self.seed,
            eps_t: self.eps_t,
            t_constraint: self.t_constraint,
            terminal_denoise: self.terminal_denoise,
            record_trajectory: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.schedule().map_err(wrap)?;
        self.model().validate().map_err(wrap)?;
        self.train().validate().map_err(wrap)?;
        self.sampler().validate().map_err(wrap)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// SHA-256 of the canonical serialisation, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}
