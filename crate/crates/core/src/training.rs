//! Variational training of the encoder, decoder score network and latent
//! prior by denoising score matching.
//!
//! Each step minimises `L_z + L_x − H[q(z|X)]` per cloud, where `L_x` and
//! `L_z` are likelihood-weighted (`g(t)²/2`) score-matching losses and `H` is
//! the Gaussian posterior entropy.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Dimension};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::PointCloud;
use crate::nn::Adam;
use crate::rng::{self, Stream};
use crate::score_models::{reparameterize, GenerativeModel, LatentField, ScoreField};
use crate::sde::VpSchedule;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// `½Σ(logvar + ln 2πe)`.
    ClosedForm,
    /// `−log q(z|X)` at the reparameterised sample.
    MonteCarlo,
}

/// How the diffusion time of each training example is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSampling {
    /// `t ∼ U[floor, 1]`, loss weight `g(t)²`.
    Uniform,
    /// `t` drawn with density `∝ g(t)²/b_t²` and reweighted, an unbiased
    /// estimate of the same objective with far lower variance.
    Importance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_encoder: f64,
    pub lr_decoder: f64,
    pub lr_latent: f64,
    /// Epochs at the base learning rate before the linear decay starts.
    pub constant_epochs: usize,
    /// Length of the linear decay to zero; 0 disables decay.
    pub decay_epochs: usize,
    pub seed: u64,
    /// Lower end of the uniform training-time distribution.
    pub time_floor: f64,
    pub entropy_mode: EntropyMode,
    pub time_sampling: TimeSampling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 200,
            lr_encoder: 2e-3,
            lr_decoder: 2e-4,
            lr_latent: 1e-4,
            constant_epochs: 1000,
            decay_epochs: 1000,
            seed: 0,
            time_floor: 1e-3,
            entropy_mode: EntropyMode::ClosedForm,
            time_sampling: TimeSampling::Importance,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be at least 1".into()));
        }
        for (name, lr) in [
            ("lr_encoder", self.lr_encoder),
            ("lr_decoder", self.lr_decoder),
            ("lr_latent", self.lr_latent),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {lr}")));
            }
        }
        if !(self.time_floor > 0.0 && self.time_floor < 1.0) {
            return Err(Error::InvalidParameter(format!("time_floor = {}", self.time_floor)));
        }
        Ok(())
    }

    /// Multiplier on the base learning rates for `epoch`.
    pub fn lr_factor(&self, epoch: usize) -> f64 {
        if epoch < self.constant_epochs || self.decay_epochs == 0 {
            1.0
        } else {
            (1.0 - (epoch - self.constant_epochs) as f64 / self.decay_epochs as f64).max(0.0)
        }
    }
}

/// Maps `u ∈ [0, 1)` to a training time and the weight `λ` that replaces
/// `g(t)²` in the loss, so that `E[λ·ℓ(t)]` is the uniform-time objective.
pub fn training_time(schedule: &VpSchedule, mode: TimeSampling, floor: f64, u: f64) -> (f64, f64) {
    match mode {
        TimeSampling::Uniform => {
            let t = floor + (1.0 - floor) * u;
            (t, schedule.beta(t))
        }
        TimeSampling::Importance => {
            // density ∝ d/dt ln(e^{B(t)} − 1) with B the integrated rate
            let f = |t: f64| schedule.beta_integral(t).exp_m1().ln();
            let (lo, hi) = (f(floor), f(1.0));
            let l = lo + (hi - lo) * u;
            let big_b = l.exp().ln_1p();
            let d = schedule.beta_max - schedule.beta_min;
            let bmin = schedule.beta_min;
            let t = (2.0 * big_b / (bmin + (bmin * bmin + 2.0 * d * big_b).sqrt())).clamp(floor, 1.0);
            let b2 = -(-schedule.beta_integral(t)).exp_m1();
            (t, (hi - lo) * b2 / (1.0 - floor))
        }
    }
}

/// Per-epoch mean losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub recon: f64,
    pub latent: f64,
    pub entropy: f64,
    pub total: f64,
}

/// `(g(t)²/2)·‖predicted − ∇log p_t(x_t|x_0)‖²`, normalised by the number of
/// rows (points) for matrices and unnormalised for vectors.
pub fn dsm_loss<D: Dimension>(
    schedule: &VpSchedule,
    predicted: ndarray::ArrayView<f64, D>,
    x0: ndarray::ArrayView<f64, D>,
    xt: ndarray::ArrayView<f64, D>,
    t: f64,
) -> Result<f64> {
    let target = schedule.conditional_score_target(x0, xt, t)?;
    if predicted.shape() != target.shape() {
        return Err(Error::InvalidInput("prediction shape differs from target".into()));
    }
    let sq: f64 = predicted.iter().zip(target.iter()).map(|(p, q)| (p - q).powi(2)).sum();
    let rows = if predicted.ndim() >= 2 { predicted.shape()[0] } else { 1 };
    Ok(0.5 * schedule.beta(t) * sq / rows as f64)
}

/// Decoder score-matching loss at `x_t = perturb(x0, t, noise)`.
pub fn recon_dsm_loss<F: ScoreField + ?Sized>(
    field: &F,
    schedule: &VpSchedule,
    x0: ArrayView2<f64>,
    z: ArrayView1<f64>,
    t: f64,
    noise: ArrayView2<f64>,
) -> Result<f64> {
    let xt = schedule.perturb(x0, t, noise)?;
    let s = field.score(xt.view(), Some(z), t)?;
    dsm_loss(schedule, s.view(), x0, xt.view(), t)
}

/// Latent-prior score-matching loss at `z_t = a_t·z0 + b_t·noise`.
pub fn latent_dsm_loss<F: LatentField + ?Sized>(
    field: &F,
    schedule: &VpSchedule,
    z0: ArrayView1<f64>,
    t: f64,
    noise: ArrayView1<f64>,
) -> Result<f64> {
    let zt = schedule.perturb(z0, t, noise)?;
    let s = field.latent_score(zt.view(), t)?;
    dsm_loss(schedule, s.view(), z0, zt.view(), t)
}

/// Entropy of `N(mean, diag(exp(logvar)))`.
pub fn entropy_term(logvar: ArrayView1<f64>) -> f64 {
    let c = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    0.5 * logvar.iter().map(|lv| lv + c).sum::<f64>()
}

/// Single-sample estimate `−log q(z)` with `z = mean + σ·noise`.
pub fn entropy_monte_carlo(logvar: ArrayView1<f64>, noise: ArrayView1<f64>) -> f64 {
    let c = (2.0 * std::f64::consts::PI).ln();
    0.5 * logvar.iter().zip(noise.iter()).map(|(lv, e)| c + lv + e * e).sum::<f64>()
}

struct CloudOutcome {
    recon: f64,
    latent: f64,
    entropy: f64,
    enc_grad: Vec<f64>,
    dec_grad: Vec<f64>,
    lat_grad: Vec<f64>,
}

fn cloud_gradients(
    model: &GenerativeModel,
    x0: ArrayView2<f64>,
    t: f64,
    g2: f64,
    mode: EntropyMode,
    rng: &mut Stream,
) -> Result<CloudOutcome> {
    let sched = &model.schedule;
    let d = model.config.latent_dim;
    let (a, b) = sched.coefficients(t)?;

    let (mean, logvar, enc_cache) = model.encoder.forward(x0)?;
    let eps_z = rng::normal_vector(rng, d);
    let z0 = reparameterize(mean.view(), logvar.view(), eps_z.view());

    // latent prior
    let noise_z = rng::normal_vector(rng, d);
    let zt = sched.perturb(z0.view(), t, noise_z.view())?;
    let (s_z, lat_cache) = model.latent.forward(zt.view(), t)?;
    let resid_z = &s_z + &noise_z.mapv(|e| e / b);
    let latent = 0.5 * g2 * resid_z.mapv(|r| r * r).sum();
    let mut lat_grad = vec![0.0; model.latent.params().len()];
    let dzt = model.latent.backward(&lat_cache, resid_z.mapv(|r| g2 * r).view(), Some(&mut lat_grad));

    // decoder
    let n = x0.nrows() as f64;
    let noise_x = rng::normal_matrix(rng, x0.nrows(), 3);
    let xt = sched.perturb(x0, t, noise_x.view())?;
    let (s_x, dec_cache) = model.decoder.forward(xt.view(), z0.view(), t)?;
    let resid_x: Array2<f64> = &s_x + &noise_x.mapv(|e| e / b);
    let recon = 0.5 * g2 * resid_x.mapv(|r| r * r).sum() / n;
    let mut dec_grad = vec![0.0; model.decoder.params().len()];
    let (_, dz_dec) = model.decoder.backward(&dec_cache, resid_x.mapv(|r| g2 * r / n).view(), Some(&mut dec_grad));

    let entropy = match mode {
        EntropyMode::ClosedForm => entropy_term(logvar.view()),
        EntropyMode::MonteCarlo => entropy_monte_carlo(logvar.view(), eps_z.view()),
    };

    // encoder: ∂(L_z + L_x − H)/∂(mean, logvar)
    let dz0 = &dz_dec + &dzt.mapv(|v| a * v);
    let dlogvar: Array1<f64> = dz0
        .iter()
        .zip(logvar.iter())
        .zip(eps_z.iter())
        .map(|((g, lv), e)| g * 0.5 * (0.5 * lv).exp() * e - 0.5)
        .collect();
    let mut enc_grad = vec![0.0; model.encoder.params().len()];
    model.encoder.backward(&enc_cache, dz0.view(), dlogvar.view(), &mut enc_grad);

    Ok(CloudOutcome {
        recon,
        latent,
        entropy,
        enc_grad,
        dec_grad,
        lat_grad,
    })
}

/// Training state: model, one Adam per parameter group, and the seeded stream.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: GenerativeModel,
    pub config: TrainConfig,
    opt_encoder: Adam,
    opt_decoder: Adam,
    opt_latent: Adam,
    rng: Stream,
    epoch: usize,
    step: usize,
}

impl Trainer {
    pub fn new(model: GenerativeModel, config: TrainConfig) -> Result<Self> {
        Self::resume(model, config, 0)
    }

    /// Continues at `start_epoch` (learning-rate schedule and stream offset
    /// follow the epoch index); optimizer moments start from zero.
    pub fn resume(model: GenerativeModel, config: TrainConfig, start_epoch: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            opt_encoder: Adam::new(model.encoder.params().len()),
            opt_decoder: Adam::new(model.decoder.params().len()),
            opt_latent: Adam::new(model.latent.params().len()),
            rng: rng::substream(config.seed, start_epoch as u64),
            model,
            config,
            epoch: start_epoch,
            step: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One update on `batch` at learning-rate multiplier `lr_factor`.
    /// Returns the batch-mean losses (with `epoch` set to the current epoch).
    pub fn train_step(&mut self, batch: &[&PointCloud], lr_factor: f64) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty training batch".into()));
        }
        let floor = self.config.time_floor;
        let nb = batch.len();
        // one t per cloud, stratified across the batch
        let sched = self.model.schedule;
        let sampling = self.config.time_sampling;
        let jobs: Vec<(f64, f64, u64)> = (0..nb)
            .map(|j| {
                let u: f64 = self.rng.random();
                let (t, w) = training_time(&sched, sampling, floor, (j as f64 + u) / nb as f64);
                (t, w, self.rng.random())
            })
            .collect();
        let model = &self.model;
        let mode = self.config.entropy_mode;
        let outcomes: Vec<Result<CloudOutcome>> = batch
            .par_iter()
            .zip(jobs.par_iter())
            .map(|(cloud, &(t, w, seed))| {
                let mut r = rng::seeded(seed);
                cloud_gradients(model, cloud.view(), t, w, mode, &mut r)
            })
            .collect();

        let mut enc = vec![0.0; model.encoder.params().len()];
        let mut dec = vec![0.0; model.decoder.params().len()];
        let mut lat = vec![0.0; model.latent.params().len()];
        let (mut recon, mut latent, mut entropy) = (0.0, 0.0, 0.0);
        let scale = 1.0 / nb as f64;
        for outcome in outcomes {
            let o = outcome?;
            recon += o.recon * scale;
            latent += o.latent * scale;
            entropy += o.entropy * scale;
            for (acc, g) in [(&mut enc, &o.enc_grad), (&mut dec, &o.dec_grad), (&mut lat, &o.lat_grad)] {
                acc.iter_mut().zip(g.iter()).for_each(|(a, g)| *a += g * scale);
            }
        }
        let total = recon + latent - entropy;
        self.step += 1;
        if !total.is_finite() {
            return Err(Error::NonFinite {
                step: self.step,
                what: format!("loss (recon {recon}, latent {latent}, entropy {entropy}) in epoch {}", self.epoch),
            });
        }
        if let Some(bad) = enc.iter().chain(&dec).chain(&lat).find(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                step: self.step,
                what: format!("gradient component {bad} in epoch {}", self.epoch),
            });
        }

        let c = &self.config;
        self.opt_encoder.step(self.model.encoder.params_mut(), &enc, c.lr_encoder * lr_factor);
        self.opt_decoder.step(self.model.decoder.params_mut(), &dec, c.lr_decoder * lr_factor);
        self.opt_latent.step(self.model.latent.params_mut(), &lat, c.lr_latent * lr_factor);
        Ok(LossReport {
            epoch: self.epoch,
            recon,
            latent,
            entropy,
            total,
        })
    }

    /// One pass over a seeded shuffle of `dataset`.
    pub fn run_epoch(&mut self, dataset: &[PointCloud]) -> Result<LossReport> {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut self.rng);
        let factor = self.config.lr_factor(self.epoch);
        let mut sums = [0.0; 4];
        let mut seen = 0usize;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&PointCloud> = chunk.iter().map(|&i| &dataset[i]).collect();
            let r = self.train_step(&batch, factor)?;
            let w = batch.len() as f64;
            sums[0] += r.recon * w;
            sums[1] += r.latent * w;
            sums[2] += r.entropy * w;
            sums[3] += r.total * w;
            seen += batch.len();
        }
        let n = seen as f64;
        let report = LossReport {
            epoch: self.epoch,
            recon: sums[0] / n,
            latent: sums[1] / n,
            entropy: sums[2] / n,
            total: sums[3] / n,
        };
        self.epoch += 1;
        Ok(report)
    }
}

pub fn validate_dataset(dataset: &[PointCloud]) -> Result<usize> {
    if dataset.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "training needs at least 2 clouds, got {}",
            dataset.len()
        )));
    }
    let n = dataset[0].len();
    if let Some((i, c)) = dataset.iter().enumerate().find(|(_, c)| c.len() != n) {
        return Err(Error::InvalidInput(format!(
            "cloud {i} has {} points, expected {n}",
            c.len()
        )));
    }
    Ok(n)
}

/// Runs `config.epochs` epochs from a fresh optimizer state, starting at
/// epoch index `start_epoch`. Returns the trained model and the loss curve.
pub fn train(
    dataset: &[PointCloud],
    model: GenerativeModel,
    config: &TrainConfig,
    start_epoch: usize,
) -> Result<(GenerativeModel, Vec<LossReport>)> {
    validate_dataset(dataset)?;
    let mut trainer = Trainer::resume(model, config.clone(), start_epoch)?;
    let mut curve = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        curve.push(trainer.run_epoch(dataset)?);
    }
    Ok((trainer.model, curve))
}

pub fn write_loss_csv(path: &Path, curve: &[LossReport], append: bool) -> Result<()> {
    let exists = path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if !(append && exists) {
        w.write_record(["epoch", "recon", "latent", "entropy", "total"])?;
    }
    for r in curve {
        w.write_record(&[
            r.epoch.to_string(),
            r.recon.to_string(),
            r.latent.to_string(),
            r.entropy.to_string(),
            r.total.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossReport>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
