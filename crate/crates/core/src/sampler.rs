//! Reverse-time generation: Tweedie denoising, Euler–Maruyama reverse steps
//! and the smoothness-constrained step.
//!
//! The constrained update subtracts `α·∇_{X_t} trace(X̂ᵀ L X̂)` from the
//! ordinary reverse step, where `X̂` is the Tweedie estimate of the clean
//! cloud and `L` the Laplacian of a KNN graph rebuilt on `X̂`.

use ndarray::{Array, Array1, Array2, ArrayView, ArrayView1, ArrayView2, Dimension, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{build_knn_graph, build_laplacian, LaplacianMatrix, PointCloud};
use crate::rng::{self, Stream};
use crate::score_models::{GenerativeModel, LatentField, ScoreField};
use crate::sde::{VpSchedule, EPS_T};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintMode {
    #[serde(rename = "off")]
    Off,
    /// Score treated as constant in `X_t`.
    #[serde(rename = "frozen")]
    FrozenScore,
    /// Differentiates through the score network as well.
    #[serde(rename = "exact")]
    ExactChain,
}

impl std::str::FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Self::Off),
            "frozen" | "frozen_score" => Ok(Self::FrozenScore),
            "exact" | "exact_chain" => Ok(Self::ExactChain),
            other => Err(Error::InvalidParameter(format!(
                "unknown constraint mode '{other}' (expected off, frozen or exact)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_steps: usize,
    /// Constraint weight, applied once per reverse step.
    pub alpha: f64,
    pub knn_k: usize,
    pub graph_refresh_stride: usize,
    pub mode: ConstraintMode,
    pub seed: u64,
    pub eps_t: f64,
    /// The constraint is applied only while `t ≤ t_constraint`.
    pub t_constraint: f64,
    /// Replace the last state by its Tweedie estimate.
    pub terminal_denoise: bool,
    pub record_trajectory: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_steps: 200,
            alpha: 1e-4,
            knn_k: 30,
            graph_refresh_stride: 1,
            mode: ConstraintMode::FrozenScore,
            seed: 0,
            eps_t: EPS_T,
            t_constraint: 0.1,
            terminal_denoise: false,
            record_trajectory: false,
        }
    }
}

impl SamplerConfig {
    /// The same configuration with the constraint switched off.
    pub fn unconstrained(&self) -> Self {
        Self {
            alpha: 0.0,
            mode: ConstraintMode::Off,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha = {} must be finite and >= 0", self.alpha)));
        }
        if self.knn_k == 0 {
            return Err(Error::InvalidParameter("knn_k must be at least 1".into()));
        }
        if self.graph_refresh_stride == 0 {
            return Err(Error::InvalidParameter("graph_refresh_stride must be at least 1".into()));
        }
        if !(self.eps_t > 0.0 && self.eps_t < 1.0) {
            return Err(Error::InvalidParameter(format!("eps_t = {}", self.eps_t)));
        }
        if self.alpha > 0.0 && self.mode == ConstraintMode::Off {
            return Err(Error::InvalidParameter(format!(
                "alpha = {} conflicts with constraint mode off",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn constraint_enabled(&self) -> bool {
        self.alpha > 0.0 && self.mode != ConstraintMode::Off
    }

    pub fn dt(&self) -> f64 {
        (1.0 - self.eps_t) / self.n_steps as f64
    }

    /// Time at the start of step `i`; step `n_steps − 1` ends at `eps_t`.
    pub fn time(&self, i: usize) -> f64 {
        1.0 - i as f64 * self.dt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub t: f64,
    /// `S(X̂_t)` on a KNN graph of `X̂_t`.
    pub smoothness: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    /// `X_t` at the start of each recorded step.
    pub states: Vec<Array2<f64>>,
}

impl Trajectory {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.steps {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Posterior-mean estimate `(x_t + b_t²·score)/a_t`.
pub fn tweedie_denoise<D: Dimension>(
    schedule: &VpSchedule,
    xt: ArrayView<f64, D>,
    score: ArrayView<f64, D>,
    t: f64,
) -> Result<Array<f64, D>> {
    if xt.shape() != score.shape() {
        return Err(Error::InvalidInput("score shape differs from state".into()));
    }
    let (a, b) = schedule.coefficients(t)?;
    let b2 = b * b;
    Ok(Zip::from(&xt).and(&score).map_collect(|x, s| (x + b2 * s) / a))
}

/// `x − [f(x,t) − g(t)²·score]·dt + g(t)·√dt·noise`.
pub fn reverse_update<D: Dimension>(
    schedule: &VpSchedule,
    xt: ArrayView<f64, D>,
    score: ArrayView<f64, D>,
    t: f64,
    dt: f64,
    noise: ArrayView<f64, D>,
) -> Result<Array<f64, D>> {
    if xt.shape() != score.shape() || xt.shape() != noise.shape() {
        return Err(Error::InvalidInput("state, score and noise shapes differ".into()));
    }
    schedule.drift_coef(t)?;
    let beta = schedule.beta(t);
    let sigma = (beta * dt).sqrt();
    Ok(Zip::from(&xt)
        .and(&score)
        .and(&noise)
        .map_collect(|&x, &s, &e| x - (-0.5 * beta * x - beta * s) * dt + sigma * e))
}

/// One unconstrained reverse step of a point set.
pub fn reverse_step<F: ScoreField + ?Sized>(
    field: &F,
    schedule: &VpSchedule,
    xt: ArrayView2<f64>,
    z: Option<ArrayView1<f64>>,
    t: f64,
    dt: f64,
    noise: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    let s = field.score(xt, z, t)?;
    reverse_update(schedule, xt, s.view(), t, dt, noise)
}

/// `∇_{X_t} trace(X̂ᵀ L X̂)` with `X̂` the Tweedie estimate; `score` must be
/// the field evaluated at `(xt, z, t)`.
#[allow(clippy::too_many_arguments)]
pub fn constraint_gradient_with_score<F: ScoreField + ?Sized>(
    field: &F,
    schedule: &VpSchedule,
    xt: ArrayView2<f64>,
    score: ArrayView2<f64>,
    z: Option<ArrayView1<f64>>,
    t: f64,
    laplacian: &LaplacianMatrix,
    mode: ConstraintMode,
) -> Result<Array2<f64>> {
    if mode == ConstraintMode::Off {
        return Ok(Array2::zeros(xt.raw_dim()));
    }
    let (a, b) = schedule.coefficients(t)?;
    let xhat = tweedie_denoise(schedule, xt, score, t)?;
    let c = laplacian.apply(xhat.view())?.mapv(|v| 2.0 * v);
    let mut grad = c.mapv(|v| v / a);
    if mode == ConstraintMode::ExactChain {
        let vjp = field.input_vjp(xt, z, t, c.view())?;
        let w = b * b / a;
        grad.zip_mut_with(&vjp, |g, v| *g += w * v);
    }
    Ok(grad)
}

pub fn constraint_gradient<F: ScoreField + ?Sized>(
    field: &F,
    schedule: &VpSchedule,
    xt: ArrayView2<f64>,
    z: Option<ArrayView1<f64>>,
    t: f64,
    laplacian: &LaplacianMatrix,
    mode: ConstraintMode,
) -> Result<Array2<f64>> {
    let s = field.score(xt, z, t)?;
    constraint_gradient_with_score(field, schedule, xt, s.view(), z, t, laplacian, mode)
}

/// Reverse step minus `α·constraint_gradient` on the given Laplacian.
/// With `α = 0`, mode off, or `t > t_constraint` this is exactly `reverse_step`.
#[allow(clippy::too_many_arguments)]
pub fn constrained_reverse_step<F: ScoreField + ?Sized>(
    field: &F,
    schedule: &VpSchedule,
    xt: ArrayView2<f64>,
    z: Option<ArrayView1<f64>>,
    t: f64,
    dt: f64,
    config: &SamplerConfig,
    laplacian: &LaplacianMatrix,
    noise: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    let s = field.score(xt, z, t)?;
    let mut next = reverse_update(schedule, xt, s.view(), t, dt, noise)?;
    if config.constraint_enabled() && t <= config.t_constraint {
        let g = constraint_gradient_with_score(field, schedule, xt, s.view(), z, t, laplacian, config.mode)?;
        next.scaled_add(-config.alpha, &g);
    }
    Ok(next)
}

fn ensure_finite<D: Dimension>(x: &Array<f64, D>, step: usize, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            step,
            what: what.to_string(),
        })
    }
}

/// Reverse diffusion of a latent code from `z₁ ∼ N(0, I)`.
pub fn sample_latent<F: LatentField + ?Sized>(
    field: &F,
    schedule: &VpSchedule,
    latent_dim: usize,
    config: &SamplerConfig,
    rng: &mut Stream,
) -> Result<Array1<f64>> {
    config.validate()?;
    let dt = config.dt();
    let mut z = rng::normal_vector(rng, latent_dim);
    for i in 0..config.n_steps {
        let t = config.time(i);
        let s = field.latent_score(z.view(), t)?;
        let noise = rng::normal_vector(rng, latent_dim);
        z = reverse_update(schedule, z.view(), s.view(), t, dt, noise.view())?;
        ensure_finite(&z, i, "latent state")?;
    }
    Ok(z)
}

fn laplacian_of(points: &Array2<f64>, k: usize) -> Result<LaplacianMatrix> {
    let cloud = PointCloud::new(points.clone())?;
    Ok(build_laplacian(&build_knn_graph(&cloud, k)?))
}

/// Reverse diffusion of one `n_points` cloud from `X₁ ∼ N(0, I)` under
/// `field`, conditioned on `z` if given.
pub fn sample_cloud<F: ScoreField + ?Sized>(
    field: &F,
    schedule: &VpSchedule,
    z: Option<ArrayView1<f64>>,
    n_points: usize,
    config: &SamplerConfig,
    rng: &mut Stream,
) -> Result<(PointCloud, Option<Trajectory>)> {
    config.validate()?;
    if n_points == 0 {
        return Err(Error::InvalidParameter("n_points must be at least 1".into()));
    }
    let constrained = config.constraint_enabled();
    if (constrained || config.record_trajectory) && n_points <= config.knn_k {
        return Err(Error::InvalidParameter(format!(
            "knn_k = {} needs more than {} points",
            config.knn_k, n_points
        )));
    }
    let dt = config.dt();
    let mut x = rng::normal_matrix(rng, n_points, 3);
    let mut trajectory = config.record_trajectory.then(Trajectory::default);
    let mut laplacian: Option<LaplacianMatrix> = None;
    let mut since_refresh = 0usize;

    for i in 0..config.n_steps {
        let t = config.time(i);
        let s = field.score(x.view(), z, t)?;
        let active = constrained && t <= config.t_constraint;
        let needs_xhat = active || trajectory.is_some();
        let xhat = if needs_xhat {
            Some(tweedie_denoise(schedule, x.view(), s.view(), t)?)
        } else {
            None
        };
        if active && (laplacian.is_none() || since_refresh >= config.graph_refresh_stride) {
            laplacian = Some(laplacian_of(xhat.as_ref().unwrap(), config.knn_k)?);
            since_refresh = 0;
        }
        if let Some(tr) = trajectory.as_mut() {
            let xh = xhat.as_ref().unwrap();
            let smooth = match (&laplacian, active) {
                (Some(l), true) => l.quadratic_form(xh.view())?,
                _ => laplacian_of(xh, config.knn_k)?.quadratic_form(xh.view())?,
            };
            tr.steps.push(TrajectoryStep { step: i, t, smoothness: smooth });
            tr.states.push(x.clone());
        }

        let noise = rng::normal_matrix(rng, n_points, 3);
        let mut next = reverse_update(schedule, x.view(), s.view(), t, dt, noise.view())?;
        if active {
            let g = constraint_gradient_with_score(
                field,
                schedule,
                x.view(),
                s.view(),
                z,
                t,
                laplacian.as_ref().unwrap(),
                config.mode,
            )?;
            next.scaled_add(-config.alpha, &g);
            since_refresh += 1;
        }
        ensure_finite(&next, i, "point state")?;
        x = next;
    }
    if config.terminal_denoise {
        let s = field.score(x.view(), z, config.eps_t)?;
        x = tweedie_denoise(schedule, x.view(), s.view(), config.eps_t)?;
        ensure_finite(&x, config.n_steps, "terminal denoise")?;
    }
    Ok((PointCloud::new(x)?, trajectory))
}

/// `n_clouds` independent samples from an unconditional field; cloud `i`
/// uses substream `i` of `config.seed`.
pub fn generate_from_field<F: ScoreField + ?Sized>(
    field: &F,
    schedule: &VpSchedule,
    config: &SamplerConfig,
    n_clouds: usize,
    n_points: usize,
) -> Result<Vec<(PointCloud, Option<Trajectory>)>> {
    (0..n_clouds)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(config.seed, i as u64);
            sample_cloud(field, schedule, None, n_points, config, &mut r)
        })
        .collect()
}

/// Full generation: latent prior sample, then conditional point diffusion.
pub fn generate(
    model: &GenerativeModel,
    config: &SamplerConfig,
    n_clouds: usize,
    n_points: usize,
) -> Result<Vec<(PointCloud, Option<Trajectory>)>> {
    let d = model.config.latent_dim;
    if model.latent.latent_dim() != d || model.decoder.latent_dim() != d {
        return Err(Error::InvalidInput(format!(
            "latent dimension mismatch: config {d}, prior {}, decoder {}",
            model.latent.latent_dim(),
            model.decoder.latent_dim()
        )));
    }
    (0..n_clouds)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(config.seed, i as u64);
            let z = sample_latent(&model.latent, &model.schedule, d, config, &mut r)?;
            sample_cloud(&model.decoder, &model.schedule, Some(z.view()), n_points, config, &mut r)
        })
        .collect()
}
