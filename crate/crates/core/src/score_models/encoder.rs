use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::ModelConfig;
use crate::nn::{accumulate_weight, affine, init_uniform, outer_add, silu, silu_grad, Layout, Slot};
use crate::{Error, Result};

pub const LOGVAR_MIN: f64 = -20.0;
pub const LOGVAR_MAX: f64 = 0.0;

/// Permutation-invariant encoder for `q_φ(z | X)`.
///
/// A shared three-layer point MLP (`3 → H → H → F`) followed by a max-pool
/// over points and two linear heads for the mean and log-variance. The
/// log-variance is clamped to `[LOGVAR_MIN, LOGVAR_MAX]`.
#[derive(Debug, Clone)]
pub struct PointEncoder {
    w1: Slot,
    b1: Slot,
    w2: Slot,
    b2: Slot,
    w3: Slot,
    b3: Slot,
    wm: Slot,
    bm: Slot,
    wl: Slot,
    bl: Slot,
    n_params: usize,
    latent_dim: usize,
    params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    x: Array2<f64>,
    a1: Array2<f64>,
    a2: Array2<f64>,
    pooled: Array1<f64>,
    argmax: Vec<usize>,
    raw_logvar: Array1<f64>,
}

impl PointEncoder {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let (h, f, d) = (config.encoder_hidden, config.encoder_features, config.latent_dim);
        let mut layout = Layout::default();
        let w1 = layout.matrix(h, 3);
        let b1 = layout.vector(h);
        let w2 = layout.matrix(h, h);
        let b2 = layout.vector(h);
        let w3 = layout.matrix(f, h);
        let b3 = layout.vector(f);
        let wm = layout.matrix(d, f);
        let bm = layout.vector(d);
        let wl = layout.matrix(d, f);
        let bl = layout.vector(d);
        let mut params = vec![0.0; layout.total()];
        init_uniform(&mut params, w1, 3, rng);
        init_uniform(&mut params, w2, h, rng);
        init_uniform(&mut params, w3, h, rng);
        init_uniform(&mut params, wm, f, rng);
        init_uniform(&mut params, wl, f, rng);
        Self {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            wm,
            bm,
            wl,
            bl,
            n_params: layout.total(),
            latent_dim: d,
            params,
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
        if params.len() != self.n_params {
            return Err(Error::Checkpoint(format!(
                "encoder expects {} parameters, got {}",
                self.n_params,
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    /// Posterior `(mean, logvar)` of the latent code.
    pub fn encode(&self, cloud: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let (m, l, _) = self.forward(cloud)?;
        Ok((m, l))
    }

    pub fn forward(&self, cloud: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>, EncoderCache)> {
        if cloud.nrows() == 0 || cloud.ncols() != 3 {
            return Err(Error::InvalidInput(format!(
                "encoder needs a non-empty N×3 cloud, got {:?}",
                cloud.shape()
            )));
        }
        let p = &self.params;
        let a1 = affine(cloud, self.w1.mat(p), self.b1.vec(p));
        let a2 = affine(a1.mapv(silu).view(), self.w2.mat(p), self.b2.vec(p));
        let feats = affine(a2.mapv(silu).view(), self.w3.mat(p), self.b3.vec(p));

        let f = feats.ncols();
        let mut pooled = Array1::from_elem(f, f64::NEG_INFINITY);
        let mut argmax = vec![0usize; f];
        for (i, row) in feats.rows().into_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v > pooled[j] {
                    pooled[j] = *v;
                    argmax[j] = i;
                }
            }
        }
        let mean = &self.wm.mat(p).dot(&pooled) + &self.bm.vec(p);
        let raw_logvar = &self.wl.mat(p).dot(&pooled) + &self.bl.vec(p);
        let logvar = raw_logvar.mapv(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX));
        let cache = EncoderCache {
            x: cloud.to_owned(),
            a1,
            a2,
            pooled,
            argmax,
            raw_logvar,
        };
        Ok((mean, logvar, cache))
    }

    /// Accumulates parameter gradients of `⟨dmean, μ⟩ + ⟨dlogvar, logvar⟩`.
    pub fn backward(&self, cache: &EncoderCache, dmean: ArrayView1<f64>, dlogvar: ArrayView1<f64>, grad: &mut [f64]) {
        let p = &self.params;
        let dlogvar_raw: Array1<f64> = dlogvar
            .iter()
            .zip(cache.raw_logvar.iter())
            .map(|(g, r)| if *r > LOGVAR_MIN && *r < LOGVAR_MAX { *g } else { 0.0 })
            .collect();

        outer_add(&mut self.wm.mat_mut(grad), dmean, cache.pooled.view());
        self.bm.vec_mut(grad).scaled_add(1.0, &dmean);
        outer_add(&mut self.wl.mat_mut(grad), dlogvar_raw.view(), cache.pooled.view());
        self.bl.vec_mut(grad).scaled_add(1.0, &dlogvar_raw);
        let dpooled = self.wm.mat(p).t().dot(&dmean) + self.wl.mat(p).t().dot(&dlogvar_raw);

        let n = cache.x.nrows();
        let mut dfeats = Array2::zeros((n, dpooled.len()));
        for (j, &i) in cache.argmax.iter().enumerate() {
            dfeats[[i, j]] = dpooled[j];
        }
        accumulate_weight(dfeats.view(), cache.a2.mapv(silu).view(), &mut self.w3.mat_mut(grad));
        self.b3.vec_mut(grad).scaled_add(1.0, &dfeats.sum_axis(Axis(0)));
        let mut da2 = dfeats.dot(&self.w3.mat(p));
        da2.zip_mut_with(&cache.a2, |d, a| *d *= silu_grad(*a));
        accumulate_weight(da2.view(), cache.a1.mapv(silu).view(), &mut self.w2.mat_mut(grad));
        self.b2.vec_mut(grad).scaled_add(1.0, &da2.sum_axis(Axis(0)));
        let mut da1 = da2.dot(&self.w2.mat(p));
        da1.zip_mut_with(&cache.a1, |d, a| *d *= silu_grad(*a));
        accumulate_weight(da1.view(), cache.x.view(), &mut self.w1.mat_mut(grad));
        self.b1.vec_mut(grad).scaled_add(1.0, &da1.sum_axis(Axis(0)));
    }
}

/// `z = mean + exp(½·logvar)·noise`, with `logvar` clamped first.
pub fn reparameterize(mean: ArrayView1<f64>, logvar: ArrayView1<f64>, noise: ArrayView1<f64>) -> Array1<f64> {
    mean.iter()
        .zip(logvar.iter())
        .zip(noise.iter())
        .map(|((m, lv), e)| m + (0.5 * lv.clamp(LOGVAR_MIN, LOGVAR_MAX)).exp() * e)
        .collect()
}
