//! Variance-preserving SDE with a linear noise rate
//! `β(t) = β_min + t·(β_max − β_min)` on `t ∈ [0, 1]`.
//!
//! Forward marginal: `x_t = a_t·x_0 + b_t·ε` with
//! `a_t = exp(−½∫₀ᵗβ)` and `b_t = √(1 − a_t²)`.

use ndarray::{Array, ArrayView, Dimension};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Smallest time at which scores are evaluated; `b_t` vanishes at `t = 0`.
pub const EPS_T: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for VpSchedule {
    fn default() -> Self {
        Self {
            beta_min: 0.1,
            beta_max: 20.0,
        }
    }
}

impl VpSchedule {
    pub fn new(beta_min: f64, beta_max: f64) -> Result<Self> {
        if !(beta_min > 0.0 && beta_max >= beta_min && beta_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < beta_min <= beta_max, got {beta_min}, {beta_max}"
            )));
        }
        Ok(Self { beta_min, beta_max })
    }

    fn check_t(t: f64) -> Result<()> {
        if (0.0..=1.0).contains(&t) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("time {t} outside [0, 1]")))
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + t * (self.beta_max - self.beta_min)
    }

    /// `∫₀ᵗ β(s) ds`.
    pub fn beta_integral(&self, t: f64) -> f64 {
        self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t
    }

    /// Signal coefficient `a_t`.
    pub fn drift_coef(&self, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        Ok((-0.5 * self.beta_integral(t)).exp())
    }

    /// Noise level `b_t = √(1 − a_t²)`, computed without cancellation.
    pub fn diffusion_std(&self, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        Ok((-(-self.beta_integral(t)).exp_m1()).sqrt())
    }

    /// `(a_t, b_t)`.
    pub fn coefficients(&self, t: f64) -> Result<(f64, f64)> {
        Ok((self.drift_coef(t)?, self.diffusion_std(t)?))
    }

    /// Forward drift `f_t(x) = −½β(t)·x`.
    pub fn sde_drift<D: Dimension>(&self, x: ArrayView<f64, D>, t: f64) -> Array<f64, D> {
        let c = -0.5 * self.beta(t);
        x.mapv(|v| c * v)
    }

    /// Diffusion coefficient `g_t = √β(t)`.
    pub fn sde_diffusion(&self, t: f64) -> f64 {
        self.beta(t).sqrt()
    }

    /// `a_t·x0 + b_t·noise`.
    pub fn perturb<D: Dimension>(
        &self,
        x0: ArrayView<f64, D>,
        t: f64,
        noise: ArrayView<f64, D>,
    ) -> Result<Array<f64, D>> {
        if x0.shape() != noise.shape() {
            return Err(Error::InvalidInput(format!(
                "noise shape {:?} does not match data shape {:?}",
                noise.shape(),
                x0.shape()
            )));
        }
        let (a, b) = self.coefficients(t)?;
        let mut out = x0.to_owned();
        out.zip_mut_with(&noise, |x, n| *x = a * *x + b * n);
        Ok(out)
    }

    /// `∇ log p_t(x_t | x_0) = −(x_t − a_t·x_0)/b_t²`.
    pub fn conditional_score_target<D: Dimension>(
        &self,
        x0: ArrayView<f64, D>,
        xt: ArrayView<f64, D>,
        t: f64,
    ) -> Result<Array<f64, D>> {
        if x0.shape() != xt.shape() {
            return Err(Error::InvalidInput(format!(
                "shape mismatch {:?} vs {:?}",
                x0.shape(),
                xt.shape()
            )));
        }
        let (a, b) = self.coefficients(t)?;
        if b == 0.0 {
            return Err(Error::SingularTime(t));
        }
        let inv = 1.0 / (b * b);
        let mut out = xt.to_owned();
        out.zip_mut_with(&x0, |x, m| *x = -(*x - a * m) * inv);
        Ok(out)
    }
}
