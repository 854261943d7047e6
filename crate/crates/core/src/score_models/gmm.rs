use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::ScoreField;
use crate::sde::VpSchedule;
use crate::{Error, Result};

/// Closed-form score of an isotropic Gaussian mixture pushed through the
/// VP perturbation kernel.
///
/// If `p_0 = Σ_k w_k N(μ_k, σ0²I)` then
/// `p_t = Σ_k w_k N(a_t μ_k, (a_t²σ0² + b_t²)I)`, so its score is exact at
/// every `t`. The latent code is ignored.
#[derive(Debug, Clone)]
pub struct GaussianMixtureScore {
    means: Array2<f64>,
    sigma0: f64,
    log_weights: Array1<f64>,
    schedule: VpSchedule,
}

impl GaussianMixtureScore {
    /// `means` is `K×D`; `weights` must be positive and sum to 1.
    pub fn new(means: Array2<f64>, sigma0: f64, weights: Vec<f64>, schedule: VpSchedule) -> Result<Self> {
        if means.nrows() == 0 || means.nrows() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} means but {} weights",
                means.nrows(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| w.is_nan() || *w <= 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("weights must be positive and sum to 1".into()));
        }
        if !(sigma0 >= 0.0 && sigma0.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma0 = {sigma0}")));
        }
        Ok(Self {
            means,
            sigma0,
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            schedule,
        })
    }

    /// Single Gaussian `N(mean, σ0²I)`.
    pub fn gaussian(mean: &[f64], sigma0: f64, schedule: VpSchedule) -> Result<Self> {
        let means = Array2::from_shape_vec((1, mean.len()), mean.to_vec())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Self::new(means, sigma0, vec![1.0], schedule)
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn means(&self) -> ArrayView2<'_, f64> {
        self.means.view()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    fn marginal(&self, t: f64) -> Result<(f64, f64)> {
        let (a, b) = self.schedule.coefficients(t)?;
        Ok((a, a * a * self.sigma0 * self.sigma0 + b * b))
    }

    fn check(&self, xt: &ArrayView2<f64>) -> Result<()> {
        if xt.ncols() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "mixture lives in {} dimensions, input has {}",
                self.dim(),
                xt.ncols()
            )));
        }
        Ok(())
    }

    /// Posterior component responsibilities for one point.
    fn responsibilities(&self, x: ArrayView1<f64>, a: f64, var: f64) -> Vec<f64> {
        let logits: Vec<f64> = self
            .means
            .rows()
            .into_iter()
            .zip(self.log_weights.iter())
            .map(|(mu, lw)| {
                let d2: f64 = x.iter().zip(mu.iter()).map(|(xi, mi)| (xi - a * mi).powi(2)).sum();
                lw - 0.5 * d2 / var
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    /// `log p_t(x)` for each row, with log-sum-exp stabilisation.
    pub fn log_density(&self, xt: ArrayView2<f64>, t: f64) -> Result<Array1<f64>> {
        self.check(&xt)?;
        let (a, var) = self.marginal(t)?;
        let d = self.dim() as f64;
        let norm = -0.5 * d * (2.0 * std::f64::consts::PI * var).ln();
        Ok(xt
            .rows()
            .into_iter()
            .map(|x| {
                let logits: Vec<f64> = self
                    .means
                    .rows()
                    .into_iter()
                    .zip(self.log_weights.iter())
                    .map(|(mu, lw)| {
                        let d2: f64 = x.iter().zip(mu.iter()).map(|(xi, mi)| (xi - a * mi).powi(2)).sum();
                        lw - 0.5 * d2 / var
                    })
                    .collect();
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + norm
            })
            .collect())
    }

    /// `E[x_0 | x_t]` computed from the component posteriors directly
    /// (independent of Tweedie's formula).
    pub fn posterior_mean(&self, xt: ArrayView2<f64>, t: f64) -> Result<Array2<f64>> {
        self.check(&xt)?;
        let (a, b) = self.schedule.coefficients(t)?;
        let s2 = self.sigma0 * self.sigma0;
        let var = a * a * s2 + b * b;
        let mut out = Array2::zeros(xt.raw_dim());
        for (i, x) in xt.rows().into_iter().enumerate() {
            let r = self.responsibilities(x, a, var);
            for (k, mu) in self.means.rows().into_iter().enumerate() {
                for j in 0..self.dim() {
                    // Gaussian conjugate update of component k
                    let m = (b * b * mu[j] + a * s2 * x[j]) / var;
                    out[[i, j]] += r[k] * m;
                }
            }
        }
        Ok(out)
    }
}

impl ScoreField for GaussianMixtureScore {
    fn score(&self, xt: ArrayView2<f64>, _z: Option<ArrayView1<f64>>, t: f64) -> Result<Array2<f64>> {
        self.check(&xt)?;
        let (a, var) = self.marginal(t)?;
        let mut out = Array2::zeros(xt.raw_dim());
        for (i, x) in xt.rows().into_iter().enumerate() {
            let r = self.responsibilities(x, a, var);
            for (k, mu) in self.means.rows().into_iter().enumerate() {
                for j in 0..self.dim() {
                    out[[i, j]] -= r[k] * (x[j] - a * mu[j]) / var;
                }
            }
        }
        Ok(out)
    }

    /// Uses the per-point Hessian `Σ_k r_k m_k m_kᵀ − s sᵀ − I/v`, which is
    /// symmetric, so the VJP equals the JVP.
    fn input_vjp(
        &self,
        xt: ArrayView2<f64>,
        _z: Option<ArrayView1<f64>>,
        t: f64,
        cotangent: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        self.check(&xt)?;
        if cotangent.shape() != xt.shape() {
            return Err(Error::InvalidInput("cotangent shape differs from input".into()));
        }
        let (a, var) = self.marginal(t)?;
        let d = self.dim();
        let mut out = Array2::zeros(xt.raw_dim());
        for (i, x) in xt.rows().into_iter().enumerate() {
            let c = cotangent.row(i);
            let r = self.responsibilities(x, a, var);
            let comps: Vec<Vec<f64>> = self
                .means
                .rows()
                .into_iter()
                .map(|mu| (0..d).map(|j| -(x[j] - a * mu[j]) / var).collect())
                .collect();
            let s: Vec<f64> = (0..d)
                .map(|j| comps.iter().zip(&r).map(|(m, rk)| rk * m[j]).sum())
                .collect();
            let s_dot_c: f64 = (0..d).map(|j| s[j] * c[j]).sum();
            for j in 0..d {
                let mut acc = -c[j] / var - s[j] * s_dot_c;
                for (m, rk) in comps.iter().zip(&r) {
                    let m_dot_c: f64 = (0..d).map(|l| m[l] * c[l]).sum();
                    acc += rk * m[j] * m_dot_c;
                }
                out[[i, j]] = acc;
            }
        }
        Ok(out)
    }
}
