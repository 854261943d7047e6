//! Sensitivity of constrained sampling to the constraint graph's K.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::PointCloud;
use crate::metrics::mean_smoothness;
use crate::sampler::{generate, SamplerConfig};
use crate::score_models::GenerativeModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub mean_smoothness: f64,
    pub rs: f64,
    pub baseline_smoothness: f64,
}

fn clouds(model: &GenerativeModel, config: &SamplerConfig, n: usize, points: usize) -> Result<Vec<PointCloud>> {
    Ok(generate(model, config, n, points)?.into_iter().map(|(c, _)| c).collect())
}

/// For each `k`, samples `n_clouds` clouds with the constraint graph built at
/// that `k` (all other settings, including the seed, from `base`). Smoothness
/// is always measured at `metric_k`, so every row is comparable with the one
/// unconstrained baseline. RS is taken against `reference`.
pub fn sweep_k(
    model: &GenerativeModel,
    base: &SamplerConfig,
    ks: &[usize],
    n_clouds: usize,
    n_points: usize,
    metric_k: usize,
    reference: &[PointCloud],
) -> Result<Vec<SweepRow>> {
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k >= n_points) {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must lie in [1, {}] for {n_points}-point clouds",
            n_points - 1
        )));
    }
    if !base.constraint_enabled() {
        return Err(Error::InvalidParameter("sweep needs alpha > 0 and an active constraint mode".into()));
    }
    let s_ref = mean_smoothness(reference, metric_k)?;
    let baseline = mean_smoothness(&clouds(model, &base.unconstrained(), n_clouds, n_points)?, metric_k)?;
    ks.iter()
        .map(|&k| {
            let config = SamplerConfig {
                knn_k: k,
                ..base.clone()
            };
            let s = mean_smoothness(&clouds(model, &config, n_clouds, n_points)?, metric_k)?;
            Ok(SweepRow {
                k,
                mean_smoothness: s,
                rs: (s - s_ref).abs(),
                baseline_smoothness: baseline,
            })
        })
        .collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
