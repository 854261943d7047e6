//! Set-level generation metrics over a squared-distance Chamfer base.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{knn_smoothness, PointCloud};
use crate::{Error, Result};

fn mean_nearest_sq(from: ArrayView2<f64>, to: ArrayView2<f64>) -> f64 {
    let mut total = 0.0;
    for p in from.rows() {
        let mut best = f64::INFINITY;
        for q in to.rows() {
            let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    total / from.nrows() as f64
}

/// Symmetric Chamfer distance with squared Euclidean point distances.
pub fn chamfer(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::InvalidInput("chamfer of an empty cloud".into()));
    }
    Ok(mean_nearest_sq(p.view(), q.view()) + mean_nearest_sq(q.view(), p.view()))
}

/// `D[i, j] = chamfer(rows[i], cols[j])`, computed in parallel.
pub fn chamfer_matrix(rows: &[PointCloud], cols: &[PointCloud]) -> Result<Array2<f64>> {
    let values: Vec<f64> = rows
        .par_iter()
        .flat_map_iter(|p| cols.iter().map(move |q| (p, q)))
        .map(|(p, q)| chamfer(p, q))
        .collect::<Result<_>>()?;
    Ok(Array2::from_shape_vec((rows.len(), cols.len()), values).expect("shape matches"))
}

fn require_nonempty(reference: &[PointCloud], generated: &[PointCloud]) -> Result<()> {
    if reference.is_empty() || generated.is_empty() {
        return Err(Error::InvalidInput(format!(
            "metric needs nonempty sets (reference {}, generated {})",
            reference.len(),
            generated.len()
        )));
    }
    Ok(())
}

/// Index of the smallest entry; ties go to the lowest index.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// MMD from a reference × generated distance matrix.
pub fn mmd_from_matrix(d: ArrayView2<f64>) -> f64 {
    d.rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / d.nrows() as f64
}

/// Coverage from a reference × generated distance matrix.
pub fn cov_from_matrix(d: ArrayView2<f64>) -> f64 {
    let mut covered = vec![false; d.nrows()];
    for col in d.columns() {
        covered[argmin(col.iter().copied())] = true;
    }
    covered.iter().filter(|c| **c).count() as f64 / d.nrows() as f64
}

/// Leave-one-out 1-NN accuracy on the pooled set, reference first.
pub fn one_nna_from_matrices(rr: ArrayView2<f64>, rg: ArrayView2<f64>, gg: ArrayView2<f64>) -> f64 {
    let (nr, ng) = rg.dim();
    let n = nr + ng;
    let dist = |i: usize, j: usize| match (i < nr, j < nr) {
        (true, true) => rr[[i, j]],
        (true, false) => rg[[i, j - nr]],
        (false, true) => rg[[j, i - nr]],
        (false, false) => gg[[i - nr, j - nr]],
    };
    let correct = (0..n)
        .filter(|&i| {
            let mut best = (usize::MAX, f64::INFINITY);
            for j in (0..n).filter(|&j| j != i) {
                let d = dist(i, j);
                if d < best.1 {
                    best = (j, d);
                }
            }
            (best.0 < nr) == (i < nr)
        })
        .count();
    correct as f64 / n as f64
}

pub fn mmd(reference: &[PointCloud], generated: &[PointCloud]) -> Result<f64> {
    require_nonempty(reference, generated)?;
    Ok(mmd_from_matrix(chamfer_matrix(reference, generated)?.view()))
}

pub fn cov(reference: &[PointCloud], generated: &[PointCloud]) -> Result<f64> {
    require_nonempty(reference, generated)?;
    Ok(cov_from_matrix(chamfer_matrix(reference, generated)?.view()))
}

pub fn one_nna(reference: &[PointCloud], generated: &[PointCloud]) -> Result<f64> {
    if reference.len() + generated.len() < 2 {
        return Err(Error::InvalidInput("1-NNA needs at least two clouds in the pool".into()));
    }
    let rr = chamfer_matrix(reference, reference)?;
    let rg = chamfer_matrix(reference, generated)?;
    let gg = chamfer_matrix(generated, generated)?;
    Ok(one_nna_from_matrices(rr.view(), rg.view(), gg.view()))
}

/// Mean KNN-graph smoothness over a set.
pub fn mean_smoothness(set: &[PointCloud], k: usize) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidInput("smoothness of an empty set".into()));
    }
    let values: Vec<f64> = set.par_iter().map(|c| knn_smoothness(c, k)).collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / set.len() as f64)
}

/// Relative smoothness `|mean S(model) − mean S(data)|`.
pub fn rs(model_set: &[PointCloud], data_set: &[PointCloud], k: usize) -> Result<f64> {
    Ok((mean_smoothness(model_set, k)? - mean_smoothness(data_set, k)?).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mmd: f64,
    pub cov: f64,
    pub one_nna: f64,
    pub rs: f64,
    pub gt_smoothness: f64,
    pub model_smoothness: f64,
    pub n_reference: usize,
    pub n_generated: usize,
    pub knn_k: usize,
}

impl MetricReport {
    /// MMD in the customary ×10² display units.
    pub fn mmd_x100(&self) -> f64 {
        self.mmd * 100.0
    }

    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("mmd", self.mmd),
            ("mmd_x100", self.mmd_x100()),
            ("cov", self.cov),
            ("one_nna", self.one_nna),
            ("rs", self.rs),
            ("gt_smoothness", self.gt_smoothness),
            ("model_smoothness", self.model_smoothness),
        ]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["metric", "value"])?;
        for (name, v) in self.rows() {
            w.write_record([name.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// All metrics; the Chamfer matrices are shared between MMD, COV and 1-NNA.
pub fn evaluate(reference: &[PointCloud], generated: &[PointCloud], k: usize) -> Result<MetricReport> {
    require_nonempty(reference, generated)?;
    let rr = chamfer_matrix(reference, reference)?;
    let rg = chamfer_matrix(reference, generated)?;
    let gg = chamfer_matrix(generated, generated)?;
    let gt_smoothness = mean_smoothness(reference, k)?;
    let model_smoothness = mean_smoothness(generated, k)?;
    Ok(MetricReport {
        mmd: mmd_from_matrix(rg.view()),
        cov: cov_from_matrix(rg.view()),
        one_nna: one_nna_from_matrices(rr.view(), rg.view(), gg.view()),
        rs: (model_smoothness - gt_smoothness).abs(),
        gt_smoothness,
        model_smoothness,
        n_reference: reference.len(),
        n_generated: generated.len(),
        knn_k: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_shape, ShapeKind, ShapeSpec};
    use crate::rng;
    use proptest::prelude::*;

    fn random_set(seed: u64, count: usize, n: usize) -> Vec<PointCloud> {
        let mut r = rng::seeded(seed);
        (0..count).map(|_| PointCloud::new(rng::normal_matrix(&mut r, n, 3)).unwrap()).collect()
    }

    fn brute_chamfer(p: &PointCloud, q: &PointCloud) -> f64 {
        let mut ab = 0.0;
        for i in 0..p.len() {
            let mut m = f64::INFINITY;
            for j in 0..q.len() {
                let d: f64 = (0..3).map(|c| (p.points()[[i, c]] - q.points()[[j, c]]).powi(2)).sum();
                m = m.min(d);
            }
            ab += m;
        }
        let mut ba = 0.0;
        for j in 0..q.len() {
            let mut m = f64::INFINITY;
            for i in 0..p.len() {
                let d: f64 = (0..3).map(|c| (p.points()[[i, c]] - q.points()[[j, c]]).powi(2)).sum();
                m = m.min(d);
            }
            ba += m;
        }
        ab / p.len() as f64 + ba / q.len() as f64
    }

    #[test]
    fn chamfer_basics() {
        let p = PointCloud::from_rows(&[[0.0, 0.0, 0.0]]).unwrap();
        let q = PointCloud::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(chamfer(&p, &q).unwrap(), 2.0);
        assert_eq!(chamfer(&p, &p).unwrap(), 0.0);
        let s = random_set(1, 2, 20);
        assert!((chamfer(&s[0], &s[1]).unwrap() - brute_chamfer(&s[0], &s[1])).abs() < 1e-12);
    }

    #[test]
    fn unequal_sizes_are_fine() {
        let a = random_set(2, 1, 7);
        let b = random_set(3, 1, 19);
        assert!((chamfer(&a[0], &b[0]).unwrap() - brute_chamfer(&a[0], &b[0])).abs() < 1e-12);
    }

    #[test]
    fn identical_sets() {
        let s = random_set(4, 6, 10);
        assert_eq!(mmd(&s, &s).unwrap(), 0.0);
        assert_eq!(cov(&s, &s).unwrap(), 1.0);
        assert_eq!(rs(&s, &s, 3).unwrap(), 0.0);
        assert_eq!(one_nna(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn collapsed_generation_covers_one_reference() {
        let r = random_set(5, 5, 10);
        let g = vec![r[2].clone(); 4];
        assert_eq!(cov(&r, &g).unwrap(), 0.2);
        assert_eq!(mmd(&r[..1], &g[..1]).unwrap(), chamfer(&r[0], &g[0]).unwrap());
    }

    #[test]
    fn separable_sets_give_full_accuracy() {
        let r = random_set(6, 5, 10);
        let g: Vec<PointCloud> = random_set(7, 5, 10)
            .into_iter()
            .map(|c| PointCloud::new(c.points().mapv(|v| v + 50.0)).unwrap())
            .collect();
        assert_eq!(one_nna(&r, &g).unwrap(), 1.0);
    }

    #[test]
    fn set_metrics_match_brute_force() {
        let r = random_set(8, 6, 12);
        let g = random_set(9, 4, 9);
        let d: Vec<Vec<f64>> = r.iter().map(|p| g.iter().map(|q| brute_chamfer(p, q)).collect()).collect();
        let m: f64 = d.iter().map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min)).sum::<f64>() / 6.0;
        assert!((mmd(&r, &g).unwrap() - m).abs() < 1e-12);
        let mut hit = std::collections::BTreeSet::new();
        for j in 0..4 {
            let mut best = 0;
            for i in 1..6 {
                if d[i][j] < d[best][j] {
                    best = i;
                }
            }
            hit.insert(best);
        }
        assert_eq!(cov(&r, &g).unwrap(), hit.len() as f64 / 6.0);
    }

    #[test]
    fn rs_singletons_and_errors() {
        let a = random_set(10, 1, 12);
        let b = random_set(11, 1, 12);
        let expect = (knn_smoothness(&a[0], 4).unwrap() - knn_smoothness(&b[0], 4).unwrap()).abs();
        assert_eq!(rs(&a, &b, 4).unwrap(), expect);
        assert!(rs(&a, &b, 12).is_err());
        assert!(mmd(&[], &b).is_err());
    }

    #[test]
    fn iid_samples_are_hard_to_separate() {
        let family = |seed: u64| -> Vec<PointCloud> {
            (0..30)
                .map(|i| {
                    generate_shape(&ShapeSpec::new(ShapeKind::from_name("torus").unwrap(), 64, 0.02, seed * 1000 + i))
                        .unwrap()
                })
                .collect()
        };
        let acc = one_nna(&family(1), &family(2)).unwrap();
        assert!((0.25..=0.75).contains(&acc), "{acc}");
    }

    #[test]
    fn report_csv_layout() {
        let s = random_set(12, 3, 8);
        let report = evaluate(&s, &s, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        report.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let names: Vec<&str> = text.lines().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(
            names,
            ["metric", "mmd", "mmd_x100", "cov", "one_nna", "rs", "gt_smoothness", "model_smoothness"]
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn chamfer_symmetric_and_rigid_invariant(seed in 0u64..1000, angle in 0.0f64..std::f64::consts::TAU, shift in -3.0f64..3.0) {
            let s = random_set(seed, 2, 9);
            let (c, si) = (angle.cos(), angle.sin());
            let moved: Vec<PointCloud> = s.iter().map(|p| {
                let mut m = p.points().clone();
                for mut row in m.rows_mut() {
                    let (x, y) = (row[0], row[1]);
                    row[0] = c * x - si * y + shift;
                    row[1] = si * x + c * y;
                    row[2] += 0.5 * shift;
                }
                PointCloud::new(m).unwrap()
            }).collect();
            let d = chamfer(&s[0], &s[1]).unwrap();
            prop_assert!((d - chamfer(&s[1], &s[0]).unwrap()).abs() < 1e-12);
            prop_assert!((d - chamfer(&moved[0], &moved[1]).unwrap()).abs() < 1e-9 * d.max(1.0));
        }

        #[test]
        fn one_nna_role_swap_and_rs_symmetry(seed in 0u64..1000) {
            let a = random_set(seed, 4, 8);
            let b = random_set(seed + 5000, 3, 8);
            prop_assert_eq!(one_nna(&a, &b).unwrap(), one_nna(&b, &a).unwrap());
            prop_assert_eq!(rs(&a, &b, 3).unwrap(), rs(&b, &a, 3).unwrap());
        }
    }
}
