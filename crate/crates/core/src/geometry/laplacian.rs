use ndarray::{Array2, ArrayView2};

use super::{KnnGraph, PointCloud};
use crate::{Error, Result};

/// Combinatorial Laplacian `L = D − W` of a binary symmetric adjacency,
/// stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    adjacency: Vec<Vec<usize>>,
}

pub fn build_laplacian(graph: &KnnGraph) -> LaplacianMatrix {
    LaplacianMatrix {
        adjacency: (0..graph.n_nodes()).map(|i| graph.adjacent(i).to_vec()).collect(),
    }
}

impl LaplacianMatrix {
    pub fn dim(&self) -> usize {
        self.adjacency.len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.dim();
        let mut l = Array2::zeros((n, n));
        for (i, adj) in self.adjacency.iter().enumerate() {
            l[[i, i]] = adj.len() as f64;
            for &j in adj {
                l[[i, j]] = -1.0;
            }
        }
        l
    }

    fn check(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.nrows() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "Laplacian has dimension {} but matrix has {} rows",
                self.dim(),
                x.nrows()
            )));
        }
        Ok(())
    }

    /// `L·X` for any `N×c` matrix.
    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&x)?;
        let mut out = Array2::zeros(x.raw_dim());
        for (i, adj) in self.adjacency.iter().enumerate() {
            let deg = adj.len() as f64;
            for c in 0..x.ncols() {
                let mut acc = deg * x[[i, c]];
                for &j in adj {
                    acc -= x[[j, c]];
                }
                out[[i, c]] = acc;
            }
        }
        Ok(out)
    }

    /// `trace(XᵀLX)`, accumulated edge by edge so the result is never negative.
    pub fn quadratic_form(&self, x: ArrayView2<f64>) -> Result<f64> {
        self.check(&x)?;
        let mut total = 0.0;
        for (i, adj) in self.adjacency.iter().enumerate() {
            for &j in adj.iter().filter(|&&j| j > i) {
                let mut d2 = 0.0;
                for c in 0..x.ncols() {
                    let d = x[[i, c]] - x[[j, c]];
                    d2 += d * d;
                }
                total += d2;
            }
        }
        Ok(total)
    }

    /// Largest eigenvalue upper bound (Gershgorin): `2·max degree`.
    pub fn spectral_bound(&self) -> f64 {
        2.0 * self.adjacency.iter().map(Vec::len).max().unwrap_or(0) as f64
    }
}

/// Smoothness `S(X) = trace(XᵀLX)`; lower is smoother.
pub fn smoothness(cloud: &PointCloud, laplacian: &LaplacianMatrix) -> Result<f64> {
    laplacian.quadratic_form(cloud.view())
}

/// `∇_X S(X) = (L + Lᵀ)X = 2LX` with the graph held fixed.
pub fn smoothness_gradient(cloud: &PointCloud, laplacian: &LaplacianMatrix) -> Result<Array2<f64>> {
    let mut g = laplacian.apply(cloud.view())?;
    g.mapv_inplace(|v| 2.0 * v);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_knn_graph;
    use crate::rng;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_cloud(seed: u64, n: usize) -> PointCloud {
        let mut r = rng::seeded(seed);
        PointCloud::new(Array2::from_shape_simple_fn((n, 3), || r.random::<f64>() * 2.0 - 1.0))
            .unwrap()
    }

    #[test]
    fn single_edge() {
        let g = KnnGraph::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(build_laplacian(&g).to_dense(), array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn complete_graph_on_three() {
        let g = KnnGraph::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        assert_eq!(
            build_laplacian(&g).to_dense(),
            array![[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]]
        );
    }

    #[test]
    fn spectrum_is_psd_with_constant_null_vector() {
        let c = random_cloud(5, 10);
        let l = build_laplacian(&build_knn_graph(&c, 3).unwrap()).to_dense();
        let m = nalgebra::DMatrix::from_fn(10, 10, |i, j| l[[i, j]]);
        let eig = m.symmetric_eigen();
        let (imin, lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!(*lmin >= -1e-10);
        let v = eig.eigenvectors.column(imin);
        let first = v[0];
        for x in v.iter() {
            assert!((x - first).abs() < 1e-8, "null vector not constant");
        }
    }

    #[test]
    fn two_point_smoothness_and_gradient() {
        let c = PointCloud::from_rows(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let l = build_laplacian(&build_knn_graph(&c, 1).unwrap());
        assert_eq!(smoothness(&c, &l).unwrap(), 1.0);
        assert_eq!(
            smoothness_gradient(&c, &l).unwrap(),
            array![[-2.0, 0.0, 0.0], [2.0, 0.0, 0.0]]
        );
    }

    #[test]
    fn constant_cloud_has_zero_gradient() {
        let c = PointCloud::from_rows(&[[0.5, -1.0, 2.0]; 6]).unwrap();
        let l = build_laplacian(&build_knn_graph(&c, 2).unwrap());
        assert_eq!(smoothness(&c, &l).unwrap(), 0.0);
        assert!(smoothness_gradient(&c, &l).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn trace_form_equals_edge_sum() {
        let c = random_cloud(9, 10);
        let l = build_laplacian(&build_knn_graph(&c, 3).unwrap());
        let lx = l.apply(c.view()).unwrap();
        let trace: f64 = (&c.view() * &lx).sum();
        let s = smoothness(&c, &l).unwrap();
        assert!((trace - s).abs() <= 1e-10 * s);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let c = random_cloud(21, 10);
        let l = build_laplacian(&build_knn_graph(&c, 3).unwrap());
        let g = smoothness_gradient(&c, &l).unwrap();
        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        for i in 0..10 {
            for a in 0..3 {
                let mut p = c.points().clone();
                p[[i, a]] += h;
                let sp = l.quadratic_form(p.view()).unwrap();
                p[[i, a]] -= 2.0 * h;
                let sm = l.quadratic_form(p.view()).unwrap();
                let fd = (sp - sm) / (2.0 * h);
                max_rel = max_rel.max((fd - g[[i, a]]).abs() / g[[i, a]].abs().max(1e-8));
            }
        }
        assert!(max_rel < 1e-4, "{max_rel}");
    }

    #[test]
    fn dimension_mismatch() {
        let c = random_cloud(1, 5);
        let l = build_laplacian(&build_knn_graph(&random_cloud(2, 6), 2).unwrap());
        assert!(matches!(smoothness(&c, &l), Err(Error::InvalidInput(_))));
        assert!(matches!(smoothness_gradient(&c, &l), Err(Error::InvalidInput(_))));
    }

    proptest! {
        #[test]
        fn rigid_motion_and_scaling(seed in 0u64..500, scale in 0.1f64..5.0, angle in 0.0f64..std::f64::consts::TAU,
                                    tx in -3.0f64..3.0, ty in -3.0f64..3.0) {
            let c = random_cloud(seed, 16);
            let l = build_laplacian(&build_knn_graph(&c, 4).unwrap());
            let s = smoothness(&c, &l).unwrap();
            prop_assert!(s >= 0.0);
            let (sn, cs) = angle.sin_cos();
            let moved = Array2::from_shape_fn((16, 3), |(i, a)| {
                let p = c.points().row(i);
                match a {
                    0 => cs * p[0] - sn * p[1] + tx,
                    1 => sn * p[0] + cs * p[1] + ty,
                    _ => p[2] - tx,
                }
            });
            let sm = l.quadratic_form(moved.view()).unwrap();
            prop_assert!((sm - s).abs() <= 1e-10 * s.max(1.0));
            let scaled = c.points().mapv(|v| v * scale);
            let ss = l.quadratic_form(scaled.view()).unwrap();
            prop_assert!((ss - scale * scale * s).abs() <= 1e-10 * ss.max(1.0));
        }
    }
}
