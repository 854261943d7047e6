//! Point clouds and the KNN-graph smoothness functional.

mod cloud;
mod knn;
mod laplacian;
mod shapes;

pub use cloud::{read_xyz, read_xyz_dir, write_xyz, write_xyz_dir, PointCloud};
pub use knn::{build_knn_graph, KnnGraph};
pub use laplacian::{build_laplacian, smoothness, smoothness_gradient, LaplacianMatrix};
pub use shapes::{generate_shape, ShapeKind, ShapeSpec};

/// Builds the `k`-NN Laplacian of `cloud` and evaluates `trace(XᵀLX)` on it.
pub fn knn_smoothness(cloud: &PointCloud, k: usize) -> crate::Result<f64> {
    let lap = build_laplacian(&build_knn_graph(cloud, k)?);
    smoothness(cloud, &lap)
}
