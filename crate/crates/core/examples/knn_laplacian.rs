//! Builds KNN graphs on a noisy sphere and shows how the Laplacian
//! smoothness energy grows with k and with noise.
//!
//! `cargo run --release --example knn_laplacian`

use smoothdiff::geometry::{build_knn_graph, build_laplacian, generate_shape, smoothness, ShapeKind, ShapeSpec};

fn main() -> smoothdiff::Result<()> {
    println!("{:>6} {:>4} {:>8} {:>12} {:>10}", "noise", "k", "edges", "S", "λmax bound");
    for noise in [0.0, 0.02, 0.05] {
        let cloud = generate_shape(&ShapeSpec::new(ShapeKind::from_name("sphere")?, 512, noise, 1))?;
        for k in [4, 8, 16, 32] {
            let graph = build_knn_graph(&cloud, k)?;
            let l = build_laplacian(&graph);
            println!(
                "{noise:>6.2} {k:>4} {:>8} {:>12.4} {:>10.1}",
                graph.edges().len(),
                smoothness(&cloud, &l)?,
                l.spectral_bound()
            );
        }
    }
    Ok(())
}
