use rayon::prelude::*;

use super::PointCloud;
use crate::{Error, Result};

/// Directed `k`-nearest-neighbour lists plus their symmetric (union) closure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnGraph {
    k: usize,
    neighbors: Vec<Vec<usize>>,
    /// Sorted adjacency of the symmetrised graph.
    adjacency: Vec<Vec<usize>>,
}

impl KnnGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    /// Neighbours of `i` ordered by increasing distance.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Symmetrised adjacency of `i`, ascending.
    pub fn adjacent(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Undirected edges `(i, j)` with `i < j`, lexicographically sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, adj)| adj.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    /// Builds a graph from explicit undirected edges. `k` is recorded as 0.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidInput(format!("bad edge ({i}, {j}) for {n} nodes")));
            }
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        Ok(Self {
            k: 0,
            neighbors: adjacency.clone(),
            adjacency,
        })
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Exhaustive KNN over Euclidean distance, self excluded, ties broken by
/// the lower point index. Symmetrised with the union rule.
pub fn build_knn_graph(cloud: &PointCloud, k: usize) -> Result<KnnGraph> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "KNN graph needs at least 2 points, got {n}"
        )));
    }
    if k == 0 || k > n - 1 {
        return Err(Error::InvalidParameter(format!(
            "k = {k} outside [1, {}] for {n} points",
            n - 1
        )));
    }
    let pts = cloud.points();
    let flat = pts.as_slice().expect("standard layout");
    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = &flat[3 * i..3 * i + 3];
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(pi, &flat[3 * j..3 * j + 3]), j))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, cmp);
                cand.truncate(k);
            }
            cand.sort_unstable_by(cmp);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let mut adjacency = vec![Vec::new(); n];
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
        adj.dedup();
    }
    Ok(KnnGraph {
        k,
        neighbors,
        adjacency,
    })
}
