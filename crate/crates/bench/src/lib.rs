//! Fixed workloads shared by the benchmarks.

use ecv_core::dense::DenseMatrix;
use ecv_core::netgraph::AdjacencyMatrix;
use ecv_core::rng::derive;
use ecv_core::simgen::{gen_block_model, BlockDesign};

/// A degree-corrected block model draw with `k` balanced communities.
pub fn block_network(n: usize, k: usize, lambda: f64, seed: u64) -> AdjacencyMatrix {
    let design = BlockDesign {
        n,
        k,
        lambda,
        t: 0.0,
        beta: 0.2,
        degree_corrected: true,
    };
    gen_block_model(&design, &mut derive(seed, 0))
        .expect("valid design")
        .adjacency
}

/// `n` points in `k` well separated groups in the plane, `k` at most 4.
pub fn clustered_points(n: usize, k: usize) -> DenseMatrix {
    let centers = [(0.0, 0.0), (5.0, 0.0), (0.0, 5.0), (5.0, 5.0)];
    DenseMatrix::from_fn(n, 2, |i, j| {
        let (cx, cy) = centers[i % k];
        let jitter = ((i * 7919 + j * 104_729) % 1000) as f64 / 1000.0 - 0.5;
        if j == 0 {
            cx + jitter
        } else {
            cy + jitter
        }
    })
}
