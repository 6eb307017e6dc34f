//! Input generators shared by the kernel benchmarks.

use contagion_core::network::UndirectedGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian_series(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `blocks` dense groups of `size` nodes with faint links between groups.
pub fn clustered_graph(blocks: usize, size: usize, seed: u64) -> UndirectedGraph {
    let n = blocks * size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = UndirectedGraph::new((0..n).map(|i| format!("N{i}")).collect());
    for a in 0..n {
        for b in a + 1..n {
            let w = if a / size == b / size { rng.random_range(0.5..1.0) } else { rng.random_range(0.0..0.05) };
            g.set(a, b, w);
        }
    }
    g
}
