// SPDX-License-Identifier: Apache-2.0

//! Seeded inputs shared by the benchmarks.

use hiermp::annealer::SequencePair;
use hiermp::partition::PartitionProblem;
use hiermp::pipeline::{generate_benchmark, BenchSpec};
use hiermp::DesignDatabase;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random sequence pair over `n` blocks with shapes in [1, 20).
pub fn packing_instance(n: usize, seed: u64) -> (SequencePair, Vec<(f64, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sp = SequencePair::random(n, &mut rng);
    let shapes = (0..n)
        .map(|_| (rng.gen_range(1.0..20.0), rng.gen_range(1.0..20.0)))
        .collect();
    (sp, shapes)
}

/// Hypergraph of `n` unit vertices with mostly local nets of 2 to 5 pins.
pub fn hypergraph(n: usize, nets: usize, seed: u64) -> PartitionProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hyperedges = (0..nets)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let k = rng.gen_range(2..=5);
            let mut e: Vec<usize> = (0..k)
                .map(|_| (a + rng.gen_range(0..32)) % n)
                .collect();
            e.sort_unstable();
            e.dedup();
            e
        })
        .filter(|e| e.len() >= 2)
        .collect();
    PartitionProblem {
        weights: vec![1.0; n],
        hyperedges,
        balance: 0.55,
        seed,
    }
}

/// Generated hierarchical design with `num_macros` macros.
pub fn design(num_macros: usize, hier_depth: usize, fanout: usize) -> DesignDatabase {
    let spec = BenchSpec {
        num_macros,
        hier_depth,
        fanout,
        ..BenchSpec::default()
    };
    generate_benchmark(&spec)
        .and_then(|g| g.parse().map_err(Into::into))
        .expect("generated design parses")
}
