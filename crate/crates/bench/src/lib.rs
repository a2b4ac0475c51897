//! Shared fixtures for the pipeline benchmarks.

use rise_core::datamodel::synth::{gen_synthetic, PlantedSpec, SyntheticData, SyntheticParams};

/// A planted synthetic pool sized for benchmarking.
pub fn fixture(n_samples: usize, vocab_size: usize, hidden_dim: usize) -> SyntheticData {
    gen_synthetic(&SyntheticParams {
        n_samples,
        tokens_per_sample: 16,
        vocab_size,
        hidden_dim,
        k_store: 256.min(vocab_size),
        seed: 7,
        n_queries: 4,
        planted: Some(PlantedSpec {
            n_positive: n_samples / 10,
            strength: 1.0,
        }),
    })
    .expect("fixture parameters are valid")
}
