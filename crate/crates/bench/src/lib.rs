//! Benchmark fixtures shared by the criterion benches.

use triadcal_core::simulation::{simulate_responses, SimulationConfig};
use triadcal_core::triads::EmbeddingRecord;
use triadcal_core::ResponseMatrix;

/// Rasch responses at the given size with a fixed seed.
pub fn rasch_data(n_subjects: usize, n_items: usize) -> ResponseMatrix {
    simulate_responses(&SimulationConfig::rasch(n_subjects, n_items, 17)).expect("valid config").data
}

/// A deterministic embedding corpus: `identities` identities with `per_identity` images each.
pub fn corpus(identities: usize, per_identity: usize, dim: usize) -> Vec<EmbeddingRecord> {
    let mut out = Vec::with_capacity(identities * per_identity);
    for i in 0..identities {
        for k in 0..per_identity {
            let vector = (0..dim).map(|d| (((i * 31 + k * 7 + d * 13) % 97) as f64 / 97.0 - 0.5) + if d == i % dim { 1.0 } else { 0.0 }).collect();
            out.push(EmbeddingRecord {
                image_id: format!("id{i:03}_{k}"),
                identity_id: format!("id{i:03}"),
                gender: if i % 2 == 0 { "f" } else { "m" }.into(),
                race: "r".into(),
                vector,
            });
        }
    }
    out
}
