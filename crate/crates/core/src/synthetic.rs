//! Seeded random graphs and models for tests and benchmarks.

use std::collections::BTreeSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Split, Triple, TripleSet, Vocabulary};
use crate::manifold::ModelSpec;
use crate::model::EmbeddingModel;
use crate::Result;

/// Vocabulary with entities `e0..` and relations `r0..`.
pub fn vocabulary(entities: usize, relations: usize) -> Vocabulary {
    Vocabulary::from_names(
        (0..entities).map(|i| format!("e{i}")),
        (0..relations).map(|i| format!("r{i}")),
    )
}

/// `triples` distinct triples drawn uniformly, in sorted order. The count is
/// capped at `E·R·E`.
pub fn random_kg(
    entities: usize,
    relations: usize,
    triples: usize,
    seed: u64,
) -> (Vocabulary, TripleSet) {
    let vocab = vocabulary(entities, relations);
    let target = triples.min(entities * entities * relations);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = BTreeSet::new();
    while set.len() < target {
        set.insert(Triple::new(
            rng.random_range(0..entities),
            rng.random_range(0..relations),
            rng.random_range(0..entities),
        ));
    }
    (
        vocab,
        TripleSet::new(Split::Train, set.into_iter().collect()),
    )
}

/// Parameters uniform on `±scale`, `D_r` uniform on `[0.5, 1.5]`.
pub fn random_model(
    spec: ModelSpec,
    entities: usize,
    relations: usize,
    dim: usize,
    scale: f64,
    seed: u64,
) -> Result<EmbeddingModel> {
    let mut model = EmbeddingModel::zeros(spec, entities, relations, dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = [
        Some(&mut model.entities),
        Some(&mut model.relations),
        model.relations_tail.as_mut(),
    ];
    for m in tensors.into_iter().flatten() {
        for x in m.as_mut_slice() {
            *x = rng.random_range(-scale..=scale);
        }
    }
    for d in &mut model.manifold_params {
        *d = rng.random_range(0.5..=1.5);
    }
    Ok(model)
}
