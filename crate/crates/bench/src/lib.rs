//! Shared fixtures for the benchmarks.

use kgm_core::synthetic::{random_kg, random_model};
use kgm_core::{EmbeddingModel, FilterIndex, ModelSpec, TripleSet, Vocabulary};

pub struct Fixture {
    pub vocab: Vocabulary,
    pub triples: TripleSet,
    pub filter: FilterIndex,
    pub model: EmbeddingModel,
}

/// Random graph plus a random model over it.
pub fn fixture(
    spec: ModelSpec,
    entities: usize,
    relations: usize,
    triples: usize,
    dim: usize,
) -> Fixture {
    let (vocab, triples) = random_kg(entities, relations, triples, 11);
    let filter = FilterIndex::from_splits([&triples]);
    let model = random_model(spec, entities, relations, dim, 0.3, 12).expect("valid fixture spec");
    Fixture {
        vocab,
        triples,
        filter,
        model,
    }
}
