//! Knowledge graph embeddings built on the manifold principle.
//!
//! A golden triple `(h, r, t)` is expected to satisfy `M(h, r, t) = D_r²` for a
//! manifold function `M` (a sphere centred at `h + r`, or a hyperplane with
//! normal `h + r_head`), optionally evaluated through a kernel. The score of a
//! triple is its squared distance from that manifold; smaller is more
//! plausible. A TransE baseline (`‖h + r − t‖²`) shares every code path.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: vocabulary, triple files, relation statistics, filter index.
//! * [`kernel`] and [`manifold`]: kernels, manifold functions, scores and their
//!   analytic gradients.
//! * [`model`]: the parameter tensors.
//! * [`train`]: initialisation, negative sampling, hinge loss, SGD.
//! * [`checkpoint`]: on-disk persistence.
//! * [`eval`] and [`classify`]: link prediction and triple classification.
//! * [`config`]: the `key=value` run configuration shared with the CLI.

pub mod checkpoint;
pub mod classify;
pub mod config;
mod error;
pub mod eval;
pub mod graph;
pub mod kernel;
pub mod manifold;
pub mod model;
pub mod synthetic;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use classify::{
    classify, export_scores, tune_thresholds, ClassificationReport, ThresholdTable,
};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use eval::{
    link_prediction_eval, rank_entity, Direction, EvalOptions, MetricsReport, RankResult,
};
pub use graph::{
    compute_relation_stats, illposedness_ratio, load_triples, load_triples_known, Category,
    FilterIndex, RelationStats, Split, Triple, TripleSet, Vocabulary,
};
pub use kernel::Kernel;
pub use manifold::{GradientBundle, Manifold, ModelSpec};
pub use model::{EmbeddingModel, Matrix};
pub use train::{hinge_loss, init_model, train, NegativeSampler, Sampling, TrainConfig, TrainLog};
