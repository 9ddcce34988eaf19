//! Initialisation, Bernoulli negative sampling, margin hinge loss and SGD.
//!
//! Training reads and writes parameters through relaxed atomics so that
//! `workers > 1` can run lock-free (Hogwild-style) without unsafe code. Each
//! worker owns its sampler RNG, derived from `(seed, worker id)`. With one
//! worker the whole trajectory is a deterministic function of the seed.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{FilterIndex, RelationStats, Triple, TripleSet, Vocabulary};
use crate::manifold::{GradientBundle, Manifold, ModelSpec, TripleVectors};
use crate::model::{project_unit_ball, EmbeddingModel, Matrix};
use crate::{Error, Result};

/// Resampling budget when a corruption is itself a training triple.
pub const MAX_SAMPLING_ATTEMPTS: u32 = 100;

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_WORKER_BASE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Head corrupted with probability `tph / (tph + hpt)`.
    Bern,
    /// Head or tail with equal probability.
    Unif,
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::Bern => "bern",
            Sampling::Unif => "unif",
        })
    }
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bern" => Ok(Sampling::Bern),
            "unif" => Ok(Sampling::Unif),
            other => Err(Error::Config(format!(
                "sampling must be bern or unif, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub spec: ModelSpec,
    pub dim: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub epochs: usize,
    pub sampling: Sampling,
    pub seed: u64,
    pub workers: usize,
    pub batch_size: usize,
    /// Rescale entity vectors into the unit ball after every batch.
    pub project_entities: bool,
}

impl TrainConfig {
    /// Defaults: `α = 0.001`, `γ = 3.0`, 2,000 epochs, bern sampling, one
    /// worker, batch size one.
    pub fn new(spec: ModelSpec, dim: usize) -> Self {
        TrainConfig {
            spec,
            dim,
            learning_rate: 0.001,
            margin: 3.0,
            epochs: 2000,
            sampling: Sampling::Bern,
            seed: 0,
            workers: 1,
            batch_size: 1,
            project_entities: default_projection(&spec),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let positive = |name: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive")))
            }
        };
        positive("dimension", self.dim >= 1)?;
        positive("workers", self.workers >= 1)?;
        positive("batch size", self.batch_size >= 1)?;
        positive("margin", self.margin > 0.0 && self.margin.is_finite())?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Projection is on for sphere/TransE and off for hyperplanes, whose inner
/// product manifold depends on vector scale.
pub fn default_projection(spec: &ModelSpec) -> bool {
    matches!(spec.manifold, Manifold::Sphere)
}

/// `[γ + f(pos) − f(neg)]₊`; scores are distances, so the positive triple is
/// pushed below the negative one by at least the margin.
#[inline]
pub fn hinge_loss(pos_score: f64, neg_score: f64, margin: f64) -> f64 {
    (margin + pos_score - neg_score).max(0.0)
}

/// Uniform bound `√(6 / 2d)` used for initialisation.
pub fn init_bound(dim: usize) -> f64 {
    (6.0 / (2.0 * dim as f64)).sqrt()
}

/// Entity and relation entries i.i.d. uniform on `±√(6/2d)`, `D_r = 1`.
/// With projection enabled, entity rows start inside the unit ball.
pub fn init_model(vocab: &Vocabulary, config: &TrainConfig) -> Result<EmbeddingModel> {
    init_model_sized(vocab.num_entities(), vocab.num_relations(), config)
}

pub fn init_model_sized(
    entities: usize,
    relations: usize,
    config: &TrainConfig,
) -> Result<EmbeddingModel> {
    config.validate()?;
    let mut model = EmbeddingModel::zeros(config.spec, entities, relations, config.dim)?;
    let mut rng = seeded(config.seed, STREAM_INIT);
    let bound = init_bound(config.dim);
    let tensors = [
        Some(&mut model.entities),
        Some(&mut model.relations),
        model.relations_tail.as_mut(),
    ];
    for m in tensors.into_iter().flatten() {
        for x in m.as_mut_slice() {
            *x = rng.random_range(-bound..=bound);
        }
    }
    if config.project_entities {
        model.project_entities();
    }
    Ok(model)
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Corrupts the head or tail of a triple with a uniformly drawn entity.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    head_probability: Vec<f64>,
    num_entities: usize,
    rng: ChaCha8Rng,
    exhausted: u64,
}

impl NegativeSampler {
    pub fn new(
        stats: &RelationStats,
        num_relations: usize,
        num_entities: usize,
        mode: Sampling,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if num_entities < 2 {
            return Err(Error::Domain(
                "negative sampling needs at least two entities".into(),
            ));
        }
        let head_probability = (0..num_relations)
            .map(|r| match mode {
                Sampling::Bern => stats.head_replacement_probability(r),
                Sampling::Unif => 0.5,
            })
            .collect();
        Ok(NegativeSampler {
            head_probability,
            num_entities,
            rng,
            exhausted: 0,
        })
    }

    pub fn with_seed(
        stats: &RelationStats,
        num_relations: usize,
        num_entities: usize,
        mode: Sampling,
        seed: u64,
    ) -> Result<Self> {
        Self::new(
            stats,
            num_relations,
            num_entities,
            mode,
            seeded(seed, STREAM_WORKER_BASE),
        )
    }

    pub fn head_probability(&self, relation: usize) -> f64 {
        self.head_probability.get(relation).copied().unwrap_or(0.5)
    }

    /// Times the attempt budget ran out and a known triple was returned.
    pub fn exhausted(&self) -> u64 {
        self.exhausted
    }

    /// Replaces exactly one of head/tail with a different entity, redrawing
    /// while the result is in `known`.
    pub fn sample(&mut self, triple: &Triple, known: &FilterIndex) -> Triple {
        let replace_head = self.rng.random_bool(self.head_probability(triple.relation));
        let mut candidate = *triple;
        for _ in 0..MAX_SAMPLING_ATTEMPTS {
            candidate = if replace_head {
                triple.with_head(self.other_entity(triple.head))
            } else {
                triple.with_tail(self.other_entity(triple.tail))
            };
            if !known.contains(&candidate) {
                return candidate;
            }
        }
        self.exhausted += 1;
        candidate
    }

    #[inline]
    fn other_entity(&mut self, current: usize) -> usize {
        let e = self.rng.random_range(0..self.num_entities - 1);
        if e >= current {
            e + 1
        } else {
            e
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Pairs with positive hinge loss.
    pub violations: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub sampler_exhausted: u64,
}

/// One SGD step on a fixed `(pos, neg)` pair; returns the pair's loss before
/// the step.
pub fn sgd_step(
    model: &mut EmbeddingModel,
    pos: &Triple,
    neg: &Triple,
    learning_rate: f64,
    margin: f64,
) -> Result<f64> {
    let gp = model.score_gradients(pos)?;
    let gn = model.score_gradients(neg)?;
    let loss = hinge_loss(model.score(pos)?, model.score(neg)?, margin);
    if loss > 0.0 {
        apply(model, pos, &gp, -learning_rate);
        apply(model, neg, &gn, learning_rate);
    }
    Ok(loss)
}

fn apply(model: &mut EmbeddingModel, t: &Triple, g: &GradientBundle, scale: f64) {
    axpy(model.entities.row_mut(t.head), &g.head, scale);
    axpy(model.entities.row_mut(t.tail), &g.tail, scale);
    axpy(model.relations.row_mut(t.relation), &g.relation, scale);
    if let Some(m) = model.relations_tail.as_mut() {
        axpy(m.row_mut(t.relation), &g.relation_tail, scale);
    }
    if model.spec.uses_manifold_param() {
        model.manifold_params[t.relation] += scale * g.manifold_param;
    }
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

/// Runs `config.epochs` passes of SGD over `data`, updating `model` in
/// place. `known` is the set corruptions are checked against (the training
/// split). `on_epoch` sees each epoch's statistics as they complete.
pub fn train<F>(
    model: &mut EmbeddingModel,
    data: &TripleSet,
    stats: &RelationStats,
    known: &FilterIndex,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainLog>
where
    F: FnMut(&EpochStats),
{
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if model.spec != config.spec || model.dim() != config.dim {
        return Err(Error::Config(
            "model does not match the training configuration".into(),
        ));
    }
    for t in &data.triples {
        model.check(t)?;
    }
    if config.project_entities {
        model.project_entities();
    }

    let shared = SharedModel::new(model);
    let mut workers = (0..config.workers)
        .map(|w| {
            let rng = seeded(config.seed, STREAM_WORKER_BASE + w as u64);
            let sampler = NegativeSampler::new(
                stats,
                model.num_relations(),
                model.num_entities(),
                config.sampling,
                rng,
            )?;
            Ok(Worker::new(sampler, config))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut shuffle_rng = seeded(config.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let chunk = data.len().div_ceil(config.workers);
    let mut log = TrainLog::default();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let stop = AtomicBool::new(false);
        let ctx = EpochContext {
            shared: &shared,
            data,
            known,
            config,
            epoch,
            stop: &stop,
        };

        let results: Vec<Result<(f64, usize)>> = if workers.len() == 1 {
            vec![workers[0].run(&ctx, &order)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = workers
                    .iter_mut()
                    .zip(order.chunks(chunk))
                    .map(|(worker, slice)| {
                        let ctx = &ctx;
                        scope.spawn(move || worker.run(ctx, slice))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect()
            })
        };

        let mut loss = 0.0;
        let mut violations = 0;
        for r in results {
            let (l, v) = r?;
            loss += l;
            violations += v;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss / data.len() as f64,
            violations,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} ({violations} violations)",
            stats.mean_loss
        );
        on_epoch(&stats);
        log.epochs.push(stats);
    }

    log.sampler_exhausted = workers.iter().map(|w| w.sampler.exhausted()).sum();
    shared.write_back(model);
    Ok(log)
}

struct EpochContext<'a> {
    shared: &'a SharedModel,
    data: &'a TripleSet,
    known: &'a FilterIndex,
    config: &'a TrainConfig,
    epoch: usize,
    stop: &'a AtomicBool,
}

/// Parameters shared between workers without locks. Updates are
/// load-add-store, so concurrent writers may lose updates.
struct SharedModel {
    dim: usize,
    entities: SharedTensor,
    relations: SharedTensor,
    relations_tail: Option<SharedTensor>,
    manifold: SharedTensor,
}

struct SharedTensor(Vec<AtomicU64>);

impl SharedTensor {
    fn new(values: &[f64]) -> Self {
        SharedTensor(values.iter().map(|x| AtomicU64::new(x.to_bits())).collect())
    }

    #[inline]
    fn get(&self, i: usize) -> f64 {
        f64::from_bits(self.0[i].load(Ordering::Relaxed))
    }

    #[inline]
    fn set(&self, i: usize, value: f64) {
        self.0[i].store(value.to_bits(), Ordering::Relaxed);
    }

    #[inline]
    fn read_row(&self, row: usize, out: &mut [f64]) {
        let base = row * out.len();
        for (k, x) in out.iter_mut().enumerate() {
            *x = self.get(base + k);
        }
    }

    #[inline]
    fn write_row(&self, row: usize, values: &[f64]) {
        let base = row * values.len();
        for (k, x) in values.iter().enumerate() {
            self.set(base + k, *x);
        }
    }

    /// `row += scale · grad`; false if a result is not finite.
    #[inline]
    fn add_row(&self, row: usize, grad: &[f64], scale: f64) -> bool {
        let base = row * grad.len();
        let mut finite = true;
        for (k, g) in grad.iter().enumerate() {
            let v = self.get(base + k) + scale * g;
            finite &= v.is_finite();
            self.set(base + k, v);
        }
        finite
    }

    fn to_vec(&self) -> Vec<f64> {
        (0..self.0.len()).map(|i| self.get(i)).collect()
    }
}

impl SharedModel {
    fn new(model: &EmbeddingModel) -> Self {
        SharedModel {
            dim: model.dim(),
            entities: SharedTensor::new(model.entities.as_slice()),
            relations: SharedTensor::new(model.relations.as_slice()),
            relations_tail: model
                .relations_tail
                .as_ref()
                .map(|m| SharedTensor::new(m.as_slice())),
            manifold: SharedTensor::new(&model.manifold_params),
        }
    }

    fn write_back(&self, model: &mut EmbeddingModel) {
        let rebuild = |t: &SharedTensor, rows: usize| {
            Matrix::from_vec(rows, self.dim, t.to_vec()).expect("shape")
        };
        model.entities = rebuild(&self.entities, model.num_entities());
        model.relations = rebuild(&self.relations, model.num_relations());
        if let Some(t) = &self.relations_tail {
            model.relations_tail = Some(rebuild(t, model.num_relations()));
        }
        model.manifold_params = self.manifold.to_vec();
    }
}

#[derive(Default)]
struct Rows {
    head: Vec<f64>,
    relation: Vec<f64>,
    relation_tail: Vec<f64>,
    tail: Vec<f64>,
    manifold_param: f64,
}

impl Rows {
    fn load(&mut self, shared: &SharedModel, t: &Triple) {
        let d = shared.dim;
        for v in [&mut self.head, &mut self.relation, &mut self.tail] {
            v.resize(d, 0.0);
        }
        shared.entities.read_row(t.head, &mut self.head);
        shared.entities.read_row(t.tail, &mut self.tail);
        shared.relations.read_row(t.relation, &mut self.relation);
        if let Some(rt) = &shared.relations_tail {
            self.relation_tail.resize(d, 0.0);
            rt.read_row(t.relation, &mut self.relation_tail);
        }
        self.manifold_param = shared.manifold.get(t.relation);
    }

    fn vectors(&self) -> TripleVectors<'_> {
        TripleVectors {
            head: &self.head,
            relation: &self.relation,
            relation_tail: (!self.relation_tail.is_empty())
                .then_some(self.relation_tail.as_slice()),
            tail: &self.tail,
            manifold_param: self.manifold_param,
        }
    }
}

struct Worker {
    sampler: NegativeSampler,
    pos: Rows,
    neg: Rows,
    grad_pos: GradientBundle,
    grad_neg: GradientBundle,
    touched: Vec<usize>,
    scratch: Vec<f64>,
}

impl Worker {
    fn new(sampler: NegativeSampler, config: &TrainConfig) -> Self {
        let tail = config.spec.has_tail_relation();
        Worker {
            sampler,
            pos: Rows::default(),
            neg: Rows::default(),
            grad_pos: GradientBundle::new(config.dim, tail),
            grad_neg: GradientBundle::new(config.dim, tail),
            touched: Vec::new(),
            scratch: vec![0.0; config.dim],
        }
    }

    /// Processes `indices` in batches; returns (summed loss, violations).
    fn run(&mut self, ctx: &EpochContext<'_>, indices: &[usize]) -> Result<(f64, usize)> {
        let mut loss_sum = 0.0;
        let mut violations = 0;
        for batch in indices.chunks(ctx.config.batch_size) {
            if ctx.stop.load(Ordering::Relaxed) {
                break;
            }
            for &index in batch {
                match self.step(ctx, &ctx.data.triples[index]) {
                    Ok(loss) => {
                        loss_sum += loss;
                        violations += usize::from(loss > 0.0);
                    }
                    Err(detail) => {
                        ctx.stop.store(true, Ordering::Relaxed);
                        return Err(Error::Diverged {
                            epoch: ctx.epoch,
                            index,
                            detail,
                        });
                    }
                }
            }
            if ctx.config.project_entities {
                self.project(ctx.shared);
            }
            self.touched.clear();
        }
        Ok((loss_sum, violations))
    }

    fn step(&mut self, ctx: &EpochContext<'_>, pos: &Triple) -> std::result::Result<f64, String> {
        let spec = &ctx.config.spec;
        let neg = self.sampler.sample(pos, ctx.known);
        self.pos.load(ctx.shared, pos);
        self.neg.load(ctx.shared, &neg);
        let f_pos = spec.score_gradients_vectors(&self.pos.vectors(), &mut self.grad_pos);
        let f_neg = spec.score_gradients_vectors(&self.neg.vectors(), &mut self.grad_neg);
        let loss = hinge_loss(f_pos, f_neg, ctx.config.margin);
        if !loss.is_finite() || !f_pos.is_finite() || !f_neg.is_finite() {
            return Err(format!(
                "non-finite loss (pos score {f_pos}, neg score {f_neg})"
            ));
        }
        if loss > 0.0 {
            let lr = ctx.config.learning_rate;
            let ok = update(ctx.shared, spec, pos, &self.grad_pos, -lr)
                && update(ctx.shared, spec, &neg, &self.grad_neg, lr);
            if !ok {
                return Err("non-finite parameter after update".into());
            }
            if ctx.config.project_entities {
                self.touched
                    .extend([pos.head, pos.tail, neg.head, neg.tail]);
            }
        }
        Ok(loss)
    }

    fn project(&mut self, shared: &SharedModel) {
        self.touched.sort_unstable();
        self.touched.dedup();
        for &e in &self.touched {
            shared.entities.read_row(e, &mut self.scratch);
            project_unit_ball(&mut self.scratch);
            shared.entities.write_row(e, &self.scratch);
        }
    }
}

fn update(
    shared: &SharedModel,
    spec: &ModelSpec,
    t: &Triple,
    g: &GradientBundle,
    scale: f64,
) -> bool {
    let mut ok = shared.entities.add_row(t.head, &g.head, scale);
    ok &= shared.entities.add_row(t.tail, &g.tail, scale);
    ok &= shared.relations.add_row(t.relation, &g.relation, scale);
    if let Some(rt) = &shared.relations_tail {
        ok &= rt.add_row(t.relation, &g.relation_tail, scale);
    }
    if spec.uses_manifold_param() {
        let v = shared.manifold.get(t.relation) + scale * g.manifold_param;
        ok &= v.is_finite();
        shared.manifold.set(t.relation, v);
    }
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{compute_relation_stats, Split};
    use crate::kernel::Kernel;
    use proptest::prelude::*;

    fn kg(triples: &[(usize, usize, usize)]) -> TripleSet {
        TripleSet::new(
            Split::Train,
            triples
                .iter()
                .map(|&(h, r, t)| Triple::new(h, r, t))
                .collect(),
        )
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge_loss(1.0, 5.0, 2.0), 0.0);
        assert_eq!(hinge_loss(3.0, 1.0, 1.0), 3.0);
        assert_eq!(hinge_loss(0.7, 0.7, 2.5), 2.5);
    }

    #[test]
    fn init_bounds_and_determinism() {
        assert!((init_bound(100) - 0.17320508).abs() < 1e-8);
        let vocab = Vocabulary::from_names((0..30).map(|i| format!("e{i}")), ["r0", "r1"]);
        let mut cfg = TrainConfig::new(ModelSpec::hyperplane(Kernel::Linear, false), 100);
        cfg.seed = 42;
        let a = init_model(&vocab, &cfg).unwrap();
        let b = init_model(&vocab, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a
            .parameters()
            .take(30 * 100 + 2 * 2 * 100)
            .all(|x| x.abs() <= init_bound(100)));
        assert_eq!(a.manifold_params, [1.0, 1.0]);
        cfg.seed = 43;
        assert_ne!(init_model(&vocab, &cfg).unwrap(), a);
    }

    #[test]
    fn init_with_projection_starts_in_unit_ball() {
        let cfg = TrainConfig::new(ModelSpec::sphere(Kernel::Linear), 10);
        assert!(cfg.project_entities);
        let m = init_model_sized(200, 3, &cfg).unwrap();
        assert!(m.entities.max_row_norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn sampler_changes_exactly_one_side() {
        let train = kg(&[(0, 0, 1), (2, 0, 3), (4, 1, 5)]);
        let stats = compute_relation_stats(&train, 1.5).unwrap();
        let known = FilterIndex::from_splits([&train]);
        let mut s = NegativeSampler::with_seed(&stats, 2, 6, Sampling::Bern, 7).unwrap();
        for _ in 0..1000 {
            for t in &train.triples {
                let n = s.sample(t, &known);
                assert!((n.head != t.head) ^ (n.tail != t.tail));
                assert_eq!(n.relation, t.relation);
                assert!(!known.contains(&n));
            }
        }
        assert_eq!(s.exhausted(), 0);
    }

    #[test]
    fn sampler_gives_up_after_budget() {
        // Every corruption of (0, 0, 1) is a training triple.
        let train = kg(&[(0, 0, 1), (1, 0, 1), (0, 0, 0)]);
        let stats = compute_relation_stats(&train, 1.5).unwrap();
        let known = FilterIndex::from_splits([&train]);
        let mut s = NegativeSampler::with_seed(&stats, 1, 2, Sampling::Unif, 1).unwrap();
        let n = s.sample(&Triple::new(0, 0, 1), &known);
        assert!(known.contains(&n));
        assert_eq!(s.exhausted(), 1);
        assert!(NegativeSampler::with_seed(&stats, 1, 1, Sampling::Unif, 1).is_err());
    }

    #[test]
    fn unif_frequency() {
        let train = kg(&[(0, 0, 1), (0, 0, 2), (0, 0, 3)]);
        let stats = compute_relation_stats(&train, 1.5).unwrap();
        let known = FilterIndex::default();
        let mut s = NegativeSampler::with_seed(&stats, 1, 50, Sampling::Unif, 3).unwrap();
        let t = Triple::new(0, 0, 1);
        let heads = (0..100_000)
            .filter(|_| s.sample(&t, &known).head != 0)
            .count();
        assert!((heads as f64 / 1e5 - 0.5).abs() < 0.01);
    }

    fn toy() -> (TripleSet, RelationStats, FilterIndex) {
        let train = kg(&[
            (0, 0, 1),
            (1, 0, 2),
            (2, 1, 3),
            (3, 1, 4),
            (4, 0, 5),
            (5, 1, 0),
        ]);
        let stats = compute_relation_stats(&train, 1.5).unwrap();
        let known = FilterIndex::from_splits([&train]);
        (train, stats, known)
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (data, stats, known) = toy();
        for spec in [
            ModelSpec::sphere(Kernel::Linear),
            ModelSpec::hyperplane(Kernel::Linear, true),
        ] {
            let mut cfg = TrainConfig::new(spec, 8);
            cfg.learning_rate = 0.0;
            cfg.epochs = 5;
            let mut model = init_model_sized(6, 2, &cfg).unwrap();
            let before = model.clone();
            let log = train(&mut model, &data, &stats, &known, &cfg, |_| {}).unwrap();
            assert_eq!(log.epochs.len(), 5);
            assert_eq!(model, before);
        }
    }

    #[test]
    fn single_worker_is_deterministic() {
        let (data, stats, known) = toy();
        let mut cfg = TrainConfig::new(ModelSpec::sphere(Kernel::Gaussian { sigma: 1.0 }), 6);
        cfg.epochs = 20;
        cfg.learning_rate = 0.01;
        cfg.seed = 11;
        let run = || {
            let mut m = init_model_sized(6, 2, &cfg).unwrap();
            let log = train(&mut m, &data, &stats, &known, &cfg, |_| {}).unwrap();
            (
                m,
                log.epochs
                    .iter()
                    .map(|e| e.mean_loss.to_bits())
                    .collect::<Vec<_>>(),
            )
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn projection_keeps_entities_in_ball() {
        let (data, stats, known) = toy();
        let mut cfg = TrainConfig::new(ModelSpec::transe(), 4);
        cfg.learning_rate = 0.5;
        cfg.epochs = 10;
        cfg.batch_size = 3;
        let mut m = init_model_sized(6, 2, &cfg).unwrap();
        // Starts outside the ball; training projects on entry.
        m.entities
            .as_mut_slice()
            .iter_mut()
            .for_each(|x| *x *= 10.0);
        train(&mut m, &data, &stats, &known, &cfg, |_| {}).unwrap();
        assert!(m.entities.max_row_norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn multiple_workers_train() {
        let (data, stats, known) = toy();
        let mut cfg = TrainConfig::new(ModelSpec::sphere(Kernel::Linear), 8);
        cfg.workers = 3;
        cfg.epochs = 30;
        cfg.learning_rate = 0.01;
        let mut m = init_model_sized(6, 2, &cfg).unwrap();
        let log = train(&mut m, &data, &stats, &known, &cfg, |_| {}).unwrap();
        assert_eq!(log.epochs.len(), 30);
        m.validate().unwrap();
        assert!(log.epochs.last().unwrap().mean_loss <= log.epochs[0].mean_loss);
    }

    #[test]
    fn divergence_is_reported() {
        let (data, stats, known) = toy();
        let mut cfg = TrainConfig::new(
            ModelSpec::hyperplane(
                Kernel::Polynomial {
                    degree: 3,
                    offset: 1.0,
                },
                false,
            ),
            4,
        );
        cfg.learning_rate = 1e6;
        cfg.epochs = 50;
        let mut m = init_model_sized(6, 2, &cfg).unwrap();
        match train(&mut m, &data, &stats, &known, &cfg, |_| {}) {
            Err(Error::Diverged { epoch, index, .. }) => {
                assert!(epoch >= 1 && index < data.len());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn train_rejects_bad_input() {
        let (data, stats, known) = toy();
        let cfg = TrainConfig::new(ModelSpec::sphere(Kernel::Linear), 4);
        let mut m = init_model_sized(6, 2, &cfg).unwrap();
        assert!(train(
            &mut m,
            &TripleSet::empty(Split::Train),
            &stats,
            &known,
            &cfg,
            |_| {}
        )
        .is_err());
        let mut other = cfg;
        other.dim = 5;
        assert!(train(&mut m, &data, &stats, &known, &other, |_| {}).is_err());
        let mut small = init_model_sized(3, 2, &cfg).unwrap();
        assert!(matches!(
            train(&mut small, &data, &stats, &known, &cfg, |_| {}),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn single_triple_loss_is_non_increasing() {
        // Two entities leave one admissible corruption per side, and on a
        // 1-1 relation bern picks either side with probability ½.
        let data = kg(&[(0, 0, 1)]);
        let stats = compute_relation_stats(&data, 1.5).unwrap();
        let known = FilterIndex::from_splits([&data]);
        let mut cfg = TrainConfig::new(ModelSpec::sphere(Kernel::Linear), 5);
        cfg.learning_rate = 1e-3;
        cfg.epochs = 50;
        cfg.seed = 5;
        let mut m = init_model_sized(2, 1, &cfg).unwrap();
        let log = train(&mut m, &data, &stats, &known, &cfg, |_| {}).unwrap();
        let losses: Vec<f64> = log.epochs.iter().map(|e| e.mean_loss).collect();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{losses:?}");
        }
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative(pos in -100.0f64..100.0, neg in -100.0f64..100.0, margin in 0.0f64..10.0) {
            prop_assert!(hinge_loss(pos, neg, margin) >= 0.0);
        }

        #[test]
        fn small_step_does_not_increase_pair_loss(seed in 0u64..1000, lr in 1e-6f64..1e-4) {
            let mut cfg = TrainConfig::new(ModelSpec::sphere(Kernel::Linear), 6);
            cfg.seed = seed;
            cfg.project_entities = false;
            let mut m = init_model_sized(4, 1, &cfg).unwrap();
            let pos = Triple::new(0, 0, 1);
            let neg = Triple::new(2, 0, 1);
            let margin = 10.0;
            let before = sgd_step(&mut m, &pos, &neg, lr, margin).unwrap();
            prop_assume!(before > 0.0);
            let after = hinge_loss(m.score(&pos).unwrap(), m.score(&neg).unwrap(), margin);
            prop_assert!(after <= before, "{} > {}", after, before);
        }
    }
}
