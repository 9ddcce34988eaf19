use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde_json::{json, Value};

use kgm_core::config::parse_hits;
use kgm_core::graph::{DatasetSummary, Split};
use kgm_core::{
    compute_relation_stats, load_checkpoint, load_triples, load_triples_known, Checkpoint, Error,
    EvalOptions, FilterIndex, RunConfig, TripleSet, Vocabulary,
};

pub const TRAIN_LOG_FILE: &str = "train_log.json";

/// An error plus the exit status it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 2,
            error: error.into(),
        }
    }

    fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 1,
            error: error.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. }
            | Error::UnknownEntity(_)
            | Error::UnknownRelation(_)
            | Error::Config(_)
            | Error::Empty(_)
            | Error::OutOfBounds { .. }
            | Error::DimensionMismatch { .. } => Failure::invalid(e),
            _ => Failure::runtime(e),
        }
    }
}

type Outcome = Result<(), Failure>;

trait Within<T> {
    /// Attaches `what` to a core error without changing its exit status.
    fn within(self, what: impl Fn() -> String) -> Result<T, Failure>;
}

impl<T> Within<T> for kgm_core::Result<T> {
    fn within(self, what: impl Fn() -> String) -> Result<T, Failure> {
        self.map_err(|e| {
            let mut f = Failure::from(e);
            f.error = f.error.context(what());
            f
        })
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::invalid(anyhow!(
            "{} does not exist",
            path.display()
        )))
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    require_file(path)?;
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::runtime)
}

fn read_interning(path: &Path, vocab: &mut Vocabulary, split: Split) -> Result<TripleSet, Failure> {
    load_triples(open(path)?, vocab, split, false).within(|| format!("reading {}", path.display()))
}

fn read_known(
    path: &Path,
    vocab: &Vocabulary,
    split: Split,
    labeled: bool,
) -> Result<TripleSet, Failure> {
    load_triples_known(open(path)?, vocab, split, labeled)
        .within(|| format!("reading {}", path.display()))
}

fn read_checkpoint(dir: &Path) -> Result<Checkpoint, Failure> {
    load_checkpoint(dir)
        .with_context(|| format!("loading checkpoint {}", dir.display()))
        .map_err(Failure::runtime)
}

/// Pretty JSON with a trailing newline, to `out` or stdout.
fn emit(value: &Value, out: Option<&Path>) -> Outcome {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize") + "\n";
    match out {
        Some(path) => fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::runtime),
        None => io::stdout()
            .write_all(text.as_bytes())
            .context("writing stdout")
            .map_err(Failure::runtime),
    }
}

pub fn train(config_path: &Path, no_timings: bool) -> Outcome {
    require_file(config_path)?;
    let config = RunConfig::from_file(config_path)
        .within(|| format!("reading {}", config_path.display()))?;
    config.validate_paths()?;

    let mut vocab = Vocabulary::new();
    let data = read_interning(&config.train_path, &mut vocab, Split::Train)?;
    // Entities first seen in valid/test still get rows so the checkpoint can
    // score them.
    for (path, split) in [
        (&config.valid_path, Split::Valid),
        (&config.test_path, Split::Test),
    ] {
        if let Some(path) = path {
            read_interning(path, &mut vocab, split)?;
        }
    }
    let stats = compute_relation_stats(&data, kgm_core::graph::DEFAULT_CATEGORY_CUTOFF)?;
    let known = FilterIndex::from_splits([&data]);
    log::info!(
        "{} train triples, {} entities, {} relations; {} d={}",
        data.len(),
        vocab.num_entities(),
        vocab.num_relations(),
        config.train.spec,
        config.train.dim
    );

    let started = Instant::now();
    let mut model = kgm_core::init_model(&vocab, &config.train)?;
    let every = (config.train.epochs / 20).max(1);
    let log = kgm_core::train(&mut model, &data, &stats, &known, &config.train, |e| {
        if (e.epoch + 1) % every == 0 {
            log::info!(
                "epoch {:>5}  loss {:.6}  violations {}",
                e.epoch + 1,
                e.mean_loss,
                e.violations
            );
        }
    })?;
    if log.sampler_exhausted > 0 {
        log::warn!(
            "negative sampler returned {} known triples after exhausting retries",
            log.sampler_exhausted
        );
    }

    kgm_core::save_checkpoint(&config.output_dir, &model, &vocab, &config.to_pairs())
        .with_context(|| format!("writing checkpoint to {}", config.output_dir.display()))
        .map_err(Failure::runtime)?;
    let mut report = serde_json::to_value(&log).expect("training log serializes");
    if no_timings {
        for epoch in report["epochs"].as_array_mut().into_iter().flatten() {
            epoch.as_object_mut().map(|o| o.remove("seconds"));
        }
    } else {
        report["wall_seconds"] = json!(started.elapsed().as_secs_f64());
    }
    emit(&report, Some(&config.output_dir.join(TRAIN_LOG_FILE)))?;
    log::info!("checkpoint written to {}", config.output_dir.display());
    Ok(())
}

pub struct EvalLpArgs {
    pub checkpoint: PathBuf,
    pub test: PathBuf,
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub hits: Option<String>,
    pub filter: bool,
    pub raw: bool,
    pub timings: bool,
    pub out: Option<PathBuf>,
}

/// A path recorded in the checkpoint's config echo, if it still exists.
fn echoed_path(ckpt: &Checkpoint, key: &str) -> Option<PathBuf> {
    ckpt.metadata
        .config
        .get(key)
        .map(PathBuf::from)
        .filter(|p| p.is_file())
}

pub fn eval_lp(args: EvalLpArgs) -> Outcome {
    let hits = args.hits.as_deref().map(parse_hits).transpose()?;
    if !args.raw && !args.filter {
        return Err(Failure::invalid(anyhow!(
            "--no-raw and --no-filter leave nothing to report"
        )));
    }
    let ckpt = read_checkpoint(&args.checkpoint)?;
    // The eval.* keys of the training config are the defaults; flags narrow them.
    let base = RunConfig::from_pairs(&ckpt.metadata.config)
        .map(|c| c.eval)
        .unwrap_or_default();
    let options = EvalOptions {
        hits: hits.unwrap_or(base.hits),
        raw: base.raw && args.raw,
        filter: base.filter && args.filter,
    };
    if !options.raw && !options.filter {
        return Err(Failure::invalid(anyhow!(
            "the checkpoint config and flags leave nothing to report"
        )));
    }
    let test = read_known(&args.test, &ckpt.vocab, Split::Test, false)?;
    let train_path = args
        .train
        .clone()
        .or_else(|| echoed_path(&ckpt, "dataset.train"));
    let valid_path = args
        .valid
        .clone()
        .or_else(|| echoed_path(&ckpt, "dataset.valid"));
    let train = match &train_path {
        Some(p) => read_known(p, &ckpt.vocab, Split::Train, false)?,
        None => {
            log::warn!(
                "no training triples: filter uses the test set only and categories come from it"
            );
            TripleSet::empty(Split::Train)
        }
    };
    let valid = match &valid_path {
        Some(p) => read_known(p, &ckpt.vocab, Split::Valid, false)?,
        None => TripleSet::empty(Split::Valid),
    };
    let filter = FilterIndex::from_splits([&train, &valid, &test]);
    let stats_source = if train.is_empty() { &test } else { &train };
    let stats = compute_relation_stats(stats_source, kgm_core::graph::DEFAULT_CATEGORY_CUTOFF)?;

    let report = kgm_core::link_prediction_eval(&test, &ckpt.model, &filter, &stats, &options)?;
    let mut value = serde_json::to_value(&report).expect("metrics serialize");
    if !args.timings {
        value.as_object_mut().map(|o| o.remove("wall_seconds"));
    }
    emit(&value, args.out.as_deref())
}

pub fn eval_tc(checkpoint: &Path, valid: &Path, test: &Path, out: Option<&Path>) -> Outcome {
    let ckpt = read_checkpoint(checkpoint)?;
    let valid = read_known(valid, &ckpt.vocab, Split::Valid, true)?;
    let test = read_known(test, &ckpt.vocab, Split::Test, true)?;
    let table = kgm_core::tune_thresholds(&valid, &ckpt.model)?;
    let report = kgm_core::classify(&test, &ckpt.model, &table)?;

    let name = |r: usize| ckpt.vocab.relation_name(r).unwrap_or("?").to_owned();
    let thresholds: BTreeMap<String, Value> = table
        .per_relation
        .iter()
        .map(|(&r, t)| (name(r), json!({"threshold": t.threshold, "valid_accuracy": t.accuracy, "valid_count": t.count})))
        .collect();
    let per_relation: BTreeMap<String, Value> = report
        .per_relation
        .iter()
        .map(|(&r, a)| {
            (
                name(r),
                json!({
                    "accuracy": a.accuracy,
                    "correct": a.correct,
                    "total": a.total,
                    "threshold": a.threshold,
                    "fallback": a.fallback,
                }),
            )
        })
        .collect();
    let fallbacks = report.per_relation.values().filter(|a| a.fallback).count();
    if fallbacks > 0 {
        log::warn!("{fallbacks} test relation(s) use the global threshold");
    }
    let value = json!({
        "accuracy": report.accuracy,
        "correct": report.correct,
        "total": report.total,
        "thresholds": {
            "global": {"threshold": table.global.threshold, "valid_accuracy": table.global.accuracy, "valid_count": table.global.count},
            "per_relation": thresholds,
        },
        "per_relation": per_relation,
    });
    emit(&value, out)
}

pub fn export_scores(checkpoint: &Path, triples: &Path, out: &Path) -> Outcome {
    let ckpt = read_checkpoint(checkpoint)?;
    let set = read_known(triples, &ckpt.vocab, Split::Test, true)?;
    let file = File::create(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(Failure::runtime)?;
    let rows = kgm_core::export_scores(&set, &ckpt.model, &ckpt.vocab, BufWriter::new(file))
        .within(|| format!("writing {}", out.display()))?;
    log::info!("{rows} scores written to {}", out.display());
    Ok(())
}

pub fn stats(
    train: &Path,
    valid: Option<&Path>,
    test: Option<&Path>,
    cutoff: f64,
    as_json: bool,
) -> Outcome {
    let mut vocab = Vocabulary::new();
    let train_set = read_interning(train, &mut vocab, Split::Train)?;
    let valid_set = valid
        .map(|p| read_interning(p, &mut vocab, Split::Valid))
        .transpose()?;
    let test_set = test
        .map(|p| read_interning(p, &mut vocab, Split::Test))
        .transpose()?;
    let stats = compute_relation_stats(&train_set, cutoff)?;
    let summary = DatasetSummary::new(
        &vocab,
        &train_set,
        valid_set.as_ref(),
        test_set.as_ref(),
        &stats,
    )?;
    if as_json {
        return emit(
            &serde_json::to_value(&summary).expect("summary serializes"),
            None,
        );
    }
    let mut out = String::new();
    out += &format!(
        "{:>6} {:>8} {:>9} {:>7} {:>7} {:>9}\n",
        "#Rel", "#Ent", "#Train", "#Valid", "#Test", "T/(E+R)"
    );
    out += &format!(
        "{:>6} {:>8} {:>9} {:>7} {:>7} {:>9.1}\n",
        summary.relations,
        summary.entities,
        summary.train,
        summary.valid,
        summary.test,
        summary.illposedness_ratio
    );
    out += "\nrelation categories:";
    for (category, count) in &summary.categories {
        out += &format!("  {category} {count}");
    }
    out += "\n";
    io::stdout()
        .write_all(out.as_bytes())
        .context("writing stdout")
        .map_err(Failure::runtime)
}
