//! Run configuration as flat `key=value` lines.
//!
//! ```text
//! # WN18, sphere
//! dataset.train=data/WN18/train.txt
//! dataset.test=data/WN18/test.txt
//! model.manifold=sphere
//! model.kernel=linear
//! model.dim=100
//! train.lr=0.001
//! train.margin=3
//! output.dir=runs/wn18-sphere
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are errors. Everything except `dataset.train` and `output.dir` has a
//! default; [`RunConfig::to_pairs`] always writes every key, so a rendered
//! config reparses to an equal value.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::eval::EvalOptions;
use crate::kernel::Kernel;
use crate::manifold::{Manifold, ModelSpec};
use crate::train::{default_projection, TrainConfig};
use crate::{Error, Result};

const KEYS: &[&str] = &[
    "dataset.train",
    "dataset.valid",
    "dataset.test",
    "model.manifold",
    "model.kernel",
    "model.dim",
    "model.absolute",
    "model.baseline",
    "train.lr",
    "train.margin",
    "train.epochs",
    "train.seed",
    "train.neg_sampling",
    "train.workers",
    "train.batch",
    "train.project",
    "eval.hits",
    "eval.raw",
    "eval.filter",
    "output.dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train_path: PathBuf,
    pub valid_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Paper defaults for the given data and output locations.
    pub fn new(train_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            train_path: train_path.into(),
            valid_path: None,
            test_path: None,
            train: TrainConfig::new(ModelSpec::sphere(Kernel::Linear), 100),
            eval: EvalOptions::default(),
            output_dir: output_dir.into(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            let key = key.trim();
            if pairs
                .insert(key.to_owned(), value.trim().to_owned())
                .is_some()
            {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Self::from_pairs(&pairs)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(key) = pairs.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let get = |key: &str| pairs.get(key).map(String::as_str);
        let required =
            |key: &'static str| get(key).ok_or_else(|| Error::Config(format!("missing `{key}`")));
        fn value<T: FromStr>(key: &str, v: Option<&str>, default: T) -> Result<T> {
            match v {
                None => Ok(default),
                Some(s) => s
                    .parse()
                    .map_err(|_| Error::Config(format!("bad value `{s}` for `{key}`"))),
            }
        }

        let kernel: Kernel = get("model.kernel").map_or(Ok(Kernel::Linear), str::parse)?;
        let absolute = value("model.absolute", get("model.absolute"), false)?;
        let baseline = value("model.baseline", get("model.baseline"), false)?;
        let manifold = match get("model.manifold").unwrap_or("sphere") {
            "sphere" => Manifold::Sphere,
            "hyperplane" => Manifold::Hyperplane { absolute },
            other => {
                return Err(Error::Config(format!(
                    "model.manifold must be sphere or hyperplane, got `{other}`"
                )))
            }
        };
        if absolute && manifold == Manifold::Sphere {
            return Err(Error::Config(
                "model.absolute applies to the hyperplane manifold only".into(),
            ));
        }
        let spec = ModelSpec {
            manifold,
            kernel,
            baseline,
        };
        spec.validate()?;

        let mut train = TrainConfig::new(spec, value("model.dim", get("model.dim"), 100)?);
        train.learning_rate = value("train.lr", get("train.lr"), train.learning_rate)?;
        train.margin = value("train.margin", get("train.margin"), train.margin)?;
        train.epochs = value("train.epochs", get("train.epochs"), train.epochs)?;
        train.seed = value("train.seed", get("train.seed"), train.seed)?;
        train.sampling = get("train.neg_sampling").map_or(Ok(train.sampling), str::parse)?;
        train.workers = value("train.workers", get("train.workers"), train.workers)?;
        train.batch_size = value("train.batch", get("train.batch"), train.batch_size)?;
        train.project_entities = value(
            "train.project",
            get("train.project"),
            default_projection(&spec),
        )?;
        train.validate()?;

        let mut eval = EvalOptions::default();
        if let Some(list) = get("eval.hits") {
            eval.hits = parse_hits(list)?;
        }
        eval.raw = value("eval.raw", get("eval.raw"), eval.raw)?;
        eval.filter = value("eval.filter", get("eval.filter"), eval.filter)?;

        Ok(RunConfig {
            train_path: required("dataset.train")?.into(),
            valid_path: get("dataset.valid").map(PathBuf::from),
            test_path: get("dataset.test").map(PathBuf::from),
            train,
            eval,
            output_dir: required("output.dir")?.into(),
        })
    }

    /// Every key with its canonical value.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let t = &self.train;
        let (manifold, absolute) = match t.spec.manifold {
            Manifold::Sphere => ("sphere", false),
            Manifold::Hyperplane { absolute } => ("hyperplane", absolute),
        };
        let path = |p: &Path| p.to_string_lossy().into_owned();
        let mut pairs: Vec<(&str, String)> = vec![
            ("dataset.train", path(&self.train_path)),
            ("model.manifold", manifold.into()),
            ("model.kernel", t.spec.kernel.to_string()),
            ("model.dim", t.dim.to_string()),
            ("model.absolute", absolute.to_string()),
            ("model.baseline", t.spec.baseline.to_string()),
            ("train.lr", t.learning_rate.to_string()),
            ("train.margin", t.margin.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.neg_sampling", t.sampling.to_string()),
            ("train.workers", t.workers.to_string()),
            ("train.batch", t.batch_size.to_string()),
            ("train.project", t.project_entities.to_string()),
            (
                "eval.hits",
                self.eval
                    .hits
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("eval.raw", self.eval.raw.to_string()),
            ("eval.filter", self.eval.filter.to_string()),
            ("output.dir", path(&self.output_dir)),
        ];
        if let Some(p) = &self.valid_path {
            pairs.push(("dataset.valid", path(p)));
        }
        if let Some(p) = &self.test_path {
            pairs.push(("dataset.test", path(p)));
        }
        pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
    }

    pub fn render(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Checks that every referenced dataset file exists.
    pub fn validate_paths(&self) -> Result<()> {
        let paths = [
            Some(&self.train_path),
            self.valid_path.as_ref(),
            self.test_path.as_ref(),
        ];
        for p in paths.into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "dataset file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RunConfig::parse(s)
    }
}

/// Comma-separated HITS@N cut-offs, e.g. `1,3,10`. Duplicates collapse.
pub fn parse_hits(list: &str) -> Result<Vec<usize>> {
    let mut hits = list
        .split(',')
        .map(|s| match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("bad HITS@N cut-off `{}`", s.trim()))),
        })
        .collect::<Result<Vec<_>>>()?;
    hits.sort_unstable();
    hits.dedup();
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::Sampling;
    use proptest::prelude::*;

    const WN18: &str = "\
# WN18 sphere
dataset.train = data/train.txt
dataset.test=data/test.txt

model.dim=100
train.lr=0.001
train.margin=3.0
output.dir=out
";

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::parse(WN18).unwrap();
        assert_eq!(c.train_path, Path::new("data/train.txt"));
        assert_eq!(c.valid_path, None);
        assert_eq!(c.train.spec, ModelSpec::sphere(Kernel::Linear));
        assert_eq!(c.train.epochs, 2000);
        assert_eq!(c.train.sampling, Sampling::Bern);
        assert!(c.train.project_entities);
        assert_eq!(c.eval.hits, [1, 3, 10]);
    }

    #[test]
    fn variants() {
        let base = "dataset.train=a\noutput.dir=o\n";
        let c = RunConfig::parse(&format!(
            "{base}model.manifold=hyperplane\nmodel.kernel=poly:2:1\n"
        ))
        .unwrap();
        assert_eq!(
            c.train.spec,
            ModelSpec::hyperplane(Kernel::polynomial(2, 1.0).unwrap(), false)
        );
        assert!(!c.train.project_entities);
        let c = RunConfig::parse(&format!("{base}model.baseline=true\n")).unwrap();
        assert_eq!(c.train.spec, ModelSpec::transe());
        let c = RunConfig::parse(&format!(
            "{base}model.manifold=hyperplane\nmodel.absolute=true\n"
        ))
        .unwrap();
        assert_eq!(c.train.spec, ModelSpec::hyperplane(Kernel::Linear, true));
    }

    #[test]
    fn rejects_bad_input() {
        let base = "dataset.train=a\noutput.dir=o\n";
        for extra in [
            "model.manifold=torus",
            "model.kernel=rbf",
            "model.manifold=hyperplane\nmodel.absolute=true\nmodel.kernel=gaussian:1",
            "model.absolute=true",
            "model.manifold=hyperplane\nmodel.baseline=true",
            "model.dim=0",
            "train.lr=-1",
            "train.margin=abc",
            "train.neg_sampling=mixed",
            "train.workers=0",
            "eval.hits=0,10",
            "colour=blue",
            "just a line",
            "dataset.train=b",
        ] {
            assert!(
                RunConfig::parse(&format!("{base}{extra}\n")).is_err(),
                "{extra}"
            );
        }
        assert!(RunConfig::parse("output.dir=o\n").is_err());
        assert!(RunConfig::parse("dataset.train=a\n").is_err());
    }

    #[test]
    fn hits_list() {
        assert_eq!(parse_hits("10, 1,3,1").unwrap(), [1, 3, 10]);
        assert!(parse_hits("").is_err());
    }

    #[test]
    fn missing_dataset_file() {
        let c = RunConfig::new("/nonexistent/train.txt", "out");
        assert!(c.validate_paths().is_err());
    }

    fn arb_spec() -> impl Strategy<Value = ModelSpec> {
        let kernel = prop_oneof![
            Just(Kernel::Linear),
            (1e-3f64..10.0).prop_map(|sigma| Kernel::Gaussian { sigma }),
            (1u32..5, 0.0f64..3.0)
                .prop_map(|(degree, offset)| Kernel::Polynomial { degree, offset }),
        ];
        (kernel, 0u8..4).prop_map(|(kernel, v)| match v {
            0 => ModelSpec::sphere(kernel),
            1 => ModelSpec::hyperplane(kernel, false),
            2 => ModelSpec::transe_kernel(kernel),
            _ => ModelSpec::hyperplane(Kernel::Linear, true),
        })
    }

    proptest! {
        #[test]
        fn render_round_trips(
            spec in arb_spec(),
            dim in 1usize..500,
            lr in 0.0f64..1.0,
            margin in 1e-3f64..10.0,
            epochs in 0usize..5000,
            seed in any::<u64>(),
            unif in any::<bool>(),
            workers in 1usize..16,
            batch in 1usize..64,
            project in any::<bool>(),
            hits in prop::collection::btree_set(1usize..100, 1..5),
            raw in any::<bool>(),
            filter in any::<bool>(),
            valid in any::<bool>(),
        ) {
            let mut c = RunConfig::new("data/train file.txt", "runs/x");
            c.valid_path = valid.then(|| PathBuf::from("data/valid.txt"));
            c.train = TrainConfig {
                spec, dim, learning_rate: lr, margin, epochs, seed,
                sampling: if unif { Sampling::Unif } else { Sampling::Bern },
                workers, batch_size: batch, project_entities: project,
            };
            c.eval = EvalOptions { hits: hits.into_iter().collect(), raw, filter };
            prop_assert_eq!(RunConfig::parse(&c.render()).unwrap(), c.clone());
            prop_assert_eq!(RunConfig::from_pairs(&c.to_pairs()).unwrap(), c);
        }
    }
}
