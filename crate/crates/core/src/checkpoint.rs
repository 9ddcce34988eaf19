//! Checkpoint directories.
//!
//! A checkpoint is a directory holding
//!
//! * `metadata.json`: format version, model spec, `d`, `E`, `R` and an echo
//!   of the run configuration;
//! * `vocab.json`: entity and relation names in index order;
//! * `tensors.bin`: a 16-byte header (`b"KGMTENSR"`, `u32` format version,
//!   `u32` tensor count) followed by each tensor as `u64 rows`, `u64 cols`
//!   and `rows × cols` `f64` values, all little-endian. Tensor order: entity
//!   matrix, relation matrix (`r` or `r_head`), `r_tail` for hyperplanes,
//!   then `D_r` as an `R × 1` tensor.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::Vocabulary;
use crate::kernel::Kernel;
use crate::manifold::{Manifold, ModelSpec};
use crate::model::{EmbeddingModel, Matrix};

pub const FORMAT_VERSION: u32 = 1;
pub const MAGIC: &[u8; 8] = b"KGMTENSR";
pub const METADATA_FILE: &str = "metadata.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const TENSORS_FILE: &str = "tensors.bin";

const HEADER_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("not a tensor file (bad magic)")]
    BadMagic,

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("shape mismatch in {tensor}: metadata says {expected:?}, file has {found:?}")]
    Shape {
        tensor: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("inconsistent checkpoint: {0}")]
    Inconsistent(String),

    #[error("bad metadata: {0}")]
    Metadata(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub format_version: u32,
    pub manifold: Manifold,
    pub kernel: Kernel,
    pub baseline: bool,
    pub dim: usize,
    pub entities: usize,
    pub relations: usize,
    /// Run configuration echo, as `key → value` config pairs.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

impl Metadata {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            manifold: self.manifold,
            kernel: self.kernel,
            baseline: self.baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VocabFile {
    entities: Vec<String>,
    relations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: Metadata,
    pub vocab: Vocabulary,
    pub model: EmbeddingModel,
}

/// Writes `model` and `vocab` to the directory `dir`, creating it if needed.
pub fn save_checkpoint(
    dir: &Path,
    model: &EmbeddingModel,
    vocab: &Vocabulary,
    config: &BTreeMap<String, String>,
) -> Result<()> {
    if vocab.num_entities() != model.num_entities()
        || vocab.num_relations() != model.num_relations()
    {
        return Err(CheckpointError::Inconsistent(format!(
            "vocabulary has {}×{} names, model has {}×{} rows",
            vocab.num_entities(),
            vocab.num_relations(),
            model.num_entities(),
            model.num_relations()
        )));
    }
    fs::create_dir_all(dir)?;
    let metadata = Metadata {
        format_version: FORMAT_VERSION,
        manifold: model.spec.manifold,
        kernel: model.spec.kernel,
        baseline: model.spec.baseline,
        dim: model.dim(),
        entities: model.num_entities(),
        relations: model.num_relations(),
        config: config.clone(),
    };
    fs::write(
        dir.join(METADATA_FILE),
        serde_json::to_string_pretty(&metadata)? + "\n",
    )?;
    let names = VocabFile {
        entities: vocab.entity_names().map(str::to_owned).collect(),
        relations: vocab.relation_names().map(str::to_owned).collect(),
    };
    fs::write(dir.join(VOCAB_FILE), serde_json::to_string(&names)? + "\n")?;

    let mut out = BufWriter::new(fs::File::create(dir.join(TENSORS_FILE))?);
    write_tensors(&mut out, model)?;
    out.flush()?;
    Ok(())
}

fn tensors_of(model: &EmbeddingModel) -> Vec<(usize, usize, &[f64])> {
    let mut tensors = vec![
        (model.num_entities(), model.dim(), model.entities.as_slice()),
        (
            model.num_relations(),
            model.dim(),
            model.relations.as_slice(),
        ),
    ];
    if let Some(m) = &model.relations_tail {
        tensors.push((m.rows(), m.cols(), m.as_slice()));
    }
    tensors.push((model.manifold_params.len(), 1, &model.manifold_params));
    tensors
}

pub fn write_tensors<W: Write>(out: &mut W, model: &EmbeddingModel) -> io::Result<()> {
    let tensors = tensors_of(model);
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (rows, cols, data) in tensors {
        out.write_all(&(rows as u64).to_le_bytes())?;
        out.write_all(&(cols as u64).to_le_bytes())?;
        for x in data {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let metadata: Metadata = serde_json::from_slice(&fs::read(dir.join(METADATA_FILE))?)?;
    if metadata.format_version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: metadata.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let spec = metadata.spec();
    spec.validate()
        .map_err(|e| CheckpointError::Inconsistent(e.to_string()))?;

    let names: VocabFile = serde_json::from_slice(&fs::read(dir.join(VOCAB_FILE))?)?;
    if names.entities.len() != metadata.entities || names.relations.len() != metadata.relations {
        return Err(CheckpointError::Inconsistent(format!(
            "vocabulary lists {} entities and {} relations, metadata says {} and {}",
            names.entities.len(),
            names.relations.len(),
            metadata.entities,
            metadata.relations
        )));
    }
    let vocab = Vocabulary::from_names(names.entities, names.relations);
    if vocab.num_entities() != metadata.entities || vocab.num_relations() != metadata.relations {
        return Err(CheckpointError::Inconsistent(
            "duplicate names in vocabulary".into(),
        ));
    }

    let bytes = fs::read(dir.join(TENSORS_FILE))?;
    let model = read_tensors(&bytes, &metadata)?;
    Ok(Checkpoint {
        metadata,
        vocab,
        model,
    })
}

/// Parses `tensors.bin` against the shapes promised by `metadata`.
pub fn read_tensors(bytes: &[u8], metadata: &Metadata) -> Result<EmbeddingModel> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= MAGIC.len() && &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        return Err(CheckpointError::Truncated(format!(
            "header is {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;

    let spec = metadata.spec();
    let (e, r, d) = (metadata.entities, metadata.relations, metadata.dim);
    let mut expected: Vec<(&'static str, usize, usize)> =
        vec![("entities", e, d), ("relations", r, d)];
    if spec.has_tail_relation() {
        expected.push(("relations_tail", r, d));
    }
    expected.push(("manifold_params", r, 1));
    if count != expected.len() {
        return Err(CheckpointError::Inconsistent(format!(
            "{count} tensors in file, {} expected for {spec}",
            expected.len()
        )));
    }

    let mut cursor = Cursor {
        bytes,
        pos: HEADER_LEN,
    };
    let mut tensors = Vec::with_capacity(count);
    for (name, rows, cols) in expected {
        let found_rows = cursor.u64(name)? as usize;
        let found_cols = cursor.u64(name)? as usize;
        if (found_rows, found_cols) != (rows, cols) {
            return Err(CheckpointError::Shape {
                tensor: name,
                expected: (rows, cols),
                found: (found_rows, found_cols),
            });
        }
        tensors.push(cursor.f64s(name, rows * cols)?);
    }
    if cursor.pos != bytes.len() {
        return Err(CheckpointError::Inconsistent(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - cursor.pos
        )));
    }

    let mut tensors = tensors.into_iter();
    let mut next = |rows: usize, cols: usize| {
        Matrix::from_vec(rows, cols, tensors.next().expect("tensor count checked"))
            .expect("shape checked")
    };
    let entities = next(e, d);
    let relations = next(r, d);
    let relations_tail = spec.has_tail_relation().then(|| next(r, d));
    let manifold_params = next(r, 1).into_vec();
    Ok(EmbeddingModel {
        spec,
        entities,
        relations,
        relations_tail,
        manifold_params,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| {
                CheckpointError::Truncated(format!(
                    "{what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, what: &str, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| CheckpointError::Truncated(what.to_owned()))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{init_model, TrainConfig};

    fn fixture(spec: ModelSpec) -> (EmbeddingModel, Vocabulary) {
        let vocab = Vocabulary::from_names(["a", "b", "c"], ["r", "s"]);
        let mut cfg = TrainConfig::new(spec, 4);
        cfg.seed = 9;
        (init_model(&vocab, &cfg).unwrap(), vocab)
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (model, vocab) = fixture(ModelSpec::hyperplane(Kernel::Linear, true));
        let mut echo = BTreeMap::new();
        echo.insert("train.lr".to_owned(), "0.001".to_owned());
        save_checkpoint(dir.path(), &model, &vocab, &echo).unwrap();
        let ck = load_checkpoint(dir.path()).unwrap();
        assert_eq!(ck.model, model);
        assert_eq!(ck.vocab, vocab);
        assert_eq!(ck.metadata.config, echo);
    }

    #[test]
    fn truncated_tensor_section() {
        let dir = tempfile::tempdir().unwrap();
        let (model, vocab) = fixture(ModelSpec::sphere(Kernel::Linear));
        save_checkpoint(dir.path(), &model, &vocab, &BTreeMap::new()).unwrap();
        let path = dir.path().join(TENSORS_FILE);
        let bytes = fs::read(&path).unwrap();
        for cut in [3, 15, 20, 40, bytes.len() - 1] {
            fs::write(&path, &bytes[..cut]).unwrap();
            match load_checkpoint(dir.path()) {
                Err(CheckpointError::Truncated(_)) => {}
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn shape_disagreement() {
        let (model, vocab) = fixture(ModelSpec::sphere(Kernel::Linear));
        let mut bytes = Vec::new();
        write_tensors(&mut bytes, &model).unwrap();
        let metadata = Metadata {
            format_version: FORMAT_VERSION,
            manifold: Manifold::Sphere,
            kernel: Kernel::Linear,
            baseline: false,
            dim: 5,
            entities: vocab.num_entities(),
            relations: vocab.num_relations(),
            config: BTreeMap::new(),
        };
        assert!(matches!(
            read_tensors(&bytes, &metadata),
            Err(CheckpointError::Shape {
                tensor: "entities",
                expected: (3, 5),
                found: (3, 4)
            })
        ));
    }

    #[test]
    fn version_and_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (model, vocab) = fixture(ModelSpec::transe());
        save_checkpoint(dir.path(), &model, &vocab, &BTreeMap::new()).unwrap();
        let path = dir.path().join(TENSORS_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes[8] = 9;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()),
            Err(CheckpointError::VersionMismatch {
                found: 9,
                expected: FORMAT_VERSION
            })
        ));
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()),
            Err(CheckpointError::BadMagic)
        ));

        let meta_path = dir.path().join(METADATA_FILE);
        let text = fs::read_to_string(&meta_path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 2");
        fs::write(&meta_path, text).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()),
            Err(CheckpointError::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn vocabulary_must_match_model() {
        let dir = tempfile::tempdir().unwrap();
        let (model, _) = fixture(ModelSpec::transe());
        let wrong = Vocabulary::from_names(["a"], ["r", "s"]);
        assert!(matches!(
            save_checkpoint(dir.path(), &model, &wrong, &BTreeMap::new()),
            Err(CheckpointError::Inconsistent(_))
        ));
    }
}
