//! Dataset ingestion: vocabulary, triple files, relation statistics and the
//! filter index used by the "filter" ranking setting.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Category cutoff on tails-per-head / heads-per-tail.
pub const DEFAULT_CATEGORY_CUTOFF: f64 = 1.5;

/// Dense, insertion-ordered name ↔ index maps for entities and relations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entities: IndexSet<String>,
    relations: IndexSet<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<E, R>(entities: E, relations: R) -> Self
    where
        E: IntoIterator,
        E::Item: Into<String>,
        R: IntoIterator,
        R::Item: Into<String>,
    {
        Vocabulary {
            entities: entities.into_iter().map(Into::into).collect(),
            relations: relations.into_iter().map(Into::into).collect(),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entities.get_index_of(name)
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.get_index_of(name)
    }

    pub fn entity_name(&self, index: usize) -> Option<&str> {
        self.entities.get_index(index).map(String::as_str)
    }

    pub fn relation_name(&self, index: usize) -> Option<&str> {
        self.relations.get_index(index).map(String::as_str)
    }

    /// Index of `name`, appending it if unseen.
    pub fn intern_entity(&mut self, name: &str) -> usize {
        match self.entities.get_index_of(name) {
            Some(i) => i,
            None => self.entities.insert_full(name.to_owned()).0,
        }
    }

    pub fn intern_relation(&mut self, name: &str) -> usize {
        match self.relations.get_index_of(name) {
            Some(i) => i,
            None => self.relations.insert_full(name.to_owned()).0,
        }
    }

    pub fn entity_names(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(String::as_str)
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &str> {
        self.relations.iter().map(String::as_str)
    }

    /// Checks every index of `triple` against the vocabulary bounds.
    pub fn check(&self, triple: &Triple) -> Result<()> {
        let e = self.num_entities();
        for index in [triple.head, triple.tail] {
            if index >= e {
                return Err(Error::OutOfBounds {
                    what: "entity",
                    index,
                    len: e,
                });
            }
        }
        if triple.relation >= self.num_relations() {
            return Err(Error::OutOfBounds {
                what: "relation",
                index: triple.relation,
                len: self.num_relations(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub const fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }

    pub const fn with_head(self, head: usize) -> Self {
        Triple { head, ..self }
    }

    pub const fn with_tail(self, tail: usize) -> Self {
        Triple { tail, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

/// An ordered list of triples from one split, optionally carrying
/// true/false labels (classification data).
#[derive(Debug, Clone, PartialEq)]
pub struct TripleSet {
    pub split: Split,
    pub triples: Vec<Triple>,
    pub labels: Option<Vec<bool>>,
}

impl TripleSet {
    pub fn new(split: Split, triples: Vec<Triple>) -> Self {
        TripleSet {
            split,
            triples,
            labels: None,
        }
    }

    pub fn labeled(split: Split, triples: Vec<Triple>, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != triples.len() {
            return Err(Error::DimensionMismatch {
                left: triples.len(),
                right: labels.len(),
            });
        }
        Ok(TripleSet {
            split,
            triples,
            labels: Some(labels),
        })
    }

    pub fn empty(split: Split) -> Self {
        TripleSet::new(split, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// `(triple, label)` pairs; errors if the set is unlabeled.
    pub fn labeled_iter(&self) -> Result<impl Iterator<Item = (&Triple, bool)>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} set has no labels", self.split)))?;
        Ok(self.triples.iter().zip(labels.iter().copied()))
    }
}

/// Reads tab-separated triples, appending unseen names to `vocab` in
/// first-encounter order.
pub fn load_triples<R: BufRead>(
    source: R,
    vocab: &mut Vocabulary,
    split: Split,
    labeled: bool,
) -> Result<TripleSet> {
    read_lines(source, split, labeled, |h, r, t| {
        Ok(Triple::new(
            vocab.intern_entity(h),
            vocab.intern_relation(r),
            vocab.intern_entity(t),
        ))
    })
}

/// Like [`load_triples`] but against a frozen vocabulary: unknown names are
/// an error naming the offending entity or relation.
pub fn load_triples_known<R: BufRead>(
    source: R,
    vocab: &Vocabulary,
    split: Split,
    labeled: bool,
) -> Result<TripleSet> {
    read_lines(source, split, labeled, |h, r, t| {
        let entity = |name: &str| {
            vocab
                .entity_index(name)
                .ok_or_else(|| Error::UnknownEntity(name.to_owned()))
        };
        let relation = vocab
            .relation_index(r)
            .ok_or_else(|| Error::UnknownRelation(r.to_owned()))?;
        Ok(Triple::new(entity(h)?, relation, entity(t)?))
    })
}

fn read_lines<R, F>(source: R, split: Split, labeled: bool, mut resolve: F) -> Result<TripleSet>
where
    R: BufRead,
    F: FnMut(&str, &str, &str) -> Result<Triple>,
{
    let mut triples = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let number = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        let expected = if labeled { 4 } else { 3 };
        if fields.len() != expected {
            let message = if labeled && fields.len() == 3 {
                "label field missing".to_owned()
            } else {
                format!(
                    "expected {expected} tab-separated fields, found {}",
                    fields.len()
                )
            };
            return Err(Error::Parse {
                line: number,
                message,
            });
        }
        triples.push(resolve(fields[0], fields[1], fields[2])?);
        if labeled {
            labels.push(match fields[3].trim() {
                "1" => true,
                "-1" => false,
                other => {
                    return Err(Error::Parse {
                        line: number,
                        message: format!("label must be 1 or -1, found `{other}`"),
                    })
                }
            });
        }
    }
    Ok(TripleSet {
        split,
        triples,
        labels: labeled.then_some(labels),
    })
}

/// Relation mapping category derived from tails-per-head and heads-per-tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "1-1")]
    OneToOne,
    #[serde(rename = "1-N")]
    OneToMany,
    #[serde(rename = "N-1")]
    ManyToOne,
    #[serde(rename = "N-N")]
    ManyToMany,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::OneToOne,
        Category::OneToMany,
        Category::ManyToOne,
        Category::ManyToMany,
    ];

    pub fn classify(tph: f64, hpt: f64, cutoff: f64) -> Category {
        match (tph < cutoff, hpt < cutoff) {
            (true, true) => Category::OneToOne,
            (false, true) => Category::OneToMany,
            (true, false) => Category::ManyToOne,
            (false, false) => Category::ManyToMany,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::OneToOne => "1-1",
            Category::OneToMany => "1-N",
            Category::ManyToOne => "N-1",
            Category::ManyToMany => "N-N",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown relation category `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationStat {
    pub triples: usize,
    pub tph: f64,
    pub hpt: f64,
    pub category: Category,
}

/// Per-relation mapping statistics over a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationStats {
    cutoff: f64,
    stats: Vec<Option<RelationStat>>,
}

impl RelationStats {
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn get(&self, relation: usize) -> Result<&RelationStat> {
        self.stats
            .get(relation)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::UnknownRelation(format!("#{relation}")))
    }

    pub fn category(&self, relation: usize) -> Option<Category> {
        self.get(relation).ok().map(|s| s.category)
    }

    /// Probability of corrupting the head under Bernoulli sampling,
    /// `tph / (tph + hpt)`; 0.5 for relations without statistics.
    pub fn head_replacement_probability(&self, relation: usize) -> f64 {
        match self.get(relation) {
            Ok(s) => s.tph / (s.tph + s.hpt),
            Err(_) => 0.5,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &RelationStat)> {
        self.stats
            .iter()
            .enumerate()
            .filter_map(|(r, s)| s.as_ref().map(|s| (r, s)))
    }

    pub fn num_relations(&self) -> usize {
        self.stats.len()
    }
}

/// `tph = #triples / #distinct heads` and `hpt = #triples / #distinct tails`
/// per relation. Relations with no triple are left out.
pub fn compute_relation_stats(train: &TripleSet, cutoff: f64) -> Result<RelationStats> {
    if train.is_empty() {
        return Err(Error::Empty("relation statistics need training triples"));
    }
    if cutoff.is_nan() || cutoff <= 0.0 {
        return Err(Error::Domain(format!(
            "category cutoff must be positive, got {cutoff}"
        )));
    }
    let num_relations = train
        .triples
        .iter()
        .map(|t| t.relation + 1)
        .max()
        .unwrap_or(0);
    let mut counts = vec![0usize; num_relations];
    let mut heads: Vec<HashSet<usize>> = vec![HashSet::new(); num_relations];
    let mut tails: Vec<HashSet<usize>> = vec![HashSet::new(); num_relations];
    for t in &train.triples {
        counts[t.relation] += 1;
        heads[t.relation].insert(t.head);
        tails[t.relation].insert(t.tail);
    }
    let stats = (0..num_relations)
        .map(|r| {
            (counts[r] > 0).then(|| {
                let tph = counts[r] as f64 / heads[r].len() as f64;
                let hpt = counts[r] as f64 / tails[r].len() as f64;
                RelationStat {
                    triples: counts[r],
                    tph,
                    hpt,
                    category: Category::classify(tph, hpt, cutoff),
                }
            })
        })
        .collect();
    Ok(RelationStats { cutoff, stats })
}

/// Every known triple across the splits, plus `(h, r) → tails` and
/// `(r, t) → heads` adjacency.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    members: HashSet<Triple>,
    tails: HashMap<(usize, usize), Vec<usize>>,
    heads: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    pub fn from_splits<'a, I>(splits: I) -> Self
    where
        I: IntoIterator<Item = &'a TripleSet>,
    {
        let mut index = FilterIndex::default();
        for set in splits {
            for &t in &set.triples {
                index.insert(t);
            }
        }
        index
    }

    pub fn build(train: &TripleSet, valid: &TripleSet, test: &TripleSet) -> Self {
        FilterIndex::from_splits([train, valid, test])
    }

    pub fn insert(&mut self, t: Triple) -> bool {
        if !self.members.insert(t) {
            return false;
        }
        self.tails
            .entry((t.head, t.relation))
            .or_default()
            .push(t.tail);
        self.heads
            .entry((t.relation, t.tail))
            .or_default()
            .push(t.head);
        true
    }

    #[inline]
    pub fn contains(&self, t: &Triple) -> bool {
        self.members.contains(t)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn tails_of(&self, head: usize, relation: usize) -> &[usize] {
        self.tails.get(&(head, relation)).map_or(&[], Vec::as_slice)
    }

    pub fn heads_of(&self, relation: usize, tail: usize) -> &[usize] {
        self.heads.get(&(relation, tail)).map_or(&[], Vec::as_slice)
    }
}

/// `build_filter_index(train, valid, test)`.
pub fn build_filter_index(train: &TripleSet, valid: &TripleSet, test: &TripleSet) -> FilterIndex {
    FilterIndex::build(train, valid, test)
}

/// Triples per free parameter row, `T / (E + R)`. An embedding dimension at
/// or above this ratio gives at least as many free variables as manifold
/// equations.
pub fn illposedness_ratio(triples: usize, entities: usize, relations: usize) -> Result<f64> {
    let rows = entities + relations;
    if rows == 0 {
        return Err(Error::Domain("E + R must be positive".into()));
    }
    Ok(triples as f64 / rows as f64)
}

/// Dataset summary in the layout of the usual benchmark statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub relations: usize,
    pub entities: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub illposedness_ratio: f64,
    pub categories: std::collections::BTreeMap<String, usize>,
}

impl DatasetSummary {
    pub fn new(
        vocab: &Vocabulary,
        train: &TripleSet,
        valid: Option<&TripleSet>,
        test: Option<&TripleSet>,
        stats: &RelationStats,
    ) -> Result<Self> {
        let mut categories: std::collections::BTreeMap<String, usize> =
            Category::ALL.iter().map(|c| (c.to_string(), 0)).collect();
        for (_, s) in stats.iter() {
            *categories.entry(s.category.to_string()).or_default() += 1;
        }
        Ok(DatasetSummary {
            relations: vocab.num_relations(),
            entities: vocab.num_entities(),
            train: train.len(),
            valid: valid.map_or(0, TripleSet::len),
            test: test.map_or(0, TripleSet::len),
            illposedness_ratio: illposedness_ratio(
                train.len(),
                vocab.num_entities(),
                vocab.num_relations(),
            )?,
            categories,
        })
    }
}
