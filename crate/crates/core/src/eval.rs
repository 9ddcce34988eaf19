//! Link prediction: corrupt each test triple's head (or tail) with every
//! entity, rank the gold triple among the corruptions and report HITS@N in
//! the raw and filtered settings.
//!
//! Scores are distances, so ranking is ascending. Ties are pessimistic: a
//! corruption scoring equal to the gold triple counts ahead of it.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{Category, FilterIndex, RelationStats, Triple, TripleSet};
use crate::model::EmbeddingModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Predict the head of `(?, r, t)`.
    Head,
    /// Predict the tail of `(h, r, ?)`.
    Tail,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Head, Direction::Tail];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Head => "head",
            Direction::Tail => "tail",
        }
    }

    fn gold(self, t: &Triple) -> usize {
        match self {
            Direction::Head => t.head,
            Direction::Tail => t.tail,
        }
    }

    fn replace(self, t: &Triple, e: usize) -> Triple {
        match self {
            Direction::Head => t.with_head(e),
            Direction::Tail => t.with_tail(e),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankResult {
    pub query: Triple,
    pub direction: Direction,
    pub raw: usize,
    pub filtered: usize,
}

/// Ranks `query` against every corruption in `direction`.
///
/// `raw = 1 + #{e ≠ gold : f(e) ≤ f(gold)}`; the filtered rank skips
/// corruptions found in `filter`. A non-finite gold score ranks last;
/// non-finite corruption scores never rank ahead.
pub fn rank_entity(
    query: &Triple,
    direction: Direction,
    model: &EmbeddingModel,
    filter: &FilterIndex,
) -> RankResult {
    let gold_entity = direction.gold(query);
    let gold = model.score_unchecked(query);
    let e = model.num_entities();
    if !gold.is_finite() {
        return RankResult {
            query: *query,
            direction,
            raw: e,
            filtered: e,
        };
    }
    let mut raw = 1;
    let mut filtered = 1;
    for candidate in 0..e {
        if candidate == gold_entity {
            continue;
        }
        let corrupted = direction.replace(query, candidate);
        if model.score_unchecked(&corrupted) <= gold {
            raw += 1;
            if !filter.contains(&corrupted) {
                filtered += 1;
            }
        }
    }
    RankResult {
        query: *query,
        direction,
        raw,
        filtered,
    }
}

/// Head and tail ranks for every test triple, in test order.
pub fn rank_all(
    test: &TripleSet,
    model: &EmbeddingModel,
    filter: &FilterIndex,
) -> Result<Vec<RankResult>> {
    for t in &test.triples {
        model.check(t)?;
    }
    Ok(test
        .triples
        .par_iter()
        .flat_map_iter(|t| Direction::BOTH.map(|d| rank_entity(t, d, model, filter)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub hits: Vec<usize>,
    pub raw: bool,
    pub filter: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            hits: vec![1, 3, 10],
            raw: true,
            filter: true,
        }
    }
}

/// HITS@N keyed by `N`.
pub type Hits = BTreeMap<usize, f64>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SettingMetrics<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub queries: usize,
    pub hits: SettingMetrics<Hits>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Ranked queries (two per test triple).
    pub queries: usize,
    pub hits: SettingMetrics<Hits>,
    /// `direction → category → metrics`, categories present in the test set only.
    pub by_category: BTreeMap<Direction, BTreeMap<Category, CategoryMetrics>>,
    pub mean_rank: SettingMetrics<f64>,
    /// Values computed but conventionally unreported (raw HITS@1).
    pub flagged: Vec<String>,
    pub wall_seconds: f64,
}

impl MetricsReport {
    /// Builds a report from ranks. Queries whose relation has no training
    /// statistics are left out of the category breakdown.
    pub fn from_ranks(ranks: &[RankResult], stats: &RelationStats, options: &EvalOptions) -> Self {
        let hits = |subset: &[&RankResult]| SettingMetrics {
            raw: options
                .raw
                .then(|| hits_at(subset.iter().map(|r| r.raw), &options.hits)),
            filter: options
                .filter
                .then(|| hits_at(subset.iter().map(|r| r.filtered), &options.hits)),
        };
        let all: Vec<&RankResult> = ranks.iter().collect();

        let mut by_category: BTreeMap<Direction, BTreeMap<Category, CategoryMetrics>> =
            BTreeMap::new();
        for direction in Direction::BOTH {
            for category in Category::ALL {
                let subset: Vec<&RankResult> = ranks
                    .iter()
                    .filter(|r| {
                        r.direction == direction
                            && stats.category(r.query.relation) == Some(category)
                    })
                    .collect();
                if !subset.is_empty() {
                    by_category.entry(direction).or_default().insert(
                        category,
                        CategoryMetrics {
                            queries: subset.len(),
                            hits: hits(&subset),
                        },
                    );
                }
            }
        }

        let mean = |f: fn(&RankResult) -> usize| {
            (!ranks.is_empty())
                .then(|| ranks.iter().map(|r| f(r) as f64).sum::<f64>() / ranks.len() as f64)
        };
        let mean_rank = SettingMetrics {
            raw: if options.raw { mean(|r| r.raw) } else { None },
            filter: if options.filter {
                mean(|r| r.filtered)
            } else {
                None
            },
        };
        let flagged = if options.raw && options.hits.contains(&1) {
            vec!["hits.raw.1".to_owned()]
        } else {
            Vec::new()
        };

        MetricsReport {
            queries: ranks.len(),
            hits: hits(&all),
            by_category,
            mean_rank,
            flagged,
            wall_seconds: 0.0,
        }
    }
}

/// Fraction of ranks `≤ N` for each requested `N`.
pub fn hits_at<I>(ranks: I, ns: &[usize]) -> Hits
where
    I: IntoIterator<Item = usize>,
{
    let ranks: Vec<usize> = ranks.into_iter().collect();
    ns.iter()
        .map(|&n| {
            let v = if ranks.is_empty() {
                0.0
            } else {
                ranks.iter().filter(|&&r| r <= n).count() as f64 / ranks.len() as f64
            };
            (n, v)
        })
        .collect()
}

/// Ranks both directions of every test triple and aggregates HITS@N, mean
/// rank and the relation-category breakdown.
pub fn link_prediction_eval(
    test: &TripleSet,
    model: &EmbeddingModel,
    filter: &FilterIndex,
    stats: &RelationStats,
    options: &EvalOptions,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::Empty("link prediction needs test triples"));
    }
    if options.hits.contains(&0) {
        return Err(Error::Config("HITS@N needs N ≥ 1".into()));
    }
    let started = Instant::now();
    let ranks = rank_all(test, model, filter)?;
    let mut report = MetricsReport::from_ranks(&ranks, stats, options);
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}
