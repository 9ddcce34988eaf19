//! Triple classification: a triple is predicted true iff its score is below
//! a per-relation threshold tuned on labeled validation data.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::graph::{TripleSet, Vocabulary};
use crate::model::EmbeddingModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub threshold: f64,
    /// Accuracy of the threshold on the data it was tuned on.
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub per_relation: BTreeMap<usize, Tuned>,
    /// Tuned over all validation triples; used for relations that are
    /// missing from validation or lack one of the two classes there.
    pub global: Tuned,
}

impl ThresholdTable {
    pub fn threshold(&self, relation: usize) -> f64 {
        self.per_relation
            .get(&relation)
            .unwrap_or(&self.global)
            .threshold
    }

    pub fn uses_fallback(&self, relation: usize) -> bool {
        !self.per_relation.contains_key(&relation)
    }
}

/// Best threshold for the rule `score < σ → positive`.
///
/// Candidates are the midpoints between consecutive distinct scores plus one
/// point below the minimum and one above the maximum; among equally accurate
/// candidates the smallest wins. Returns `(σ, correct)`.
pub fn best_threshold(scored: &[(f64, bool)]) -> (f64, usize) {
    let mut items: Vec<(f64, bool)> = scored
        .iter()
        .map(|&(s, l)| (if s.is_nan() { f64::INFINITY } else { s }, l))
        .collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut finite: Vec<f64> = items
        .iter()
        .map(|x| x.0)
        .filter(|s| s.is_finite())
        .collect();
    finite.dedup();
    let candidates: Vec<f64> = match (finite.first(), finite.last()) {
        (Some(&lo), Some(&hi)) => std::iter::once(lo - 1.0)
            .chain(finite.windows(2).map(|w| 0.5 * (w[0] + w[1])))
            .chain(std::iter::once(hi + 1.0))
            .collect(),
        _ => vec![0.0],
    };

    let negatives = items.iter().filter(|x| !x.1).count();
    let (mut pos_below, mut neg_below, mut next) = (0, 0, 0);
    let mut best = (candidates[0], 0);
    let mut first = true;
    for c in candidates {
        while next < items.len() && items[next].0 < c {
            if items[next].1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            next += 1;
        }
        let correct = pos_below + negatives - neg_below;
        if first || correct > best.1 {
            best = (c, correct);
            first = false;
        }
    }
    best
}

fn tuned(scored: &[(f64, bool)]) -> Tuned {
    let (threshold, correct) = best_threshold(scored);
    Tuned {
        threshold,
        accuracy: correct as f64 / scored.len().max(1) as f64,
        count: scored.len(),
    }
}

/// Per-relation thresholds from a labeled validation set.
pub fn tune_thresholds(valid: &TripleSet, model: &EmbeddingModel) -> Result<ThresholdTable> {
    if valid.is_empty() {
        return Err(Error::Empty("threshold tuning needs validation triples"));
    }
    let mut groups: BTreeMap<usize, Vec<(f64, bool)>> = BTreeMap::new();
    let mut pooled = Vec::with_capacity(valid.len());
    for (t, label) in valid.labeled_iter()? {
        let s = model.score(t)?;
        groups.entry(t.relation).or_default().push((s, label));
        pooled.push((s, label));
    }
    let per_relation = groups
        .into_iter()
        .filter(|(_, g)| g.iter().any(|x| x.1) && g.iter().any(|x| !x.1))
        .map(|(r, g)| (r, tuned(&g)))
        .collect();
    Ok(ThresholdTable {
        per_relation,
        global: tuned(&pooled),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub threshold: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_relation: BTreeMap<usize, RelationAccuracy>,
}

/// Accuracy of `score < σ_r → positive` on a labeled set.
pub fn classify(
    test: &TripleSet,
    model: &EmbeddingModel,
    thresholds: &ThresholdTable,
) -> Result<ClassificationReport> {
    let mut per_relation: BTreeMap<usize, RelationAccuracy> = BTreeMap::new();
    let mut correct = 0;
    for (t, label) in test.labeled_iter()? {
        let threshold = thresholds.threshold(t.relation);
        let hit = (model.score(t)? < threshold) == label;
        correct += usize::from(hit);
        let entry = per_relation.entry(t.relation).or_insert(RelationAccuracy {
            correct: 0,
            total: 0,
            accuracy: 0.0,
            threshold,
            fallback: thresholds.uses_fallback(t.relation),
        });
        entry.correct += usize::from(hit);
        entry.total += 1;
    }
    for r in per_relation.values_mut() {
        r.accuracy = r.correct as f64 / r.total as f64;
    }
    let total = test.len();
    Ok(ClassificationReport {
        accuracy: if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        },
        correct,
        total,
        per_relation,
    })
}

/// Writes `head,relation,tail,label,score` rows (with a header) for every
/// labeled triple; returns the number of data rows.
pub fn export_scores<W: Write>(
    triples: &TripleSet,
    model: &EmbeddingModel,
    vocab: &Vocabulary,
    sink: W,
) -> Result<usize> {
    let mut out = csv::Writer::from_writer(sink);
    out.write_record(["head", "relation", "tail", "label", "score"])?;
    let mut rows = 0;
    for (t, label) in triples.labeled_iter()? {
        let name = |i: usize, entity: bool| {
            let n = if entity {
                vocab.entity_name(i)
            } else {
                vocab.relation_name(i)
            };
            n.ok_or(Error::OutOfBounds {
                what: if entity { "entity" } else { "relation" },
                index: i,
                len: if entity {
                    vocab.num_entities()
                } else {
                    vocab.num_relations()
                },
            })
        };
        let score = model.score(t)?;
        out.write_record([
            name(t.head, true)?,
            name(t.relation, false)?,
            name(t.tail, true)?,
            if label { "1" } else { "-1" },
            &score.to_string(),
        ])?;
        rows += 1;
    }
    out.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Split, Triple};
    use crate::manifold::ModelSpec;
    use proptest::prelude::*;

    /// Exhaustive: every achievable labelling of `score < σ` comes from σ
    /// equal to some score, or above all of them.
    fn brute_force_best(scored: &[(f64, bool)]) -> usize {
        scored
            .iter()
            .map(|x| x.0)
            .chain(std::iter::once(f64::INFINITY))
            .map(|sigma| scored.iter().filter(|&&(s, l)| (s < sigma) == l).count())
            .max()
            .unwrap()
    }

    #[test]
    fn separable_midpoint() {
        let (sigma, correct) =
            best_threshold(&[(0.1, true), (0.2, true), (0.5, false), (0.9, false)]);
        assert!((sigma - 0.35).abs() < 1e-15);
        assert_eq!(correct, 4);
    }

    #[test]
    fn ties_prefer_smaller_threshold() {
        // Both 0 and 2 correct for σ below 1, or above 3; smaller wins.
        let (sigma, correct) = best_threshold(&[(1.0, false), (3.0, true)]);
        assert_eq!(correct, 1);
        assert_eq!(sigma, 0.0);
    }

    #[test]
    fn degenerate_class_falls_back() {
        // Relation 0: both classes. Relation 1: positives only.
        let mut m = EmbeddingModel::zeros(ModelSpec::transe(), 4, 2, 1).unwrap();
        for i in 0..4 {
            m.entities.row_mut(i)[0] = i as f64;
        }
        let valid = TripleSet::labeled(
            Split::Valid,
            vec![
                Triple::new(0, 0, 0),
                Triple::new(0, 0, 3),
                Triple::new(1, 1, 1),
                Triple::new(2, 1, 2),
            ],
            vec![true, false, true, true],
        )
        .unwrap();
        let table = tune_thresholds(&valid, &m).unwrap();
        assert!(!table.uses_fallback(0));
        assert!(table.uses_fallback(1));
        assert!(table.uses_fallback(7));
        assert_eq!(table.threshold(0), 4.5);

        let report = classify(&valid, &m, &table).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert!(report.per_relation[&1].fallback);
    }

    #[test]
    fn constant_negative_predictor_on_balanced_set() {
        let m = EmbeddingModel::zeros(ModelSpec::transe(), 2, 1, 1).unwrap();
        let test = TripleSet::labeled(
            Split::Test,
            vec![Triple::new(0, 0, 1), Triple::new(1, 0, 0)],
            vec![true, false],
        )
        .unwrap();
        let table = ThresholdTable {
            per_relation: BTreeMap::new(),
            global: Tuned {
                threshold: f64::NEG_INFINITY,
                accuracy: 0.0,
                count: 0,
            },
        };
        assert_eq!(classify(&test, &m, &table).unwrap().accuracy, 0.5);
    }

    #[test]
    fn errors() {
        let m = EmbeddingModel::zeros(ModelSpec::transe(), 2, 1, 1).unwrap();
        assert!(tune_thresholds(&TripleSet::empty(Split::Valid), &m).is_err());
        let unlabeled = TripleSet::new(Split::Valid, vec![Triple::new(0, 0, 1)]);
        assert!(tune_thresholds(&unlabeled, &m).is_err());
    }

    #[test]
    fn export_rows() {
        let vocab = Vocabulary::from_names(["a", "b", "c"], ["r"]);
        let mut m = EmbeddingModel::zeros(ModelSpec::transe(), 3, 1, 1).unwrap();
        m.entities.row_mut(1)[0] = 0.5;
        let set = TripleSet::labeled(
            Split::Test,
            vec![
                Triple::new(0, 0, 1),
                Triple::new(1, 0, 2),
                Triple::new(2, 0, 0),
            ],
            vec![true, false, true],
        )
        .unwrap();
        let mut buf = Vec::new();
        assert_eq!(export_scores(&set, &m, &vocab, &mut buf).unwrap(), 3);
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            [
                "head,relation,tail,label,score",
                "a,r,b,1,0.25",
                "b,r,c,-1,0.25",
                "c,r,a,1,0"
            ]
        );

        let mut buf = Vec::new();
        let empty = TripleSet::labeled(Split::Test, vec![], vec![]).unwrap();
        assert_eq!(export_scores(&empty, &m, &vocab, &mut buf).unwrap(), 0);
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "head,relation,tail,label,score\n"
        );
    }

    proptest! {
        #[test]
        fn threshold_is_optimal(scored in prop::collection::vec((0u8..12, any::<bool>()), 1..40)) {
            // Coarse scores force plenty of ties.
            let scored: Vec<(f64, bool)> = scored.into_iter().map(|(s, l)| (f64::from(s) / 4.0, l)).collect();
            let (sigma, correct) = best_threshold(&scored);
            prop_assert_eq!(correct, brute_force_best(&scored));
            prop_assert_eq!(scored.iter().filter(|&&(s, l)| (s < sigma) == l).count(), correct);
        }
    }
}
