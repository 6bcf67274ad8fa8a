//! Domain types and the deterministic ranking primitive shared by the
//! trainers and metrics.
//!
//! Everything here is immutable after construction; the operations are pure
//! functions, so values can be shared freely across threads.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Real;

/// A record category ("marriage", "residence", ...). One shard / ranked list
/// exists per record type. Indices are assigned by [`TypeRegistry`] sorted
/// lexicographically by name, so they are stable across a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecordType {
    pub name: String,
    pub index: usize,
}

/// Registry assigning stable indices to record-type names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeRegistry {
    names: Vec<String>, // sorted lexicographically
}

impl TypeRegistry {
    /// Builds a registry from any collection of names; duplicates collapse.
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort();
        names.dedup();
        Self { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    pub fn get(&self, name: &str) -> Option<RecordType> {
        self.index_of(name).map(|index| RecordType {
            name: name.to_string(),
            index,
        })
    }
}

/// One candidate record.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub record_type: RecordType,
    /// Sparse feature vector, indices ascending.
    pub features: Vec<(u32, Real)>,
    /// Binary relevance grade.
    pub label: u8,
}

impl Document {
    pub fn feature(&self, index: u32) -> Real {
        self.features
            .binary_search_by_key(&index, |(i, _)| *i)
            .map(|pos| self.features[pos].1)
            .unwrap_or(0.0)
    }
}

/// All candidate documents for one query. In fusion datasets every document
/// carries a shard score (the record-specific model's prediction).
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub qid: String,
    pub documents: Vec<Document>,
    pub shard_scores: Option<HashMap<String, Real>>,
}

impl QueryGroup {
    pub fn labels_by_doc(&self) -> HashMap<String, u8> {
        self.documents
            .iter()
            .map(|d| (d.doc_id.clone(), d.label))
            .collect()
    }

    pub fn has_positive(&self) -> bool {
        self.documents.iter().any(|d| d.label > 0)
    }
}

/// Metadata attached to trained models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub objective: String,
    pub seed: u64,
    pub iterations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initializer: Option<String>,
}

/// Dense weight vector for record-specific ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<Real>,
    pub metadata: ModelMetadata,
}

/// One weight per record type for global collation. Keyed by type name so
/// serialization order is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub weights: BTreeMap<String, Real>,
    pub metadata: ModelMetadata,
}

impl FusionModel {
    /// Weights as a dense vector in registry order; errors on a type the
    /// model has never seen.
    pub fn weight_vector(&self, registry: &TypeRegistry) -> Result<Vec<Real>> {
        registry
            .names()
            .iter()
            .map(|name| {
                self.weights
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::UnknownRecordType(name.clone()))
            })
            .collect()
    }

    pub fn from_weight_vector(
        registry: &TypeRegistry,
        weights: &[Real],
        metadata: ModelMetadata,
    ) -> Self {
        let weights = registry
            .names()
            .iter()
            .cloned()
            .zip(weights.iter().copied())
            .collect();
        Self { weights, metadata }
    }
}

/// A scored, deterministically ordered list of documents: scores
/// non-increasing, ties broken by original input position.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking<S: Scalar> {
    entries: Vec<(String, S)>,
}

impl<S: Scalar> Ranking<S> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, S)] {
        &self.entries
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }
}

/// Stable descending sort by score. Equal scores keep input order, so the
/// result is deterministic regardless of thread count.
pub fn rank_by_score<S: Scalar>(docs: &[(String, S)]) -> Result<Ranking<S>> {
    for (doc_id, score) in docs {
        if !score.is_finite() {
            return Err(Error::NonFiniteScore {
                doc_id: doc_id.clone(),
            });
        }
    }
    let mut entries: Vec<(String, S)> = docs.to_vec();
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("scores checked finite"));
    Ok(Ranking { entries })
}

/// Score of a document under a linear model: sum over features of
/// weight times value. Feature indices outside the model contribute 0.
pub fn score_linear(model: &LinearModel, doc: &Document) -> Real {
    doc.features
        .iter()
        .map(|&(idx, val)| model.weights.get(idx as usize).copied().unwrap_or(0.0) * val)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pairs(v: &[(&str, Real)]) -> Vec<(String, Real)> {
        v.iter().map(|(id, s)| (id.to_string(), *s)).collect()
    }

    #[test]
    fn rank_by_score_worked_example_order() {
        // Scores from the customized toy-data ranking, fed out of order.
        let docs = pairs(&[("b", 1.67), ("a", 2.17), ("c", 1.17), ("d", 0.0)]);
        let ranking = rank_by_score(&docs).unwrap();
        let ids: Vec<&str> = ranking.doc_ids().collect();
        assert_eq!(ids, ["a", "b", "c", "d"]);
    }

    #[test]
    fn rank_by_score_ties_are_stable() {
        let ranking = rank_by_score(&pairs(&[("a", 1.0), ("b", 1.0)])).unwrap();
        let ids: Vec<&str> = ranking.doc_ids().collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn rank_by_score_rejects_non_finite() {
        let err = rank_by_score(&pairs(&[("a", f64::NAN)])).unwrap_err();
        assert!(matches!(err, Error::NonFiniteScore { .. }));
    }

    #[test]
    fn rank_by_score_matches_reference_sort() {
        // Independent oracle: index sort on (-score, position).
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let docs: Vec<(String, Real)> = (0..100)
            .map(|i| (format!("d{i}"), rng.gen_range(0.0..10.0)))
            .collect();
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.sort_by(|&a, &b| {
            docs[b]
                .1
                .partial_cmp(&docs[a].1)
                .unwrap()
                .then(a.cmp(&b))
        });
        let expected: Vec<&str> = order.iter().map(|&i| docs[i].0.as_str()).collect();
        let ranking = rank_by_score(&docs).unwrap();
        let got: Vec<&str> = ranking.doc_ids().collect();
        assert_eq!(got, expected);
    }

    fn toy_model(weights: Vec<Real>) -> LinearModel {
        LinearModel {
            weights,
            metadata: ModelMetadata {
                objective: "test".into(),
                seed: 0,
                iterations: 0,
                initializer: None,
            },
        }
    }

    fn binary_doc(features: &[Real]) -> Document {
        Document {
            doc_id: "d".into(),
            record_type: RecordType {
                name: "t".into(),
                index: 0,
            },
            features: features
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i as u32, *v))
                .collect(),
            label: 0,
        }
    }

    #[test]
    fn score_linear_toy_examples() {
        let model = toy_model(vec![1.0, 0.0, 2.0 / 3.0, 0.5]);
        assert_abs_diff_eq!(
            score_linear(&model, &binary_doc(&[1.0, 0.0, 1.0, 0.0])),
            1.667,
            epsilon = 1e-3
        );
        assert_abs_diff_eq!(
            score_linear(&model, &binary_doc(&[1.0, 0.0, 1.0, 1.0])),
            2.167,
            epsilon = 1e-3
        );
        assert_eq!(score_linear(&model, &binary_doc(&[0.0, 0.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn registry_indices_are_lexicographic() {
        let reg = TypeRegistry::from_names(["residence", "marriage", "birth", "marriage"]);
        assert_eq!(reg.names(), ["birth", "marriage", "residence"]);
        assert_eq!(reg.index_of("marriage"), Some(1));
        assert_eq!(reg.index_of("census"), None);
    }

    proptest! {
        #[test]
        fn ranking_scale_invariant(scores in proptest::collection::vec(0.0f64..100.0, 1..40), c in 0.01f64..100.0) {
            let docs: Vec<(String, Real)> = scores.iter().enumerate()
                .map(|(i, s)| (format!("d{i}"), *s)).collect();
            let scaled: Vec<(String, Real)> = docs.iter()
                .map(|(id, s)| (id.clone(), c * s)).collect();
            let a: Vec<String> = rank_by_score(&docs).unwrap().doc_ids().map(String::from).collect();
            let b: Vec<String> = rank_by_score(&scaled).unwrap().doc_ids().map(String::from).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn ranking_is_permutation(scores in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
            let docs: Vec<(String, Real)> = scores.iter().enumerate()
                .map(|(i, s)| (format!("d{i}"), *s)).collect();
            let ranking = rank_by_score(&docs).unwrap();
            let mut got: Vec<String> = ranking.doc_ids().map(String::from).collect();
            let mut want: Vec<String> = docs.iter().map(|(id, _)| id.clone()).collect();
            got.sort();
            want.sort();
            prop_assert_eq!(got, want);
        }
    }
}
