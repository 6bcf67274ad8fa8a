//! Ranked-list evaluation: NDCG and S-recall over labelled rankings, plus
//! the entropy-based diversity measures.

pub mod diversity;
pub mod relevance;

use crate::scalar::Scalar;

/// A named metric value at a cutoff, e.g. `ndcg@100 = 0.71`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricValue<S: Scalar> {
    pub name: String,
    pub value: S,
    pub k: usize,
}
