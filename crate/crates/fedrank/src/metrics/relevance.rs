//! NDCG family and S-recall.
//!
//! Gains are linear in the relevance grade and the discount is log base 2,
//! i.e. DCG@k = sum_{i=1..k} y_(i) / log2(1 + i). A query whose ideal DCG is
//! zero has NDCG defined as 0 and is excluded from dataset means.

use std::collections::{HashMap, HashSet};

use crate::core::Ranking;
use crate::error::{Error, Result};
use crate::metrics::MetricValue;
use crate::scalar::Scalar;

fn discount<S: Scalar>(position: usize) -> S {
    // position is 1-based
    S::one() / S::from_count(position + 1).log2()
}

/// DCG over grades already in rank order.
pub fn dcg_of_grades<S: Scalar>(grades_in_rank_order: &[u32], k: usize) -> S {
    grades_in_rank_order
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| S::from_count(g as usize) * discount::<S>(i + 1))
        .sum()
}

/// DCG@k of a ranking given a doc -> grade map; missing docs grade 0.
pub fn dcg_at_k<S: Scalar>(ranking: &Ranking<S>, labels: &HashMap<String, u8>, k: usize) -> S {
    let grades: Vec<u32> = ranking
        .doc_ids()
        .map(|id| labels.get(id).copied().unwrap_or(0) as u32)
        .collect();
    dcg_of_grades(&grades, k)
}

/// DCG@k of the best possible ordering of the given grade multiset.
pub fn idcg_at_k<S: Scalar>(grades: &[u32], k: usize) -> S {
    let mut sorted = grades.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    dcg_of_grades(&sorted, k)
}

/// NDCG@k = DCG@k / IDCG@k, with the all-irrelevant case defined as 0.
pub fn ndcg_at_k<S: Scalar>(
    ranking: &Ranking<S>,
    labels: &HashMap<String, u8>,
    k: usize,
) -> MetricValue<S> {
    let grades: Vec<u32> = ranking
        .doc_ids()
        .map(|id| labels.get(id).copied().unwrap_or(0) as u32)
        .collect();
    let ideal: S = idcg_at_k(&grades, k);
    let value = if ideal > S::zero() {
        dcg_of_grades::<S>(&grades, k) / ideal
    } else {
        S::zero()
    };
    MetricValue {
        name: format!("ndcg@{k}"),
        value,
        k,
    }
}

/// Arithmetic mean of per-query NDCG@k over queries with positive ideal DCG.
/// Returns 0 when no query has a relevant document.
pub fn mean_ndcg_at_k<S: Scalar>(
    dataset: &[(Ranking<S>, HashMap<String, u8>)],
    k: usize,
) -> Result<S> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("mean_ndcg_at_k over empty dataset"));
    }
    let mut sum = S::zero();
    let mut counted = 0usize;
    for (ranking, labels) in dataset {
        let grades: Vec<u32> = ranking
            .doc_ids()
            .map(|id| labels.get(id).copied().unwrap_or(0) as u32)
            .collect();
        if idcg_at_k::<S>(&grades, k) > S::zero() {
            sum = sum + ndcg_at_k(ranking, labels, k).value;
            counted += 1;
        }
    }
    if counted == 0 {
        Ok(S::zero())
    } else {
        Ok(sum / S::from_count(counted))
    }
}

/// S-recall@k: fraction of the `universe_size` record types represented in
/// the top k of the list.
pub fn s_recall_at_k<S: Scalar>(
    types_in_rank_order: &[&str],
    universe_size: usize,
    k: usize,
) -> Result<MetricValue<S>> {
    if universe_size == 0 {
        return Err(Error::InvalidArgument(
            "S-recall requires a type universe of size >= 1".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("S-recall cutoff k must be >= 1".into()));
    }
    let distinct: HashSet<&str> = types_in_rank_order.iter().take(k).copied().collect();
    Ok(MetricValue {
        name: format!("srecall@{k}"),
        value: S::from_count(distinct.len()) / S::from_count(universe_size),
        k,
    })
}
