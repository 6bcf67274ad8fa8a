//! Entropy-based diversity: Shannon entropy of record-type proportions,
//! cumulative entropy summed over every prefix of the list, and NCE which
//! normalizes the cumulative value by the integer max-entropy optimum so
//! lists of different lengths are comparable.
//!
//! All logarithms are base 2.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::maxent;
use crate::metrics::MetricValue;
use crate::scalar::Scalar;

/// Record-type occurrence counts within a list prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeCounts {
    counts: BTreeMap<String, usize>,
    total: usize,
}

impl TypeCounts {
    pub fn from_types<'a, I: IntoIterator<Item = &'a str>>(types: I) -> Self {
        let mut tc = Self::default();
        for t in types {
            tc.push(t);
        }
        tc
    }

    pub fn push(&mut self, record_type: &str) {
        *self.counts.entry(record_type.to_string()).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn counts(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts.values().copied()
    }
}

/// Per-prefix entropies together with their sum and the normalized value.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityProfile<S: Scalar> {
    pub prefix_entropies: Vec<S>,
    pub cumulative: S,
    pub nce: S,
}

pub(crate) fn entropy_of_counts<S: Scalar>(counts: impl IntoIterator<Item = usize>, total: usize) -> S {
    let n = S::from_count(total);
    let mut e = S::zero();
    for c in counts {
        if c > 0 {
            let p = S::from_count(c) / n;
            e = e - p * p.log2();
        }
    }
    e
}

/// Shannon entropy of the type distribution, with 0 * log 0 defined as 0.
pub fn entropy<S: Scalar>(counts: &TypeCounts) -> Result<S> {
    if counts.total() == 0 {
        return Err(Error::EmptyInput("entropy of an empty count vector"));
    }
    Ok(entropy_of_counts(counts.counts(), counts.total()))
}

/// Sum of the prefix entropies E(Q_1) + ... + E(Q_n), computed in one pass
/// over incrementally updated counts.
pub fn cumulative_entropy<S: Scalar>(types_in_rank_order: &[&str]) -> Result<S> {
    if types_in_rank_order.is_empty() {
        return Err(Error::EmptyInput("cumulative entropy of an empty list"));
    }
    Ok(prefix_entropies::<S>(types_in_rank_order).into_iter().sum())
}

fn prefix_entropies<S: Scalar>(types: &[&str]) -> Vec<S> {
    let mut counts = TypeCounts::default();
    types
        .iter()
        .map(|t| {
            counts.push(t);
            entropy_of_counts(counts.counts(), counts.total())
        })
        .collect()
}

/// NCE@k: cumulative entropy of the first min(k, n) positions divided by the
/// ideal cumulative entropy for `universe_size` types at the same length.
/// With a single-type universe the denominator is 0 and NCE is defined as 1.
pub fn nce_at_k<S: Scalar>(
    types_in_rank_order: &[&str],
    universe_size: usize,
    k: usize,
) -> Result<MetricValue<S>> {
    if universe_size == 0 {
        return Err(Error::InvalidArgument(
            "NCE requires a type universe of size >= 1".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("NCE cutoff k must be >= 1".into()));
    }
    let len = types_in_rank_order.len().min(k);
    if len == 0 {
        return Err(Error::EmptyInput("NCE of an empty list"));
    }
    let ce: S = cumulative_entropy(&types_in_rank_order[..len])?;
    let ideal: S = maxent::ideal_cumulative_entropy(universe_size, len);
    let value = if ideal > S::zero() { ce / ideal } else { S::one() };
    Ok(MetricValue {
        name: format!("nce@{k}"),
        value,
        k,
    })
}

/// Prefix entropies, their sum, and NCE at the full list length.
pub fn diversity_profile<S: Scalar>(
    types_in_rank_order: &[&str],
    universe_size: usize,
) -> Result<DiversityProfile<S>> {
    if types_in_rank_order.is_empty() {
        return Err(Error::EmptyInput("diversity profile of an empty list"));
    }
    let prefix = prefix_entropies::<S>(types_in_rank_order);
    let cumulative = prefix.iter().copied().sum();
    let nce = nce_at_k(types_in_rank_order, universe_size, types_in_rank_order.len())?.value;
    Ok(DiversityProfile {
        prefix_entropies: prefix,
        cumulative,
        nce,
    })
}
