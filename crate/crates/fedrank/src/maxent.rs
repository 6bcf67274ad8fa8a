//! Integer max-entropy: how should n documents be split across K record
//! types to maximize the Shannon entropy of the type proportions, given that
//! each proportion must be a multiple of 1/n?
//!
//! The closed form: (K - n mod K) types get floor(n/K) documents each and
//! the remaining (n mod K) types get floor(n/K) + 1. A branch-and-bound
//! solver over the probability grid {0, 1/n, ..., 1} verifies it, pruning
//! with the continuous-relaxation upper bound (free coordinates share the
//! residual mass equally) and deduplication of count multisets.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::metrics::diversity::entropy_of_counts;
use crate::scalar::Scalar;

/// Relative tolerance for pruning comparisons; loose enough that rounding
/// noise never cuts an optimal branch.
const PRUNE_TOL: f64 = 1e-12;

/// The problem instance: K record types, n ranked positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxEntProblem {
    pub types: usize,
    pub positions: usize,
}

/// An integer document allocation and its entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct CountAllocation<S: Scalar> {
    pub counts: Vec<usize>,
    pub entropy: S,
}

/// What the solver did at one node of the search tree.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeAction<S: Scalar> {
    /// Relaxation infeasible for the integer problem and bound above the
    /// incumbent; children were explored.
    Branched,
    /// Relaxation optimum was integral, closing the subtree (rule 2).
    ClosedFeasible,
    /// Count multiset already evaluated (rule 1).
    PrunedDuplicate,
    /// Relaxation bound no better than the incumbent (rule 3).
    PrunedByBound { incumbent: S },
}

/// One explored node: the counts fixed so far (p_i = fixed[i] / n), the
/// relaxation upper bound, and the action taken.
#[derive(Debug, Clone, PartialEq)]
pub struct BnBNode<S: Scalar> {
    pub fixed: Vec<usize>,
    pub bound: S,
    pub action: NodeAction<S>,
}

/// Per-rule pruning counters plus total nodes visited.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BnBStats {
    pub nodes: usize,
    pub pruned_duplicate: usize,
    pub closed_feasible: usize,
    pub pruned_by_bound: usize,
}

#[derive(Debug, Clone)]
pub struct BnBOutcome<S: Scalar> {
    pub best: CountAllocation<S>,
    pub trace: Vec<BnBNode<S>>,
    pub stats: BnBStats,
}

/// Optimal allocation by the closed form.
pub fn closed_form_allocation<S: Scalar>(types: usize, positions: usize) -> CountAllocation<S> {
    assert!(types >= 1 && positions >= 1, "K and n must be >= 1");
    let base = positions / types;
    let rem = positions % types;
    let mut counts = vec![base; types - rem];
    counts.extend(std::iter::repeat(base + 1).take(rem));
    let entropy = entropy_of_counts(counts.iter().copied(), positions);
    CountAllocation { counts, entropy }
}

/// Sum of the per-prefix optimal entropies for p = 1..n; the NCE normalizer.
pub fn ideal_cumulative_entropy<S: Scalar>(types: usize, positions: usize) -> S {
    assert!(types >= 1 && positions >= 1, "K and n must be >= 1");
    (1..=positions)
        .map(|p| closed_form_allocation::<S>(types, p).entropy)
        .sum()
}

/// Continuous-relaxation optimum with the leading coordinates fixed: the
/// free coordinates share the residual probability mass equally. Returns
/// the full distribution and its entropy, the upper bound for the subtree.
pub fn relaxation_optimum<S: Scalar>(fixed: &[S], types: usize) -> Result<(Vec<S>, S)> {
    if fixed.len() >= types {
        return Err(Error::InvalidArgument(
            "relaxation requires at least one free coordinate".into(),
        ));
    }
    let used: S = fixed.iter().copied().sum();
    let eps = S::from_f64(1e-12).unwrap();
    if used > S::one() + eps {
        return Err(Error::Infeasible(format!(
            "fixed probabilities sum to {used:?} > 1"
        )));
    }
    let residual = (S::one() - used).max(S::zero());
    let free = types - fixed.len();
    let share = residual / S::from_count(free);
    let mut probs = fixed.to_vec();
    probs.extend(std::iter::repeat(share).take(free));
    let mut entropy = S::zero();
    for &p in &probs {
        if p > S::zero() {
            entropy = entropy - p * p.log2();
        }
    }
    Ok((probs, entropy))
}

fn relaxation_bound_counts<S: Scalar>(fixed: &[usize], types: usize, positions: usize) -> S {
    let probs: Vec<S> = fixed
        .iter()
        .map(|&c| S::from_count(c) / S::from_count(positions))
        .collect();
    relaxation_optimum(&probs, types)
        .map(|(_, e)| e)
        .unwrap_or_else(|_| S::zero())
}

fn sorted_key(counts: &[usize]) -> Vec<usize> {
    let mut key = counts.to_vec();
    key.sort_unstable();
    key
}

/// Branch-and-bound over the grid {0, 1/n, ..., 1}, fixing p_1, then p_2,
/// ... with values ascending. Intended for desk-scale instances.
pub fn branch_and_bound_with_trace<S: Scalar>(types: usize, positions: usize) -> BnBOutcome<S> {
    assert!(types >= 1 && positions >= 1, "K and n must be >= 1");

    let mut trace: Vec<BnBNode<S>> = Vec::new();
    let mut stats = BnBStats::default();
    // Incumbent starts at entropy 0, which every feasible point attains.
    let mut best = CountAllocation {
        counts: {
            let mut c = vec![0usize; types];
            c[types - 1] = positions;
            c
        },
        entropy: S::zero(),
    };
    let mut evaluated: HashSet<Vec<usize>> = HashSet::new();
    let mut visited_prefixes: HashSet<Vec<usize>> = HashSet::new();
    let tol = S::from_f64(PRUNE_TOL).unwrap();

    // Depth-first walk; `fixed` holds integer counts for p_1..p_j.
    fn visit<S: Scalar>(
        fixed: &mut Vec<usize>,
        used: usize,
        types: usize,
        positions: usize,
        best: &mut CountAllocation<S>,
        evaluated: &mut HashSet<Vec<usize>>,
        visited_prefixes: &mut HashSet<Vec<usize>>,
        trace: &mut Vec<BnBNode<S>>,
        stats: &mut BnBStats,
        tol: S,
    ) {
        stats.nodes += 1;
        let depth = fixed.len();
        let remaining = positions - used;
        let free = types - depth;

        let record_candidate =
            |counts: Vec<usize>, best: &mut CountAllocation<S>, evaluated: &mut HashSet<Vec<usize>>| {
                let entropy: S = entropy_of_counts(counts.iter().copied(), positions);
                evaluated.insert(sorted_key(&counts));
                if entropy > best.entropy {
                    *best = CountAllocation { counts, entropy };
                }
            };

        if free == 0 {
            // All coordinates fixed; feasibility requires the mass be used up.
            if remaining == 0 {
                let counts = fixed.clone();
                let entropy: S = entropy_of_counts(counts.iter().copied(), positions);
                if evaluated.contains(&sorted_key(&counts)) {
                    stats.pruned_duplicate += 1;
                    trace.push(BnBNode {
                        fixed: counts,
                        bound: entropy,
                        action: NodeAction::PrunedDuplicate,
                    });
                } else {
                    record_candidate(counts.clone(), best, evaluated);
                    trace.push(BnBNode {
                        fixed: counts,
                        bound: entropy,
                        action: NodeAction::ClosedFeasible,
                    });
                }
            }
            return;
        }

        let bound: S = relaxation_bound_counts(fixed, types, positions);

        // Rule 1: a node whose fixed counts form an already-visited multiset
        // spans the same solution set as the earlier node.
        if depth > 0 {
            let mut key = sorted_key(fixed);
            key.push(depth); // same multiset at a different depth is a different subtree
            if !visited_prefixes.insert(key) {
                stats.pruned_duplicate += 1;
                trace.push(BnBNode {
                    fixed: fixed.clone(),
                    bound,
                    action: NodeAction::PrunedDuplicate,
                });
                return;
            }
        }

        // Rule 3: bound no better than the incumbent. Checked before the
        // feasibility closing so a feasible-but-dominated relaxation optimum
        // registers as a bound prune, matching the worked walk-through.
        if bound <= best.entropy + tol {
            stats.pruned_by_bound += 1;
            trace.push(BnBNode {
                fixed: fixed.clone(),
                bound,
                action: NodeAction::PrunedByBound {
                    incumbent: best.entropy,
                },
            });
            return;
        }

        // Rule 2: relaxation optimum integral => it is the best completion.
        if remaining % free == 0 {
            let share = remaining / free;
            let mut counts = fixed.clone();
            counts.extend(std::iter::repeat(share).take(free));
            if evaluated.contains(&sorted_key(&counts)) {
                stats.pruned_duplicate += 1;
                trace.push(BnBNode {
                    fixed: fixed.clone(),
                    bound,
                    action: NodeAction::PrunedDuplicate,
                });
            } else {
                record_candidate(counts, best, evaluated);
                stats.closed_feasible += 1;
                trace.push(BnBNode {
                    fixed: fixed.clone(),
                    bound,
                    action: NodeAction::ClosedFeasible,
                });
            }
            return;
        }

        trace.push(BnBNode {
            fixed: fixed.clone(),
            bound,
            action: NodeAction::Branched,
        });

        for value in 0..=remaining {
            fixed.push(value);
            visit(
                fixed,
                used + value,
                types,
                positions,
                best,
                evaluated,
                visited_prefixes,
                trace,
                stats,
                tol,
            );
            fixed.pop();
        }
    }

    let mut fixed = Vec::new();
    visit(
        &mut fixed,
        0,
        types,
        positions,
        &mut best,
        &mut evaluated,
        &mut visited_prefixes,
        &mut trace,
        &mut stats,
        tol,
    );

    BnBOutcome { best, trace, stats }
}

/// Globally optimal integer allocation found by branch-and-bound.
pub fn branch_and_bound_maxent<S: Scalar>(types: usize, positions: usize) -> CountAllocation<S> {
    branch_and_bound_with_trace(types, positions).best
}

/// Exhaustive enumeration of all compositions of n into K parts; the slow
/// reference the verification sweep compares against.
pub fn brute_force_maxent<S: Scalar>(types: usize, positions: usize) -> CountAllocation<S> {
    assert!(types >= 1 && positions >= 1, "K and n must be >= 1");
    fn rec<S: Scalar>(
        counts: &mut Vec<usize>,
        remaining: usize,
        types: usize,
        positions: usize,
        best: &mut CountAllocation<S>,
    ) {
        if counts.len() == types - 1 {
            counts.push(remaining);
            let entropy: S = entropy_of_counts(counts.iter().copied(), positions);
            if entropy > best.entropy || best.counts.is_empty() {
                *best = CountAllocation {
                    counts: counts.clone(),
                    entropy,
                };
            }
            counts.pop();
            return;
        }
        for v in 0..=remaining {
            counts.push(v);
            rec(counts, remaining - v, types, positions, best);
            counts.pop();
        }
    }
    let mut best = CountAllocation {
        counts: Vec::new(),
        entropy: S::neg_infinity(),
    };
    rec(&mut Vec::new(), positions, types, positions, &mut best);
    best
}

/// Result of the triple-oracle verification sweep.
#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checked: usize,
    /// (K, n, closed-form entropy, branch-and-bound entropy, brute-force entropy)
    pub failures: Vec<(usize, usize, f64, f64, f64)>,
    pub stats: BnBStats,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks closed form against branch-and-bound and brute force for every
/// (K, n) with K <= k_max, n <= n_max, at tolerance 1e-9.
pub fn verify_claim1(k_max: usize, n_max: usize) -> VerifyReport {
    let mut report = VerifyReport::default();
    for k in 1..=k_max {
        for n in 1..=n_max {
            let closed = closed_form_allocation::<f64>(k, n);
            let outcome = branch_and_bound_with_trace::<f64>(k, n);
            let brute = brute_force_maxent::<f64>(k, n);
            report.checked += 1;
            report.stats.nodes += outcome.stats.nodes;
            report.stats.pruned_duplicate += outcome.stats.pruned_duplicate;
            report.stats.closed_feasible += outcome.stats.closed_feasible;
            report.stats.pruned_by_bound += outcome.stats.pruned_by_bound;
            let bnb = outcome.best.entropy;
            if (closed.entropy - bnb).abs() > 1e-9 || (closed.entropy - brute.entropy).abs() > 1e-9
            {
                report
                    .failures
                    .push((k, n, closed.entropy, bnb, brute.entropy));
            }
        }
    }
    report
}
