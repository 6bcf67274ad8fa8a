//! Global-search fusion: per-record-type weights learned by Nelder-Mead
//! simplex search over mean NDCG@k of the collated list, started from a
//! pairwise linear ranker trained on a seeded subsample of queries.
//!
//! Each document's fusion feature vector is one-hot in its record type,
//! scaled by the shard score, so a weight vector w scores a type-j document
//! as w_j * s.

use std::time::Instant;

use rayon::prelude::*;

use crate::core::{rank_by_score, FusionModel, ModelMetadata, QueryGroup, Ranking, TypeRegistry};
use crate::error::{Error, Result};
use crate::metrics::relevance::{idcg_at_k, ndcg_at_k};
use crate::scalar::Scalar;
use crate::Real;

/// Stochastic-search settings. The deltas are the simplex operation
/// coefficients; `epsilon` offsets the initial simplex vertices.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SSConfig {
    pub epsilon: Real,
    pub max_iter: usize,
    pub max_stagnation: usize,
    pub delta_refl: Real,
    pub delta_ext: Real,
    pub delta_cont: Real,
    pub delta_shr: Real,
    pub k: usize,
    pub init_subsample: usize,
    pub seed: u64,
}

impl Default for SSConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_iter: 500,
            max_stagnation: 10,
            delta_refl: 1.0,
            delta_ext: 2.0,
            delta_cont: 0.5,
            delta_shr: 0.5,
            k: 100,
            init_subsample: 1000,
            seed: 0,
        }
    }
}

impl SSConfig {
    fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument("epsilon must be > 0".into()));
        }
        if self.delta_refl <= 0.0 {
            return Err(Error::InvalidArgument("delta_refl must be > 0".into()));
        }
        if self.delta_ext < 0.0 {
            return Err(Error::InvalidArgument("delta_ext must be >= 0".into()));
        }
        if !(0.0 < self.delta_cont && self.delta_cont < 1.0) {
            return Err(Error::InvalidArgument("delta_cont must be in (0, 1)".into()));
        }
        if !(0.0 < self.delta_shr && self.delta_shr <= 1.0) {
            return Err(Error::InvalidArgument("delta_shr must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Which simplex operation an iteration ended with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexOp {
    Reflect,
    Expand,
    ContractOutside,
    ContractInside,
    Shrink,
}

impl std::fmt::Display for SimplexOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SimplexOp::Reflect => "reflect",
            SimplexOp::Expand => "expand",
            SimplexOp::ContractOutside => "contract_outside",
            SimplexOp::ContractInside => "contract_inside",
            SimplexOp::Shrink => "shrink",
        };
        f.write_str(s)
    }
}

/// One entry of the optimizer trace.
#[derive(Debug, Clone, PartialEq)]
pub struct NmStep<S: Scalar> {
    pub iteration: usize,
    pub op: SimplexOp,
    pub best_loss: S,
}

/// The initial-weight model: a linear pairwise-hinge ranker fit to a
/// subsample of queries.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseInitModel {
    pub weights: Vec<Real>,
    pub subsample_qids: Vec<String>,
    pub loss_trace: Vec<Real>,
}

/// Per-document fusion features: a single (type index, shard score) entry.
pub fn fusion_features(query: &QueryGroup) -> Result<Vec<(usize, Real)>> {
    let scores = query
        .shard_scores
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("query `{}` has no shard scores", query.qid)))?;
    query
        .documents
        .iter()
        .map(|doc| {
            let s = scores.get(&doc.doc_id).copied().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "document `{}` in query `{}` has no shard score",
                    doc.doc_id, query.qid
                ))
            })?;
            Ok((doc.record_type.index, s))
        })
        .collect()
}

/// Final score of every document under fusion weights, in document order.
fn fused_scores(features: &[(usize, Real)], weights: &[Real]) -> Vec<Real> {
    features
        .iter()
        .map(|&(ti, s)| weights.get(ti).copied().unwrap_or(0.0) * s)
        .collect()
}

/// Collate one query's shard lists into a single ranking under the model.
pub fn collate(query: &QueryGroup, model: &FusionModel) -> Result<Ranking<Real>> {
    let scores = query
        .shard_scores
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("query `{}` has no shard scores", query.qid)))?;
    let scored: Result<Vec<(String, Real)>> = query
        .documents
        .iter()
        .map(|doc| {
            let w = model
                .weights
                .get(&doc.record_type.name)
                .copied()
                .ok_or_else(|| Error::UnknownRecordType(doc.record_type.name.clone()))?;
            let s = scores.get(&doc.doc_id).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("document `{}` has no shard score", doc.doc_id))
            })?;
            Ok((doc.doc_id.clone(), w * s))
        })
        .collect();
    rank_by_score(&scored?)
}

/// Linear pairwise hinge ranker over fusion features, trained by seeded
/// subgradient descent on within-query (positive, negative) pairs drawn from
/// a uniform subsample of queries.
pub fn pairwise_linear_init(
    dataset: &[QueryGroup],
    registry: &TypeRegistry,
    subsample_size: usize,
    seed: u64,
) -> Result<PairwiseInitModel> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let sample: Vec<usize> = if subsample_size >= dataset.len() {
        indices
    } else {
        indices.shuffle(&mut rng);
        let mut chosen = indices[..subsample_size].to_vec();
        chosen.sort_unstable();
        chosen
    };

    // Collect (positive feature, negative feature) pairs per sampled query.
    let mut pairs: Vec<((usize, Real), (usize, Real))> = Vec::new();
    let mut qids = Vec::with_capacity(sample.len());
    for &qi in &sample {
        let group = &dataset[qi];
        qids.push(group.qid.clone());
        let features = fusion_features(group)?;
        let (pos, neg): (Vec<usize>, Vec<usize>) =
            (0..group.documents.len()).partition(|&i| group.documents[i].label > 0);
        for &p in &pos {
            for &n in &neg {
                pairs.push((features[p], features[n]));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput(
            "pairwise initializer found no (positive, negative) pairs",
        ));
    }

    let dim = registry.len();
    let mut weights = vec![0.0 as Real; dim];
    let mut loss_trace = Vec::new();
    const EPOCHS: usize = 20;
    const LR0: Real = 0.1;
    const L2: Real = 1e-4;
    for epoch in 1..=EPOCHS {
        pairs.shuffle(&mut rng);
        let lr = LR0 / (epoch as Real).sqrt();
        let mut epoch_loss = 0.0;
        for &((pt, ps), (nt, ns)) in &pairs {
            let margin = weights[pt] * ps - weights[nt] * ns;
            let loss = (1.0 - margin).max(0.0);
            epoch_loss += loss;
            for w in weights.iter_mut() {
                *w -= lr * L2 * *w;
            }
            if loss > 0.0 {
                weights[pt] += lr * ps;
                weights[nt] -= lr * ns;
            }
        }
        loss_trace.push(epoch_loss / pairs.len() as Real);
    }

    Ok(PairwiseInitModel {
        weights,
        subsample_qids: qids,
        loss_trace,
    })
}

/// Nelder-Mead downhill simplex minimization. The initial simplex is `v0`
/// plus one vertex per dimension offset by `epsilon` along that axis.
/// Terminates at `max_iter` iterations or after `max_stagnation` consecutive
/// iterations without improvement of the best loss.
pub fn nelder_mead<S, F>(
    mut loss: F,
    v0: &[S],
    config: &SSConfig,
) -> Result<(Vec<S>, Vec<NmStep<S>>)>
where
    S: Scalar,
    F: FnMut(&[S]) -> S,
{
    config.validate()?;
    let dim = v0.len();
    if dim == 0 {
        return Err(Error::InvalidArgument("Nelder-Mead needs dimension >= 1".into()));
    }
    let eps = S::from_f64(config.epsilon).unwrap();
    let d_refl = S::from_f64(config.delta_refl).unwrap();
    let d_ext = S::from_f64(config.delta_ext).unwrap();
    let d_cont = S::from_f64(config.delta_cont).unwrap();
    let d_shr = S::from_f64(config.delta_shr).unwrap();

    let eval = |point: &[S], loss: &mut F| -> Result<S> {
        let value = loss(point);
        if !value.is_finite() {
            return Err(Error::Diverged(format!(
                "loss returned non-finite value {value} at {point:?}"
            )));
        }
        Ok(value)
    };

    // vertices[i] = (point, loss), kept sorted ascending by loss.
    let mut vertices: Vec<(Vec<S>, S)> = Vec::with_capacity(dim + 1);
    let l0 = eval(v0, &mut loss)?;
    vertices.push((v0.to_vec(), l0));
    for j in 0..dim {
        let mut v = v0.to_vec();
        v[j] = v[j] + eps;
        let l = eval(&v, &mut loss)?;
        vertices.push((v, l));
    }

    let mut trace: Vec<NmStep<S>> = Vec::new();
    let mut best_loss = vertices
        .iter()
        .map(|(_, l)| *l)
        .fold(S::infinity(), |a, b| a.min(b));
    let mut stagnation = 0usize;

    for iteration in 0..config.max_iter {
        vertices.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("losses finite"));
        let worst = vertices.len() - 1;
        let second_worst = worst.saturating_sub(1);

        // Centroid of all vertices except the worst.
        let mut centroid = vec![S::zero(); dim];
        for (v, _) in &vertices[..worst] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c = *c + *x;
            }
        }
        let inv = S::one() / S::from_count(worst.max(1));
        for c in centroid.iter_mut() {
            *c = *c * inv;
        }

        let combine = |a: &[S], b: &[S], t: S| -> Vec<S> {
            // a + t * (b - a)
            a.iter().zip(b).map(|(&x, &y)| x + t * (y - x)).collect()
        };

        let reflected = combine(&centroid, &vertices[worst].0, -d_refl);
        let l_reflected = eval(&reflected, &mut loss)?;

        let op;
        if l_reflected < vertices[0].1 {
            // Try expanding past the reflected point.
            let expanded = combine(&centroid, &reflected, d_ext.max(S::one()));
            let l_expanded = eval(&expanded, &mut loss)?;
            if l_expanded < l_reflected {
                vertices[worst] = (expanded, l_expanded);
                op = SimplexOp::Expand;
            } else {
                vertices[worst] = (reflected, l_reflected);
                op = SimplexOp::Reflect;
            }
        } else if l_reflected < vertices[second_worst].1 {
            vertices[worst] = (reflected, l_reflected);
            op = SimplexOp::Reflect;
        } else if l_reflected < vertices[worst].1 {
            // Outside contraction, between centroid and the reflected point.
            let contracted = combine(&centroid, &reflected, d_cont);
            let l_contracted = eval(&contracted, &mut loss)?;
            if l_contracted <= l_reflected {
                vertices[worst] = (contracted, l_contracted);
                op = SimplexOp::ContractOutside;
            } else {
                shrink(&mut vertices, d_shr);
                for (v, l) in vertices.iter_mut().skip(1) {
                    *l = eval(v, &mut loss)?;
                }
                op = SimplexOp::Shrink;
            }
        } else {
            // Inside contraction, between centroid and the worst vertex.
            let contracted = combine(&centroid, &vertices[worst].0, d_cont);
            let l_contracted = eval(&contracted, &mut loss)?;
            if l_contracted < vertices[worst].1 {
                vertices[worst] = (contracted, l_contracted);
                op = SimplexOp::ContractInside;
            } else {
                shrink(&mut vertices, d_shr);
                for (v, l) in vertices.iter_mut().skip(1) {
                    *l = eval(v, &mut loss)?;
                }
                op = SimplexOp::Shrink;
            }
        }

        let iter_best = vertices
            .iter()
            .map(|(_, l)| *l)
            .fold(S::infinity(), |a, b| a.min(b));
        if iter_best < best_loss {
            best_loss = iter_best;
            stagnation = 0;
        } else {
            stagnation += 1;
        }
        trace.push(NmStep {
            iteration,
            op,
            best_loss,
        });
        if stagnation >= config.max_stagnation {
            break;
        }
    }

    vertices.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("losses finite"));
    Ok((vertices[0].0.clone(), trace))
}

fn shrink<S: Scalar>(vertices: &mut [(Vec<S>, S)], d_shr: S) {
    let best = vertices[0].0.clone();
    for (v, _) in vertices.iter_mut().skip(1) {
        for (x, b) in v.iter_mut().zip(&best) {
            *x = *b + d_shr * (*x - *b);
        }
    }
}

/// Training summary for stochastic search.
#[derive(Debug, Clone, PartialEq)]
pub struct SsReport {
    pub init_objective: Real,
    pub final_objective: Real,
    pub iterations: usize,
    pub wall_time_secs: f64,
    pub trace: Vec<NmStep<Real>>,
}

/// Mean NDCG@k of the collated rankings under a weight vector. Queries are
/// evaluated in parallel but reduced in fixed order.
pub fn fusion_objective(
    features: &[Vec<(usize, Real)>],
    dataset: &[QueryGroup],
    weights: &[Real],
    k: usize,
) -> Real {
    let values: Vec<Option<Real>> = dataset
        .par_iter()
        .zip(features.par_iter())
        .map(|(group, feats)| {
            let grades: Vec<u32> = group.documents.iter().map(|d| d.label as u32).collect();
            if idcg_at_k::<Real>(&grades, k) <= 0.0 {
                return None;
            }
            let scores = fused_scores(feats, weights);
            let scored: Vec<(String, Real)> = group
                .documents
                .iter()
                .zip(&scores)
                .map(|(d, &s)| (d.doc_id.clone(), s))
                .collect();
            let ranking = rank_by_score(&scored).expect("finite fused scores");
            Some(ndcg_at_k(&ranking, &group.labels_by_doc(), k).value)
        })
        .collect();
    let mut sum = 0.0;
    let mut counted = 0usize;
    for v in values.into_iter().flatten() {
        sum += v;
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        sum / counted as Real
    }
}

/// Full stochastic-search training: pairwise initializer, then Nelder-Mead
/// on the negated mean NDCG@k of the collated rankings.
pub fn stochastic_search(
    dataset: &[QueryGroup],
    registry: &TypeRegistry,
    config: &SSConfig,
) -> Result<(FusionModel, SsReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("stochastic search over empty dataset"));
    }
    let start = Instant::now();
    let init = pairwise_linear_init(dataset, registry, config.init_subsample, config.seed)?;

    let features: Vec<Vec<(usize, Real)>> =
        dataset.iter().map(fusion_features).collect::<Result<_>>()?;

    let init_objective = fusion_objective(&features, dataset, &init.weights, config.k);
    let loss = |w: &[Real]| -fusion_objective(&features, dataset, w, config.k);
    let (weights, trace) = nelder_mead(loss, &init.weights, config)?;

    let final_objective = fusion_objective(&features, dataset, &weights, config.k);
    // Nelder-Mead never accepts a worse best vertex, so the final objective
    // cannot fall below the initial one; keep the better of the two anyway
    // to make the contract explicit.
    let (weights, final_objective) = if final_objective >= init_objective {
        (weights, final_objective)
    } else {
        (init.weights.clone(), init_objective)
    };

    let iterations = trace.len();
    let model = FusionModel::from_weight_vector(
        registry,
        &weights,
        ModelMetadata {
            objective: format!("mean_ndcg@{}", config.k),
            seed: config.seed,
            iterations: iterations as u64,
            initializer: Some(format!(
                "pairwise_hinge(subsample={}, final_loss={:.6})",
                init.subsample_qids.len(),
                init.loss_trace.last().copied().unwrap_or(0.0)
            )),
        },
    );
    let report = SsReport {
        init_objective,
        final_objective,
        iterations,
        wall_time_secs: start.elapsed().as_secs_f64(),
        trace,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{Document, RecordType};
    use approx::assert_abs_diff_eq;
    use std::collections::HashMap;

    fn doc(id: &str, type_name: &str, index: usize, label: u8) -> Document {
        Document {
            doc_id: id.into(),
            record_type: RecordType {
                name: type_name.into(),
                index,
            },
            features: Vec::new(),
            label,
        }
    }

    fn two_shard_query() -> (QueryGroup, TypeRegistry) {
        let registry = TypeRegistry::from_names(["alpha", "beta"]);
        let shard_scores: HashMap<String, Real> = [
            ("a1".to_string(), 0.9),
            ("a2".to_string(), 0.4),
            ("b1".to_string(), 0.7),
            ("b2".to_string(), 0.5),
        ]
        .into_iter()
        .collect();
        let group = QueryGroup {
            qid: "q".into(),
            documents: vec![
                doc("a1", "alpha", 0, 1),
                doc("a2", "alpha", 0, 0),
                doc("b1", "beta", 1, 0),
                doc("b2", "beta", 1, 1),
            ],
            shard_scores: Some(shard_scores),
        };
        (group, registry)
    }

    fn fusion_model(weights: &[(&str, Real)]) -> FusionModel {
        FusionModel {
            weights: weights.iter().map(|(n, w)| (n.to_string(), *w)).collect(),
            metadata: ModelMetadata {
                objective: "test".into(),
                seed: 0,
                iterations: 0,
                initializer: None,
            },
        }
    }

    #[test]
    fn fusion_features_one_hot() {
        let (group, _) = two_shard_query();
        let feats = fusion_features(&group).unwrap();
        assert_eq!(feats, vec![(0, 0.9), (0, 0.4), (1, 0.7), (1, 0.5)]);
    }

    #[test]
    fn fusion_features_missing_score_errors() {
        let (mut group, _) = two_shard_query();
        group.shard_scores.as_mut().unwrap().remove("b2");
        assert!(fusion_features(&group).is_err());
        group.shard_scores = None;
        assert!(fusion_features(&group).is_err());
    }

    #[test]
    fn collate_raw_score_merge() {
        let (group, _) = two_shard_query();
        let model = fusion_model(&[("alpha", 1.0), ("beta", 1.0)]);
        let ranking = collate(&group, &model).unwrap();
        let ids: Vec<&str> = ranking.doc_ids().collect();
        assert_eq!(ids, ["a1", "b1", "b2", "a2"]);
    }

    #[test]
    fn collate_weighted_merge() {
        let (group, _) = two_shard_query();
        let model = fusion_model(&[("alpha", 1.0), ("beta", 2.0)]);
        let ranking = collate(&group, &model).unwrap();
        let ids: Vec<&str> = ranking.doc_ids().collect();
        assert_eq!(ids, ["b1", "b2", "a1", "a2"]);
        let scores: Vec<Real> = ranking.entries().iter().map(|(_, s)| *s).collect();
        assert_abs_diff_eq!(scores[0], 1.4, epsilon = 1e-12);
        assert_abs_diff_eq!(scores[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn collate_scale_invariant() {
        let (group, _) = two_shard_query();
        let base = collate(&group, &fusion_model(&[("alpha", 1.0), ("beta", 1.0)])).unwrap();
        for c in [0.1, 2.0, 37.0] {
            let scaled = collate(&group, &fusion_model(&[("alpha", c), ("beta", c)])).unwrap();
            let a: Vec<&str> = base.doc_ids().collect();
            let b: Vec<&str> = scaled.doc_ids().collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn collate_unknown_type_errors() {
        let (group, _) = two_shard_query();
        let model = fusion_model(&[("alpha", 1.0)]);
        let err = collate(&group, &model).unwrap_err();
        assert!(matches!(err, Error::UnknownRecordType(t) if t == "beta"));
    }

    #[test]
    fn nelder_mead_quadratic() {
        let config = SSConfig {
            max_iter: 200,
            ..SSConfig::default()
        };
        let loss = |w: &[f64]| (w[0] - 3.0).powi(2) + (w[1] + 1.0).powi(2);
        let (w, trace) = nelder_mead(loss, &[0.0, 0.0], &config).unwrap();
        assert!(trace.len() <= 200);
        assert_abs_diff_eq!(w[0], 3.0, epsilon = 1e-3);
        assert_abs_diff_eq!(w[1], -1.0, epsilon = 1e-3);
    }

    #[test]
    fn nelder_mead_constant_loss_stagnates_exactly() {
        let config = SSConfig::default();
        let (w, trace) = nelder_mead(|_: &[f64]| 1.0, &[0.5, 0.5], &config).unwrap();
        assert_eq!(trace.len(), config.max_stagnation);
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn nelder_mead_one_dimensional_nonsmooth() {
        let config = SSConfig {
            max_iter: 500,
            ..SSConfig::default()
        };
        let (w, _) = nelder_mead(|w: &[f64]| (w[0] - 2.0).abs(), &[0.0], &config).unwrap();
        assert_abs_diff_eq!(w[0], 2.0, epsilon = 1e-3);
    }

    #[test]
    fn nelder_mead_rejects_non_finite_loss() {
        let config = SSConfig::default();
        let result = nelder_mead(|_: &[f64]| f64::NAN, &[0.0, 0.0], &config);
        assert!(matches!(result, Err(Error::Diverged(_))));
    }

    #[test]
    fn nelder_mead_best_loss_monotone() {
        let config = SSConfig {
            max_iter: 300,
            ..SSConfig::default()
        };
        let rosenbrock = |w: &[f64]| {
            (1.0 - w[0]).powi(2) + 100.0 * (w[1] - w[0] * w[0]).powi(2)
        };
        let (_, trace) = nelder_mead(rosenbrock, &[-1.0, 1.0], &config).unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1].best_loss <= pair[0].best_loss + 1e-15);
        }
    }

    #[test]
    fn nelder_mead_simplex_stays_distinct() {
        // Probed indirectly: a loss with a flat region still converges
        // without the simplex collapsing to identical points (which would
        // make best_loss freeze immediately).
        let config = SSConfig {
            max_iter: 100,
            ..SSConfig::default()
        };
        let loss = |w: &[f64]| w[0].abs().max(0.5) + w[1].abs();
        let (w, _) = nelder_mead(loss, &[3.0, 3.0], &config).unwrap();
        assert!(w[1].abs() < 0.1, "made progress on the non-flat coordinate: {w:?}");
    }

    /// Synthetic fusion data with planted per-type weights. Shard scores are
    /// uniform in (0, 1); a document is relevant iff its planted global
    /// score is in the query's top `positives`.
    pub(crate) fn planted_dataset(
        planted: &[Real],
        type_names: &[&str],
        num_queries: usize,
        docs_per_type: usize,
        positives: usize,
        seed: u64,
    ) -> (Vec<QueryGroup>, TypeRegistry) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let registry = TypeRegistry::from_names(type_names.iter().copied());
        let mut dataset = Vec::with_capacity(num_queries);
        for qi in 0..num_queries {
            let mut documents = Vec::new();
            let mut shard_scores = HashMap::new();
            let mut true_scores: Vec<(String, Real)> = Vec::new();
            for (ti, name) in type_names.iter().enumerate() {
                for di in 0..docs_per_type {
                    let id = format!("q{qi}_{name}{di}");
                    let s: Real = rng.gen_range(0.01..1.0);
                    shard_scores.insert(id.clone(), s);
                    true_scores.push((id.clone(), planted[ti] * s));
                    documents.push(doc(&id, name, registry.index_of(name).unwrap(), 0));
                }
            }
            true_scores
                .sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            let top: std::collections::HashSet<&str> = true_scores
                .iter()
                .take(positives)
                .map(|(id, _)| id.as_str())
                .collect();
            for d in documents.iter_mut() {
                if top.contains(d.doc_id.as_str()) {
                    d.label = 1;
                }
            }
            dataset.push(QueryGroup {
                qid: format!("q{qi}"),
                documents,
                shard_scores: Some(shard_scores),
            });
        }
        (dataset, registry)
    }

    fn kendall_tau_is_one(learned: &[Real], planted: &[Real]) -> bool {
        for i in 0..planted.len() {
            for j in (i + 1)..planted.len() {
                let want = planted[i].partial_cmp(&planted[j]).unwrap();
                let got = learned[i].partial_cmp(&learned[j]).unwrap();
                if want != got {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn pairwise_init_recovers_planted_order() {
        let planted = [2.0, 1.0, 0.5];
        let (dataset, registry) =
            planted_dataset(&planted, &["a", "b", "c"], 120, 8, 4, 3);
        let init = pairwise_linear_init(&dataset, &registry, 1000, 7).unwrap();
        assert!(
            kendall_tau_is_one(&init.weights, &planted),
            "learned {:?} does not order like planted {:?}",
            init.weights,
            planted
        );
    }

    #[test]
    fn pairwise_init_subsample_covers_all_when_large() {
        let (dataset, registry) = planted_dataset(&[1.0, 2.0], &["a", "b"], 20, 4, 2, 5);
        let init = pairwise_linear_init(&dataset, &registry, 100, 1).unwrap();
        assert_eq!(init.subsample_qids.len(), 20);
    }

    #[test]
    fn pairwise_init_symmetric_types_get_close_weights() {
        // Two types with identical planted weight: learned weights within 10%.
        let (dataset, registry) = planted_dataset(&[1.0, 1.0], &["a", "b"], 200, 8, 4, 9);
        let init = pairwise_linear_init(&dataset, &registry, 1000, 2).unwrap();
        let (wa, wb) = (init.weights[0], init.weights[1]);
        assert!(
            (wa - wb).abs() <= 0.1 * wa.abs().max(wb.abs()),
            "asymmetric weights: {wa} vs {wb}"
        );
    }

    #[test]
    fn pairwise_init_no_pairs_errors() {
        let (mut dataset, registry) = planted_dataset(&[1.0, 2.0], &["a", "b"], 5, 3, 2, 5);
        for g in dataset.iter_mut() {
            for d in g.documents.iter_mut() {
                d.label = 0;
            }
        }
        assert!(pairwise_linear_init(&dataset, &registry, 10, 0).is_err());
    }

    #[test]
    fn stochastic_search_beats_baseline_on_planted_data() {
        let planted = [2.0, 1.0, 0.5, 0.25];
        let (train, registry) =
            planted_dataset(&planted, &["a", "b", "c", "d"], 120, 6, 4, 11);
        let config = SSConfig {
            k: 20,
            seed: 5,
            ..SSConfig::default()
        };
        let (model, report) = stochastic_search(&train, &registry, &config).unwrap();
        let features: Vec<Vec<(usize, Real)>> =
            train.iter().map(fusion_features).collect::<Result<_>>().unwrap();
        let baseline = fusion_objective(&features, &train, &vec![1.0; 4], 20);
        let learned = model.weight_vector(&registry).unwrap();
        let ss = fusion_objective(&features, &train, &learned, 20);
        assert!(report.final_objective >= report.init_objective);
        assert!(ss >= report.init_objective - 1e-12);
        assert!(ss > baseline, "ss {ss} <= baseline {baseline}");
    }

    #[test]
    fn stochastic_search_single_type_matches_baseline() {
        let (train, registry) = planted_dataset(&[1.0], &["only"], 40, 8, 3, 13);
        let config = SSConfig {
            k: 10,
            seed: 3,
            ..SSConfig::default()
        };
        let (model, _) = stochastic_search(&train, &registry, &config).unwrap();
        let features: Vec<Vec<(usize, Real)>> =
            train.iter().map(fusion_features).collect::<Result<_>>().unwrap();
        let learned = model.weight_vector(&registry).unwrap();
        // With one shard any positive weight reproduces the shard ranking.
        let ss = fusion_objective(&features, &train, &learned, 10);
        let baseline = fusion_objective(&features, &train, &[1.0], 10);
        assert_abs_diff_eq!(ss, baseline, epsilon = 1e-12);
    }

    #[test]
    fn stochastic_search_calibrated_scores_near_baseline() {
        // Planted weights all 1: the raw-score combination is optimal.
        let (train, registry) =
            planted_dataset(&[1.0, 1.0, 1.0], &["a", "b", "c"], 80, 6, 4, 17);
        let config = SSConfig {
            k: 20,
            seed: 4,
            ..SSConfig::default()
        };
        let (model, _) = stochastic_search(&train, &registry, &config).unwrap();
        let features: Vec<Vec<(usize, Real)>> =
            train.iter().map(fusion_features).collect::<Result<_>>().unwrap();
        let learned = model.weight_vector(&registry).unwrap();
        let ss = fusion_objective(&features, &train, &learned, 20);
        let baseline = fusion_objective(&features, &train, &[1.0, 1.0, 1.0], 20);
        assert!(ss >= baseline - 1e-9, "ss {ss} below optimal baseline {baseline}");
    }

    #[test]
    fn stochastic_search_reproducible() {
        let (train, registry) = planted_dataset(&[2.0, 1.0], &["a", "b"], 60, 5, 3, 19);
        let config = SSConfig {
            k: 10,
            seed: 21,
            ..SSConfig::default()
        };
        let (m1, _) = stochastic_search(&train, &registry, &config).unwrap();
        let (m2, _) = stochastic_search(&train, &registry, &config).unwrap();
        assert_eq!(m1.weights, m2.weights);
    }
}
