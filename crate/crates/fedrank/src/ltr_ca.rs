//! Linear record-specific ranker trained by coordinate ascent on mean
//! NDCG@k, with a frequency-based weight initialization for binary features:
//! a feature firing mostly in relevant documents starts with a weight near 1,
//! so the search begins close to a good ranking instead of at uniform
//! weights.

use std::time::Instant;

use crate::core::{LinearModel, ModelMetadata, QueryGroup};
use crate::error::{Error, Result};
use crate::metrics::relevance::idcg_at_k;
use crate::Real;

/// Per-feature firing counts split by relevance label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureStats {
    pub fre_rel: Vec<u64>,
    pub fre_irrel: Vec<u64>,
}

impl FeatureStats {
    pub fn num_features(&self) -> usize {
        self.fre_rel.len()
    }
}

/// Coordinate ascent settings. Each coordinate is probed at
/// `w_i +/- step_base * 2^t` for `t = 0..=step_doublings`; the best strictly
/// improving candidate is accepted.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CAConfig {
    pub k: usize,
    pub step_base: Real,
    pub step_doublings: u32,
    pub max_sweeps: usize,
    pub tolerance: Real,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for CAConfig {
    fn default() -> Self {
        Self {
            k: 10,
            step_base: 0.05,
            step_doublings: 4,
            max_sweeps: 25,
            tolerance: 1e-5,
            restarts: 1,
            seed: 0,
        }
    }
}

/// Objective trajectory and bookkeeping for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_objective: Real,
    pub final_objective: Real,
    pub sweeps: usize,
    pub wall_time_secs: f64,
    pub trajectory: Vec<Real>,
}

/// Exact per-feature counts of value-1 occurrences in relevant and
/// irrelevant documents, across all queries. Errors on non-binary input.
pub fn feature_stats(dataset: &[QueryGroup]) -> Result<FeatureStats> {
    let mut stats = FeatureStats::default();
    for group in dataset {
        for doc in &group.documents {
            if doc.label > 1 {
                return Err(Error::InvalidArgument(format!(
                    "document `{}` has non-binary label {}",
                    doc.doc_id, doc.label
                )));
            }
            for &(idx, val) in &doc.features {
                if val != 0.0 && val != 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "document `{}` has non-binary feature {}:{}",
                        doc.doc_id, idx, val
                    )));
                }
                let idx = idx as usize;
                if idx >= stats.fre_rel.len() {
                    stats.fre_rel.resize(idx + 1, 0);
                    stats.fre_irrel.resize(idx + 1, 0);
                }
                if val == 1.0 {
                    if doc.label == 1 {
                        stats.fre_rel[idx] += 1;
                    } else {
                        stats.fre_irrel[idx] += 1;
                    }
                }
            }
        }
    }
    Ok(stats)
}

/// Frequency-based initial weights: 0.5 for a feature that never fires,
/// otherwise fre_rel / (fre_rel + fre_irrel). Always in [0, 1].
pub fn init_weights_customized(stats: &FeatureStats) -> LinearModel {
    let weights = stats
        .fre_rel
        .iter()
        .zip(&stats.fre_irrel)
        .map(|(&rel, &irrel)| {
            if rel == 0 && irrel == 0 {
                0.5
            } else {
                rel as Real / (rel + irrel) as Real
            }
        })
        .collect();
    LinearModel {
        weights,
        metadata: ModelMetadata {
            objective: String::new(),
            seed: 0,
            iterations: 0,
            initializer: Some("customized".into()),
        },
    }
}

/// Uniform initial weights, 1 / num_features each.
pub fn init_weights_uniform(num_features: usize) -> LinearModel {
    assert!(num_features >= 1, "need at least one feature");
    LinearModel {
        weights: vec![1.0 / num_features as Real; num_features],
        metadata: ModelMetadata {
            objective: String::new(),
            seed: 0,
            iterations: 0,
            initializer: Some("uniform".into()),
        },
    }
}

/// Flattened dataset view with per-feature document columns, so probing one
/// coordinate only rescores the documents where that feature fires.
struct ScoredDataset {
    /// (query start offset, query doc count)
    queries: Vec<(usize, usize)>,
    labels: Vec<u8>,
    /// per-document sparse features
    features: Vec<Vec<(u32, Real)>>,
    /// feature index -> (doc index, value) postings
    columns: Vec<Vec<(usize, Real)>>,
    /// per-query ideal DCG at the objective cutoff
    idcg: Vec<Real>,
}

impl ScoredDataset {
    fn build(dataset: &[QueryGroup], num_features: usize, k: usize) -> Self {
        let mut queries = Vec::with_capacity(dataset.len());
        let mut labels = Vec::new();
        let mut features = Vec::new();
        let mut columns: Vec<Vec<(usize, Real)>> = vec![Vec::new(); num_features];
        for group in dataset {
            let start = labels.len();
            for doc in &group.documents {
                let di = labels.len();
                labels.push(doc.label);
                for &(idx, val) in &doc.features {
                    if (idx as usize) < num_features && val != 0.0 {
                        columns[idx as usize].push((di, val));
                    }
                }
                features.push(doc.features.clone());
            }
            queries.push((start, group.documents.len()));
        }
        let idcg = queries
            .iter()
            .map(|&(start, len)| {
                let grades: Vec<u32> =
                    labels[start..start + len].iter().map(|&l| l as u32).collect();
                idcg_at_k::<Real>(&grades, k)
            })
            .collect();
        Self {
            queries,
            labels,
            features,
            columns,
            idcg,
        }
    }

    fn scores_for(&self, weights: &[Real]) -> Vec<Real> {
        self.features
            .iter()
            .map(|f| {
                f.iter()
                    .map(|&(idx, val)| weights.get(idx as usize).copied().unwrap_or(0.0) * val)
                    .sum()
            })
            .collect()
    }

    /// Mean NDCG@k over queries with a positive ideal DCG, ranking each
    /// query's documents by `scores` with stable tie-breaking.
    fn mean_ndcg(&self, scores: &[Real], k: usize) -> Real {
        let mut sum = 0.0;
        let mut counted = 0usize;
        let mut order: Vec<usize> = Vec::new();
        for (qi, &(start, len)) in self.queries.iter().enumerate() {
            if self.idcg[qi] <= 0.0 {
                continue;
            }
            order.clear();
            order.extend(start..start + len);
            order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
            let dcg: Real = order
                .iter()
                .take(k)
                .enumerate()
                .map(|(i, &di)| self.labels[di] as Real / ((i + 2) as Real).log2())
                .sum();
            sum += dcg / self.idcg[qi];
            counted += 1;
        }
        if counted == 0 {
            0.0
        } else {
            sum / counted as Real
        }
    }
}

/// Greedy line-search coordinate ascent. Features are visited in fixed index
/// order each sweep; the run stops when a full sweep improves the objective
/// by less than `tolerance` or `max_sweeps` is reached. With `restarts > 1`
/// subsequent starts draw seeded random weights in [0, 1] and the best final
/// model wins.
pub fn coordinate_ascent(
    dataset: &[QueryGroup],
    init: &LinearModel,
    config: &CAConfig,
) -> Result<(LinearModel, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("coordinate ascent over empty dataset"));
    }
    let num_features = init.weights.len().max(
        dataset
            .iter()
            .flat_map(|g| g.documents.iter())
            .flat_map(|d| d.features.iter())
            .map(|&(i, _)| i as usize + 1)
            .max()
            .unwrap_or(0),
    );
    let start_time = Instant::now();
    let data = ScoredDataset::build(dataset, num_features, config.k);

    let mut init_weights = init.weights.clone();
    init_weights.resize(num_features, 0.0);

    use rand::{Rng, SeedableRng};
    let mut best: Option<(Real, Vec<Real>, TrainReport)> = None;
    for restart in 0..config.restarts.max(1) {
        let weights = if restart == 0 {
            init_weights.clone()
        } else {
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(restart as u64));
            (0..num_features).map(|_| rng.gen_range(0.0..1.0)).collect()
        };
        let (final_weights, report) = ascend(&data, weights, config);
        let replace = match &best {
            Some((obj, _, _)) => report.final_objective > *obj,
            None => true,
        };
        if replace {
            best = Some((report.final_objective, final_weights, report));
        }
    }
    let (_, weights, mut report) = best.expect("at least one restart");
    report.wall_time_secs = start_time.elapsed().as_secs_f64();

    let model = LinearModel {
        weights,
        metadata: ModelMetadata {
            objective: format!("mean_ndcg@{}", config.k),
            seed: config.seed,
            iterations: report.sweeps as u64,
            initializer: init.metadata.initializer.clone(),
        },
    };
    Ok((model, report))
}

fn ascend(data: &ScoredDataset, mut weights: Vec<Real>, config: &CAConfig) -> (Vec<Real>, TrainReport) {
    let mut scores = data.scores_for(&weights);
    let mut objective = data.mean_ndcg(&scores, config.k);
    let initial_objective = objective;
    let mut trajectory = vec![objective];
    let mut sweeps = 0usize;

    let mut candidate_scores = scores.clone();
    for _ in 0..config.max_sweeps {
        let sweep_start = objective;
        for fi in 0..weights.len() {
            let column = &data.columns[fi];
            if column.is_empty() {
                continue;
            }
            let mut best_delta = 0.0;
            let mut best_objective = objective;
            for t in 0..=config.step_doublings {
                let step = config.step_base * (2.0 as Real).powi(t as i32);
                for delta in [step, -step] {
                    candidate_scores.copy_from_slice(&scores);
                    for &(di, val) in column {
                        candidate_scores[di] += delta * val;
                    }
                    let cand = data.mean_ndcg(&candidate_scores, config.k);
                    if cand > best_objective {
                        best_objective = cand;
                        best_delta = delta;
                    }
                }
            }
            if best_delta != 0.0 {
                weights[fi] += best_delta;
                for &(di, val) in column {
                    scores[di] += best_delta * val;
                }
                objective = best_objective;
            }
        }
        sweeps += 1;
        trajectory.push(objective);
        if objective - sweep_start < config.tolerance {
            break;
        }
    }

    let report = TrainReport {
        initial_objective,
        final_objective: objective,
        sweeps,
        wall_time_secs: 0.0,
        trajectory,
    };
    (weights, report)
}
