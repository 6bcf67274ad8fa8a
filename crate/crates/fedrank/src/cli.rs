//! Command-line surface: training, evaluation, collation and the
//! max-entropy verifier.
//!
//! Exit codes: 0 success, 1 validation error (bad flags or bad input files),
//! 2 internal failure.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::core::{rank_by_score, score_linear, FusionModel, LinearModel, QueryGroup, TypeRegistry};
use crate::error::{Error, Result};
use crate::fusion::{collate, fusion_features, stochastic_search, SSConfig};
use crate::io::{
    parse_fusion_dataset, parse_record_dataset, write_atomic, Dataset, EvalReport, EvalRow,
    ModelFile, ModelKind,
};
use crate::ltr_ca::{
    coordinate_ascent, feature_stats, init_weights_customized, init_weights_uniform, CAConfig,
};
use crate::maxent::{closed_form_allocation, verify_claim1};
use crate::metrics::diversity::nce_at_k;
use crate::metrics::relevance::{ndcg_at_k, s_recall_at_k};
use crate::Real;

#[derive(Parser, Debug)]
#[command(name = "fedrank", version, about = "Federated learning-to-rank toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitKind {
    Customized,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FusionAlgo {
    Ss,
    Ca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TypesUniverse {
    /// K = number of record types across the whole dataset.
    Global,
    /// K = number of distinct record types in the query's candidate pool.
    Query,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a record-specific linear ranker by coordinate ascent.
    TrainRecord {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        init: InitKind,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML file overriding coordinate ascent settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train per-record-type fusion weights.
    TrainFusion {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        algo: FusionAlgo,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML file overriding stochastic-search settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the optimizer trace (iteration, operation, loss).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Apply a model to a dataset and report metrics.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated list, e.g. `ndcg@100,nce@8,srecall@8`.
        #[arg(long)]
        metrics: String,
        /// Output stem; writes `<stem>.json` and `<stem>.csv`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "global")]
        types_universe: TypesUniverse,
    },
    /// Collate a fusion dataset into per-query global rankings.
    Collate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the closed-form max-entropy allocation for K types at n
    /// positions; `--verify` cross-checks with branch-and-bound and brute
    /// force over the whole (K, n) range.
    Maxent {
        #[arg(long)]
        types: usize,
        #[arg(long)]
        positions: usize,
        #[arg(long, default_value_t = false)]
        verify: bool,
    },
}

/// Runs the CLI against explicit arguments; returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with success status.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e @ (Error::Parse { .. } | Error::InvalidArgument(_) | Error::EmptyInput(_))) => {
            eprintln!("error: {e}");
            1
        }
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => {
            eprintln!("error: {e}");
            1
        }
        Err(e) => {
            eprintln!("internal error: {e}");
            2
        }
    }
}

fn load_toml_config<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::TrainRecord {
            data,
            init,
            k,
            out,
            seed,
            config,
        } => {
            let dataset = parse_record_dataset(&data)?;
            if dataset.queries.is_empty() {
                return Err(Error::EmptyInput("no usable training queries"));
            }
            let mut ca_config: CAConfig = match config {
                Some(path) => load_toml_config(&path)?,
                None => CAConfig::default(),
            };
            ca_config.k = k;
            ca_config.seed = seed;
            let stats = feature_stats(&dataset.queries)?;
            let init_model = match init {
                InitKind::Customized => init_weights_customized(&stats),
                InitKind::Uniform => init_weights_uniform(stats.num_features().max(1)),
            };
            let (model, report) = coordinate_ascent(&dataset.queries, &init_model, &ca_config)?;
            ModelFile::linear(model).save(&out)?;
            println!(
                "train-record: objective {:.6} -> {:.6} in {} sweeps ({:.2}s), model written to {}",
                report.initial_objective,
                report.final_objective,
                report.sweeps,
                report.wall_time_secs,
                out.display()
            );
            Ok(())
        }
        Command::TrainFusion {
            data,
            algo,
            k,
            out,
            seed,
            config,
            trace,
        } => {
            let dataset = parse_fusion_dataset(&data)?;
            if dataset.queries.is_empty() {
                return Err(Error::EmptyInput("no usable training queries"));
            }
            match algo {
                FusionAlgo::Ss => {
                    let mut ss_config: SSConfig = match config {
                        Some(path) => load_toml_config(&path)?,
                        None => SSConfig::default(),
                    };
                    ss_config.k = k;
                    ss_config.seed = seed;
                    let (model, report) =
                        stochastic_search(&dataset.queries, &dataset.registry, &ss_config)?;
                    ModelFile::fusion(model).save(&out)?;
                    if let Some(trace_path) = trace {
                        let mut text = String::from("iteration,operation,best_loss\n");
                        for step in &report.trace {
                            text.push_str(&format!(
                                "{},{},{:.12}\n",
                                step.iteration, step.op, step.best_loss
                            ));
                        }
                        write_atomic(&trace_path, text.as_bytes())?;
                    }
                    println!(
                        "train-fusion(ss): objective {:.6} -> {:.6} in {} iterations ({:.2}s), model written to {}",
                        report.init_objective,
                        report.final_objective,
                        report.iterations,
                        report.wall_time_secs,
                        out.display()
                    );
                }
                FusionAlgo::Ca => {
                    let model = train_fusion_ca(&dataset, k, seed, config.as_ref())?;
                    ModelFile::fusion(model).save(&out)?;
                    println!("train-fusion(ca): model written to {}", out.display());
                }
            }
            Ok(())
        }
        Command::Evaluate {
            data,
            model,
            metrics,
            report,
            types_universe,
        } => {
            let dataset = parse_fusion_dataset(&data)?;
            let model = ModelFile::load(&model)?;
            let specs = parse_metric_specs(&metrics)?;
            let eval = evaluate_dataset(&dataset, &model.model, &specs, types_universe)?;
            eval.save(&report)?;
            for (metric, value) in &eval.aggregates {
                println!("{metric}\t{value:.6}");
            }
            Ok(())
        }
        Command::Collate { data, model, out } => {
            let dataset = parse_fusion_dataset(&data)?;
            let file = ModelFile::load(&model)?;
            let fusion_model = match &file.model {
                ModelKind::Fusion(m) => m,
                ModelKind::Linear(_) => {
                    return Err(Error::InvalidArgument(
                        "collate requires a fusion model".into(),
                    ))
                }
            };
            let mut text = String::from("qid,rank,doc,score\n");
            for query in &dataset.queries {
                let ranking = collate(query, fusion_model)?;
                for (rank, (doc, score)) in ranking.entries().iter().enumerate() {
                    text.push_str(&format!("{},{},{},{:.12}\n", query.qid, rank + 1, doc, score));
                }
            }
            write_atomic(&out, text.as_bytes())?;
            println!("collated {} queries to {}", dataset.queries.len(), out.display());
            Ok(())
        }
        Command::Maxent {
            types,
            positions,
            verify,
        } => {
            if types == 0 || positions == 0 {
                return Err(Error::InvalidArgument(
                    "--types and --positions must be >= 1".into(),
                ));
            }
            let allocation = closed_form_allocation::<Real>(types, positions);
            println!(
                "optimal allocation for K={types}, n={positions}: counts {:?}, entropy {:.4}",
                allocation.counts, allocation.entropy
            );
            if verify {
                let report = verify_claim1(types, positions);
                println!(
                    "verified {} (K, n) instances: {} failures; nodes {} (duplicate prunes {}, feasible closures {}, bound prunes {})",
                    report.checked,
                    report.failures.len(),
                    report.stats.nodes,
                    report.stats.pruned_duplicate,
                    report.stats.closed_feasible,
                    report.stats.pruned_by_bound
                );
                if !report.all_pass() {
                    return Err(Error::Infeasible(format!(
                        "closed form disagrees with search at {:?}",
                        report.failures
                    )));
                }
            }
            Ok(())
        }
    }
}

/// The in-repo comparator: coordinate ascent over fusion features (one
/// feature per record type). Shard scores are not binary, so uniform
/// initialization is used.
fn train_fusion_ca(
    dataset: &Dataset,
    k: usize,
    seed: u64,
    config: Option<&PathBuf>,
) -> Result<FusionModel> {
    use crate::core::{Document, ModelMetadata};

    let n = dataset.registry.len();
    if n == 0 {
        return Err(Error::EmptyInput("fusion dataset has no record types"));
    }
    // Rebuild each document's features as its one-hot fusion vector so the
    // generic CA trainer can optimize over them.
    let queries: Vec<QueryGroup> = dataset
        .queries
        .iter()
        .map(|q| {
            let features = fusion_features(q)?;
            let documents = q
                .documents
                .iter()
                .zip(&features)
                .map(|(d, &(ti, s))| Document {
                    features: vec![(ti as u32, s)],
                    ..d.clone()
                })
                .collect();
            Ok(QueryGroup {
                qid: q.qid.clone(),
                documents,
                shard_scores: q.shard_scores.clone(),
            })
        })
        .collect::<Result<_>>()?;

    let mut ca_config: CAConfig = match config {
        Some(path) => load_toml_config(path)?,
        None => CAConfig::default(),
    };
    ca_config.k = k;
    ca_config.seed = seed;
    let init = init_weights_uniform(n);
    let (model, report) = coordinate_ascent(&queries, &init, &ca_config)?;
    Ok(FusionModel::from_weight_vector(
        &dataset.registry,
        &model.weights,
        ModelMetadata {
            objective: format!("mean_ndcg@{k}"),
            seed,
            iterations: report.sweeps as u64,
            initializer: Some("uniform".into()),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MetricSpec {
    Ndcg(usize),
    Nce(usize),
    SRecall(usize),
}

fn parse_metric_specs(text: &str) -> Result<Vec<MetricSpec>> {
    text.split(',')
        .map(|item| {
            let item = item.trim();
            let (name, k) = item
                .split_once('@')
                .ok_or_else(|| Error::InvalidArgument(format!("bad metric `{item}`")))?;
            let k: usize = k
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad metric cutoff in `{item}`")))?;
            if k == 0 {
                return Err(Error::InvalidArgument(format!("cutoff must be >= 1 in `{item}`")));
            }
            match name {
                "ndcg" => Ok(MetricSpec::Ndcg(k)),
                "nce" => Ok(MetricSpec::Nce(k)),
                "srecall" => Ok(MetricSpec::SRecall(k)),
                other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
            }
        })
        .collect()
}

fn evaluate_dataset(
    dataset: &Dataset,
    model: &ModelKind,
    specs: &[MetricSpec],
    universe: TypesUniverse,
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    for query in &dataset.queries {
        let ranking = rank_query(query, model, &dataset.registry)?;
        let labels = query.labels_by_doc();
        let type_by_doc: HashMap<&str, &str> = query
            .documents
            .iter()
            .map(|d| (d.doc_id.as_str(), d.record_type.name.as_str()))
            .collect();
        let types_in_order: Vec<&str> = ranking
            .doc_ids()
            .map(|id| *type_by_doc.get(id).expect("ranking is a permutation"))
            .collect();
        let universe_size = match universe {
            TypesUniverse::Global => dataset.registry.len(),
            TypesUniverse::Query => {
                let distinct: std::collections::HashSet<&str> =
                    types_in_order.iter().copied().collect();
                distinct.len()
            }
        };
        for spec in specs {
            let (metric, value) = match spec {
                MetricSpec::Ndcg(k) => {
                    let m = ndcg_at_k(&ranking, &labels, *k);
                    (m.name, m.value)
                }
                MetricSpec::Nce(k) => {
                    let m = nce_at_k::<Real>(&types_in_order, universe_size, *k)?;
                    (m.name, m.value)
                }
                MetricSpec::SRecall(k) => {
                    let m = s_recall_at_k::<Real>(&types_in_order, universe_size, *k)?;
                    (m.name, m.value)
                }
            };
            rows.push(EvalRow {
                qid: query.qid.clone(),
                metric,
                value,
            });
        }
    }
    Ok(EvalReport::from_rows(rows))
}

fn rank_query(
    query: &QueryGroup,
    model: &ModelKind,
    _registry: &TypeRegistry,
) -> Result<crate::Ranking> {
    match model {
        ModelKind::Fusion(m) => collate(query, m),
        ModelKind::Linear(m) => score_and_rank_linear(query, m),
    }
}

fn score_and_rank_linear(query: &QueryGroup, model: &LinearModel) -> Result<crate::Ranking> {
    let scored: Vec<(String, Real)> = query
        .documents
        .iter()
        .map(|d| (d.doc_id.clone(), score_linear(model, d)))
        .collect();
    rank_by_score(&scored)
}
