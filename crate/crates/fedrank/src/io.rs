//! Text formats: LTR-corpus style dataset lines, JSON model files, and
//! JSON/CSV evaluation reports. All outputs are written atomically
//! (temp-then-rename) and are byte-deterministic for a fixed input.
//!
//! Record dataset line:
//! `<label> qid:<qid> <fidx>:<val> ... # doc=<doc_id> rtype=<type>`
//!
//! Fusion dataset line:
//! `<label> qid:<qid> score:<real> rtype:<type> doc:<doc_id>`

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::core::{Document, FusionModel, LinearModel, QueryGroup, RecordType, TypeRegistry};
use crate::error::{Error, Result};
use crate::Real;

/// A parsed dataset: query groups in file order plus the record-type
/// registry (indices assigned lexicographically over all names seen).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub queries: Vec<QueryGroup>,
    pub registry: TypeRegistry,
    /// Queries dropped because they had no positive label.
    pub dropped_queries: usize,
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

struct RawRecordLine {
    label: u8,
    qid: String,
    features: Vec<(u32, Real)>,
    doc_id: String,
    rtype: String,
}

fn parse_record_line(path: &str, lineno: usize, line: &str) -> Result<RawRecordLine> {
    let (body, comment) = match line.split_once('#') {
        Some((b, c)) => (b.trim(), c.trim()),
        None => return Err(parse_err(path, lineno, "missing `# doc=... rtype=...` comment")),
    };
    let mut doc_id = None;
    let mut rtype = None;
    for token in comment.split_whitespace() {
        if let Some(v) = token.strip_prefix("doc=") {
            doc_id = Some(v.to_string());
        } else if let Some(v) = token.strip_prefix("rtype=") {
            rtype = Some(v.to_string());
        }
    }
    let doc_id = doc_id.ok_or_else(|| parse_err(path, lineno, "comment missing doc=<id>"))?;
    let rtype = rtype.ok_or_else(|| parse_err(path, lineno, "comment missing rtype=<type>"))?;

    let mut tokens = body.split_whitespace();
    let label: u8 = tokens
        .next()
        .ok_or_else(|| parse_err(path, lineno, "empty line body"))?
        .parse()
        .map_err(|_| parse_err(path, lineno, "label must be 0 or 1"))?;
    if label > 1 {
        return Err(parse_err(path, lineno, format!("non-binary label {label}")));
    }
    let qid_tok = tokens
        .next()
        .ok_or_else(|| parse_err(path, lineno, "missing qid:<qid>"))?;
    let qid = qid_tok
        .strip_prefix("qid:")
        .ok_or_else(|| parse_err(path, lineno, format!("expected qid:<qid>, got `{qid_tok}`")))?
        .to_string();
    if qid.is_empty() {
        return Err(parse_err(path, lineno, "empty qid"));
    }

    let mut features: Vec<(u32, Real)> = Vec::new();
    for token in tokens {
        let (idx, val) = token
            .split_once(':')
            .ok_or_else(|| parse_err(path, lineno, format!("bad feature token `{token}`")))?;
        let idx: u32 = idx
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad feature index `{idx}`")))?;
        let val: Real = val
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad feature value `{val}`")))?;
        if val != 0.0 && val != 1.0 {
            return Err(parse_err(
                path,
                lineno,
                format!("non-binary feature value {idx}:{val}"),
            ));
        }
        if let Some(&(prev, _)) = features.last() {
            if idx <= prev {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("feature indices must be ascending (saw {prev} then {idx})"),
                ));
            }
        }
        features.push((idx, val));
    }
    Ok(RawRecordLine {
        label,
        qid,
        features,
        doc_id,
        rtype,
    })
}

/// Parses a record-specific dataset (binary features, binary labels) from a
/// buffered reader, streaming line by line. Queries must be contiguous;
/// queries without a positive label are dropped with a warning.
pub fn parse_record_dataset_from(reader: impl BufRead, path: &str) -> Result<Dataset> {
    let mut raw_queries: Vec<(String, Vec<RawRecordLine>)> = Vec::new();
    let mut seen_qids: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_record_line(path, lineno, &line)?;
        match raw_queries.last_mut() {
            Some((qid, rows)) if *qid == row.qid => rows.push(row),
            _ => {
                if seen_qids.contains_key(&row.qid) {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("qid `{}` is not contiguous", row.qid),
                    ));
                }
                seen_qids.insert(row.qid.clone(), lineno);
                raw_queries.push((row.qid.clone(), vec![row]));
            }
        }
    }
    finish_dataset(raw_queries, false, path)
}

pub fn parse_record_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    parse_record_dataset_from(reader, &path.display().to_string())
}

fn parse_fusion_line(path: &str, lineno: usize, line: &str) -> Result<RawFusionLine> {
    let mut label = None;
    let mut qid = None;
    let mut score = None;
    let mut rtype = None;
    let mut doc_id = None;
    for (i, token) in line.split_whitespace().enumerate() {
        if i == 0 {
            let l: u8 = token
                .parse()
                .map_err(|_| parse_err(path, lineno, "label must be 0 or 1"))?;
            if l > 1 {
                return Err(parse_err(path, lineno, format!("non-binary label {l}")));
            }
            label = Some(l);
            continue;
        }
        let (key, value) = token
            .split_once(':')
            .ok_or_else(|| parse_err(path, lineno, format!("bad token `{token}`")))?;
        match key {
            "qid" => qid = Some(value.to_string()),
            "score" => {
                let s: Real = value
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad score `{value}`")))?;
                if !s.is_finite() {
                    return Err(parse_err(path, lineno, format!("non-finite score `{value}`")));
                }
                score = Some(s);
            }
            "rtype" => rtype = Some(value.to_string()),
            "doc" => doc_id = Some(value.to_string()),
            other => {
                return Err(parse_err(path, lineno, format!("unknown field `{other}`")));
            }
        }
    }
    Ok(RawFusionLine {
        label: label.ok_or_else(|| parse_err(path, lineno, "missing label"))?,
        qid: qid.ok_or_else(|| parse_err(path, lineno, "missing qid"))?,
        score: score.ok_or_else(|| parse_err(path, lineno, "missing score"))?,
        rtype: rtype.ok_or_else(|| parse_err(path, lineno, "missing rtype"))?,
        doc_id: doc_id.ok_or_else(|| parse_err(path, lineno, "missing doc"))?,
    })
}

struct RawFusionLine {
    label: u8,
    qid: String,
    score: Real,
    rtype: String,
    doc_id: String,
}

/// Parses a fusion dataset (one line per candidate with its shard score),
/// streaming line by line.
pub fn parse_fusion_dataset_from(reader: impl BufRead, path: &str) -> Result<Dataset> {
    let mut raw_queries: Vec<(String, Vec<RawRecordLine>)> = Vec::new();
    let mut scores: Vec<Vec<Real>> = Vec::new();
    let mut seen_qids: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_fusion_line(path, lineno, &line)?;
        let record = RawRecordLine {
            label: row.label,
            qid: row.qid,
            features: Vec::new(),
            doc_id: row.doc_id,
            rtype: row.rtype,
        };
        match raw_queries.last_mut() {
            Some((qid, rows)) if *qid == record.qid => {
                rows.push(record);
                scores.last_mut().unwrap().push(row.score);
            }
            _ => {
                if seen_qids.contains_key(&record.qid) {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("qid `{}` is not contiguous", record.qid),
                    ));
                }
                seen_qids.insert(record.qid.clone(), lineno);
                raw_queries.push((record.qid.clone(), vec![record]));
                scores.push(vec![row.score]);
            }
        }
    }
    // Reattach scores by position.
    let mut dataset = finish_dataset_with_scores(raw_queries, scores, path)?;
    dataset.queries.retain(|q| !q.documents.is_empty());
    Ok(dataset)
}

pub fn parse_fusion_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    parse_fusion_dataset_from(reader, &path.display().to_string())
}

fn build_registry(raw_queries: &[(String, Vec<RawRecordLine>)]) -> TypeRegistry {
    TypeRegistry::from_names(
        raw_queries
            .iter()
            .flat_map(|(_, rows)| rows.iter().map(|r| r.rtype.clone())),
    )
}

fn finish_dataset(
    raw_queries: Vec<(String, Vec<RawRecordLine>)>,
    _with_scores: bool,
    path: &str,
) -> Result<Dataset> {
    let n = raw_queries.len();
    let scores = vec![Vec::new(); n];
    let mut ds = finish_dataset_with_scores(raw_queries, scores, path)?;
    for q in ds.queries.iter_mut() {
        q.shard_scores = None;
    }
    Ok(ds)
}

fn finish_dataset_with_scores(
    raw_queries: Vec<(String, Vec<RawRecordLine>)>,
    scores: Vec<Vec<Real>>,
    path: &str,
) -> Result<Dataset> {
    let registry = build_registry(&raw_queries);
    let mut queries = Vec::with_capacity(raw_queries.len());
    let mut dropped = 0usize;
    for ((qid, rows), row_scores) in raw_queries.into_iter().zip(scores) {
        if !rows.iter().any(|r| r.label == 1) {
            log::warn!("{path}: query `{qid}` has no positive labels, dropped");
            dropped += 1;
            continue;
        }
        let mut shard_scores = HashMap::new();
        let documents: Vec<Document> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if let Some(&s) = row_scores.get(i) {
                    shard_scores.insert(r.doc_id.clone(), s);
                }
                Document {
                    doc_id: r.doc_id.clone(),
                    record_type: registry.get(&r.rtype).expect("type registered"),
                    features: r.features.clone(),
                    label: r.label,
                }
            })
            .collect();
        queries.push(QueryGroup {
            qid,
            documents,
            shard_scores: if row_scores.is_empty() {
                None
            } else {
                Some(shard_scores)
            },
        });
    }
    if queries.is_empty() {
        log::warn!("{path}: dataset has no usable queries");
    }
    Ok(Dataset {
        queries,
        registry,
        dropped_queries: dropped,
    })
}

/// Serializes a record dataset back to its text format (fixtures, round-trip
/// tests).
pub fn write_record_dataset(dataset: &[QueryGroup], mut out: impl Write) -> Result<()> {
    for group in dataset {
        for doc in &group.documents {
            let feats: Vec<String> = doc
                .features
                .iter()
                .map(|(i, v)| format!("{i}:{v}"))
                .collect();
            writeln!(
                out,
                "{} qid:{} {} # doc={} rtype={}",
                doc.label,
                group.qid,
                feats.join(" "),
                doc.doc_id,
                doc.record_type.name
            )?;
        }
    }
    Ok(())
}

const MODEL_SCHEMA_VERSION: u32 = 1;

/// On-disk model representation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Linear(LinearModel),
    Fusion(FusionModel),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub model: ModelKind,
    /// Set from SOURCE_DATE_EPOCH when present; omitted otherwise so model
    /// files are byte-identical across runs with the same seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

fn created_at_stamp() -> Option<String> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .map(|epoch| format!("{epoch}"))
}

impl ModelFile {
    pub fn linear(model: LinearModel) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            model: ModelKind::Linear(model),
            created_at: created_at_stamp(),
        }
    }

    pub fn fusion(model: FusionModel) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            model: ModelKind::Fusion(model),
            created_at: created_at_stamp(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self =
            serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Model(format!(
                "unsupported schema version {}",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// Writes via a sibling temp file and rename, so readers never observe a
/// partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// One metric value for one query.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalRow {
    pub qid: String,
    pub metric: String,
    pub value: Real,
}

/// Per-query rows plus aggregates (means over the contributing queries).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// metric name -> mean value, in sorted metric order
    pub aggregates: std::collections::BTreeMap<String, Real>,
}

impl EvalReport {
    /// Builds aggregates as plain means of the per-query rows, so an
    /// external recomputation from the rows matches exactly.
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let mut sums: std::collections::BTreeMap<String, (Real, usize)> = Default::default();
        for row in &rows {
            let entry = sums.entry(row.metric.clone()).or_insert((0.0, 0));
            entry.0 += row.value;
            entry.1 += 1;
        }
        let aggregates = sums
            .into_iter()
            .map(|(m, (sum, n))| (m, sum / n as Real))
            .collect();
        Self { rows, aggregates }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("qid,metric,value\n");
        for row in &self.rows {
            out.push_str(&format!("{},{},{:.12}\n", row.qid, row.metric, row.value));
        }
        for (metric, value) in &self.aggregates {
            out.push_str(&format!("ALL,{},{:.12}\n", metric, value));
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.csv`.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        write_atomic(stem.with_extension("json"), json.as_bytes())?;
        write_atomic(stem.with_extension("csv"), self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Ensures a record type exists in a model, surfacing a named error.
pub fn require_type(model: &FusionModel, record_type: &RecordType) -> Result<()> {
    if model.weights.contains_key(&record_type.name) {
        Ok(())
    } else {
        Err(Error::UnknownRecordType(record_type.name.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::ModelMetadata;

    const TOY_RECORD_FILE: &str = "\
1 qid:q1 1:1 3:1 # doc=r1 rtype=toy
1 qid:q1 1:1 3:1 4:1 # doc=r2 rtype=toy
0 qid:q1 2:1 3:1 4:1 # doc=r3 rtype=toy
0 qid:q1 # doc=r4 rtype=toy
";

    #[test]
    fn parse_record_toy_file() {
        let ds = parse_record_dataset_from(TOY_RECORD_FILE.as_bytes(), "toy").unwrap();
        assert_eq!(ds.queries.len(), 1);
        let q = &ds.queries[0];
        assert_eq!(q.qid, "q1");
        assert_eq!(q.documents.len(), 4);
        assert_eq!(q.documents[0].features, vec![(1, 1.0), (3, 1.0)]);
        assert_eq!(q.documents[1].label, 1);
        assert_eq!(q.documents[3].features, vec![]);
        assert_eq!(ds.registry.names(), ["toy"]);
    }

    #[test]
    fn parse_record_empty_file() {
        let ds = parse_record_dataset_from("".as_bytes(), "empty").unwrap();
        assert!(ds.queries.is_empty());
    }

    #[test]
    fn parse_record_rejects_non_binary_value() {
        let text = "1 qid:7 2:5 # doc=a rtype=t\n";
        let err = parse_record_dataset_from(text.as_bytes(), "f").unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 1);
                assert!(msg.contains("non-binary feature value"), "{msg}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn parse_record_rejects_descending_indices() {
        let text = "1 qid:1 3:1 2:1 # doc=a rtype=t\n";
        assert!(parse_record_dataset_from(text.as_bytes(), "f").is_err());
    }

    #[test]
    fn parse_record_drops_no_positive_queries() {
        let text = "\
0 qid:a 1:1 # doc=d1 rtype=t
1 qid:b 1:1 # doc=d2 rtype=t
";
        let ds = parse_record_dataset_from(text.as_bytes(), "f").unwrap();
        assert_eq!(ds.queries.len(), 1);
        assert_eq!(ds.queries[0].qid, "b");
        assert_eq!(ds.dropped_queries, 1);
    }

    #[test]
    fn parse_record_rejects_split_query() {
        let text = "\
1 qid:a 1:1 # doc=d1 rtype=t
1 qid:b 1:1 # doc=d2 rtype=t
1 qid:a 1:1 # doc=d3 rtype=t
";
        assert!(parse_record_dataset_from(text.as_bytes(), "f").is_err());
    }

    const FUSION_FILE: &str = "\
1 qid:q1 score:0.9 rtype:beta doc:b1
0 qid:q1 score:0.4 rtype:alpha doc:a1
1 qid:q2 score:0.7 rtype:alpha doc:a2
0 qid:q2 score:0.5 rtype:beta doc:b2
";

    #[test]
    fn parse_fusion_file() {
        let ds = parse_fusion_dataset_from(FUSION_FILE.as_bytes(), "f").unwrap();
        assert_eq!(ds.queries.len(), 2);
        assert_eq!(ds.registry.names(), ["alpha", "beta"]);
        let q1 = &ds.queries[0];
        let scores = q1.shard_scores.as_ref().unwrap();
        assert_eq!(scores["b1"], 0.9);
        assert_eq!(q1.documents[0].record_type.index, 1); // beta
    }

    #[test]
    fn parse_fusion_unknown_field() {
        let text = "1 qid:q1 score:0.9 rtype:a doc:d bogus:1\n";
        let err = parse_fusion_dataset_from(text.as_bytes(), "f").unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 1);
                assert!(msg.contains("unknown field"), "{msg}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn record_dataset_round_trip() {
        let ds = parse_record_dataset_from(TOY_RECORD_FILE.as_bytes(), "toy").unwrap();
        let mut buf = Vec::new();
        write_record_dataset(&ds.queries, &mut buf).unwrap();
        let reparsed = parse_record_dataset_from(buf.as_slice(), "toy2").unwrap();
        assert_eq!(ds.queries, reparsed.queries);
    }

    #[test]
    fn model_file_round_trip() {
        let model = LinearModel {
            weights: vec![1.0, 0.0, 2.0 / 3.0, 0.5],
            metadata: ModelMetadata {
                objective: "mean_ndcg@10".into(),
                seed: 7,
                iterations: 3,
                initializer: Some("customized".into()),
            },
        };
        let file = ModelFile::linear(model);
        let loaded = ModelFile::from_json(&file.to_json()).unwrap();
        assert_eq!(file, loaded);
    }

    #[test]
    fn fusion_model_file_round_trip() {
        let model = FusionModel {
            weights: [("a".to_string(), 1.5), ("b".to_string(), -0.25)]
                .into_iter()
                .collect(),
            metadata: ModelMetadata {
                objective: "mean_ndcg@100".into(),
                seed: 1,
                iterations: 40,
                initializer: Some("pairwise_hinge".into()),
            },
        };
        let file = ModelFile::fusion(model);
        let loaded = ModelFile::from_json(&file.to_json()).unwrap();
        assert_eq!(file, loaded);
    }

    #[test]
    fn eval_report_aggregates_match_rows() {
        let rows = vec![
            EvalRow {
                qid: "q1".into(),
                metric: "ndcg@10".into(),
                value: 1.0,
            },
            EvalRow {
                qid: "q2".into(),
                metric: "ndcg@10".into(),
                value: 0.5,
            },
            EvalRow {
                qid: "q1".into(),
                metric: "nce@10".into(),
                value: 0.4,
            },
        ];
        let report = EvalReport::from_rows(rows.clone());
        assert_eq!(report.aggregates["ndcg@10"], 0.75);
        assert_eq!(report.aggregates["nce@10"], 0.4);
        // Independent recomputation from the report's own rows.
        let vals: Vec<Real> = report
            .rows
            .iter()
            .filter(|r| r.metric == "ndcg@10")
            .map(|r| r.value)
            .collect();
        assert_eq!(
            report.aggregates["ndcg@10"],
            vals.iter().sum::<Real>() / vals.len() as Real
        );
        let csv = report.to_csv();
        assert!(csv.contains("ALL,ndcg@10,0.750000000000"));
    }

    #[test]
    fn large_fusion_file_streams() {
        // 30,000 queries through the streaming reader.
        let mut text = String::new();
        for q in 0..30_000 {
            text.push_str(&format!("1 qid:q{q} score:0.9 rtype:a doc:d{q}p\n"));
            text.push_str(&format!("0 qid:q{q} score:0.1 rtype:b doc:d{q}n\n"));
        }
        let ds = parse_fusion_dataset_from(text.as_bytes(), "big").unwrap();
        assert_eq!(ds.queries.len(), 30_000);
    }
}
