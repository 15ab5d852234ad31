//! Run files, ranking metrics and end-to-end precision.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::characterizer::{CarveConfig, CarveContext};
use crate::concept_tree::ConceptTree;
use crate::corpus::Qrels;
use crate::llm::{self, parse_label, render_label_prompt, ChatRequest, Label, LlmError};
use crate::retriever::{retrieve_with, RetrieverError, ScoreOptions, ScoredDoc};

/// Cutoffs reported for reranking.
pub const DIR_KS: [usize; 3] = [10, 100, 500];
/// Cutoffs reported for end-to-end retrieval.
pub const E2E_KS: [usize; 6] = [5, 10, 50, 100, 500, 1000];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invalid run: {0}")]
    Invalid(String),
    #[error("query {0} has no relevance judgments")]
    MissingQuery(String),
    #[error("cutoff k must be at least 1")]
    ZeroK,
    #[error("baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Ranked results per query. Queries are kept in id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    queries: BTreeMap<String, Vec<RunEntry>>,
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl RunFile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a query from an already sorted ranking; ranks start at 1.
    pub fn insert_ranking(&mut self, query_id: &str, ranking: &[ScoredDoc], tag: &str) -> Result<(), EvalError> {
        let entries = ranking
            .iter()
            .enumerate()
            .map(|(i, d)| RunEntry {
                doc_id: d.doc_id.clone(),
                rank: i + 1,
                score: d.score,
                tag: tag.to_owned(),
            })
            .collect();
        self.insert_entries(query_id, entries)
    }

    pub fn insert_entries(&mut self, query_id: &str, entries: Vec<RunEntry>) -> Result<(), EvalError> {
        if !is_token(query_id) {
            return Err(EvalError::Invalid(format!("query id {query_id:?} must be a non-empty token")));
        }
        if self.queries.contains_key(query_id) {
            return Err(EvalError::Invalid(format!("duplicate query {query_id}")));
        }
        validate_entries(query_id, &entries).map_err(EvalError::Invalid)?;
        self.queries.insert(query_id.to_owned(), entries);
        Ok(())
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn ranking(&self, query_id: &str) -> Option<&[RunEntry]> {
        self.queries.get(query_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

fn validate_entries(query_id: &str, entries: &[RunEntry]) -> Result<(), String> {
    let mut seen = HashSet::new();
    for (i, e) in entries.iter().enumerate() {
        if e.rank != i + 1 {
            return Err(format!("query {query_id}: rank {} where {} expected", e.rank, i + 1));
        }
        if !e.score.is_finite() {
            return Err(format!("query {query_id}: non-finite score at rank {}", e.rank));
        }
        if i > 0 && e.score > entries[i - 1].score {
            return Err(format!("query {query_id}: score rises at rank {}", e.rank));
        }
        if !is_token(&e.doc_id) || !is_token(&e.tag) {
            return Err(format!("query {query_id}: doc id and tag must be non-empty tokens"));
        }
        if !seen.insert(e.doc_id.as_str()) {
            return Err(format!("query {query_id}: duplicate doc {}", e.doc_id));
        }
    }
    Ok(())
}

fn format_score(score: f64) -> String {
    // avoid "-0.000000"
    let s = format!("{score:.6}");
    if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        "0.000000".to_owned()
    } else {
        s
    }
}

/// `query_id Q0 doc_id rank score tag`, single spaces, score to 6 decimals.
pub fn write_run_to(run: &RunFile, mut out: impl Write) -> std::io::Result<()> {
    for (q, entries) in &run.queries {
        for e in entries {
            writeln!(out, "{q} Q0 {} {} {} {}", e.doc_id, e.rank, format_score(e.score), e.tag)?;
        }
    }
    out.flush()
}

pub fn write_run(run: &RunFile, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let path = path.as_ref();
    let io = |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    write_run_to(run, BufWriter::new(file)).map_err(io)
}

/// Parse and validate a run. Blank lines are skipped.
pub fn read_run_from(reader: impl BufRead) -> Result<RunFile, EvalError> {
    let mut grouped: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| EvalError::Io {
            path: "<run>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| EvalError::Format { line: lineno, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", fields.len())));
        }
        if fields[1] != "Q0" {
            return Err(bad(format!("second field must be Q0, found {:?}", fields[1])));
        }
        let rank: usize = fields[3]
            .parse()
            .map_err(|_| bad(format!("invalid rank {:?}", fields[3])))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| bad(format!("invalid score {:?}", fields[4])))?;
        grouped.entry(fields[0].to_owned()).or_default().push(RunEntry {
            doc_id: fields[2].to_owned(),
            rank,
            score,
            tag: fields[5].to_owned(),
        });
    }
    let mut run = RunFile::new();
    for (q, entries) in grouped {
        run.insert_entries(&q, entries)?;
    }
    Ok(run)
}

pub fn read_run(path: impl AsRef<Path>) -> Result<RunFile, EvalError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_run_from(BufReader::new(file))
}

fn relevant_in_top(labels: &[u8], k: usize) -> usize {
    labels.iter().take(k).filter(|&&l| l > 0).count()
}

/// Relevant documents in the top `k`, divided by `k`.
pub fn precision_at_k(labels: &[u8], k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    relevant_in_top(labels, k) as f64 / k as f64
}

/// 0 when nothing is relevant.
pub fn recall_at_k(labels: &[u8], k: usize, total_relevant: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    if total_relevant == 0 {
        return 0.0;
    }
    relevant_in_top(labels, k) as f64 / total_relevant as f64
}

/// Sum of precision at each relevant rank within `k`, over
/// `min(total_relevant, k)`. 0 when nothing is relevant.
pub fn ap_at_k(labels: &[u8], k: usize, total_relevant: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    if total_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &l) in labels.iter().take(k).enumerate() {
        if l > 0 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total_relevant.min(k) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub ap: f64,
    /// The query has no relevant documents; recall and AP are reported as 0.
    pub zero_relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    /// Ordered by query id, then by position of k in `ks`.
    pub per_query: Vec<QueryMetrics>,
    /// One entry per k, in `ks` order.
    pub macro_avg: Vec<MacroMetrics>,
}

impl MetricReport {
    pub fn macro_at(&self, k: usize) -> Option<&MacroMetrics> {
        self.macro_avg.iter().find(|m| m.k == k)
    }

    pub fn query_at(&self, query_id: &str, k: usize) -> Option<&QueryMetrics> {
        self.per_query.iter().find(|m| m.query_id == query_id && m.k == k)
    }

    /// `query_id,k,precision,recall,ap` with a `__macro__` row per k.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("query_id,k,precision,recall,ap\n");
        for m in &self.per_query {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                m.query_id, m.k, m.precision, m.recall, m.ap
            ));
        }
        for m in &self.macro_avg {
            out.push_str(&format!(
                "__macro__,{},{:.6},{:.6},{:.6}\n",
                m.k, m.precision, m.recall, m.ap
            ));
        }
        out
    }
}

/// Per-query and macro-averaged P/R/AP at each cutoff. Documents without a
/// judgment count as non-relevant.
pub fn evaluate_run(run: &RunFile, qrels: &Qrels, ks: &[usize]) -> Result<MetricReport, EvalError> {
    if ks.contains(&0) {
        return Err(EvalError::ZeroK);
    }
    let mut per_query = Vec::new();
    for (q, entries) in &run.queries {
        if !qrels.contains_query(q) {
            return Err(EvalError::MissingQuery(q.clone()));
        }
        let labels: Vec<u8> = entries.iter().map(|e| qrels.label(q, &e.doc_id)).collect();
        let total = qrels.relevant_count(q);
        if total == 0 {
            log::warn!("query {q} has no relevant documents; recall and AP reported as 0");
        }
        for &k in ks {
            per_query.push(QueryMetrics {
                query_id: q.clone(),
                k,
                precision: precision_at_k(&labels, k),
                recall: recall_at_k(&labels, k, total),
                ap: ap_at_k(&labels, k, total),
                zero_relevant: total == 0,
            });
        }
    }
    let queries = run.queries.len().max(1) as f64;
    let macro_avg = ks
        .iter()
        .map(|&k| {
            let rows: Vec<&QueryMetrics> = per_query.iter().filter(|m| m.k == k).collect();
            let mean = |f: fn(&QueryMetrics) -> f64| rows.iter().map(|m| f(m)).sum::<f64>() / queries;
            MacroMetrics {
                k,
                precision: mean(|m| m.precision),
                recall: mean(|m| m.recall),
                ap: mean(|m| m.ap),
            }
        })
        .collect();
    Ok(MetricReport {
        ks: ks.to_vec(),
        per_query,
        macro_avg,
    })
}

/// `100 * (a - b) / b`, in percent.
pub fn relative_improvement(a: f64, b: f64) -> Result<f64, EvalError> {
    if b <= 0.0 || b.is_nan() {
        return Err(EvalError::NonPositiveBaseline(b));
    }
    Ok(100.0 * (a - b) / b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2eReport {
    /// `(k, P@k)` in the order requested.
    pub precision: Vec<(usize, f64)>,
    pub labeled: usize,
    /// Replies that contained neither yes nor no; counted as not evidence.
    pub label_failures: usize,
}

/// Retrieve the top `max(ks)` documents with `tree` and label each with the
/// LLM. Demoted concepts take part only when `config.demote_enabled`.
pub fn e2e_precision(
    ctx: &CarveContext<'_>,
    tree: &ConceptTree,
    config: &CarveConfig,
    ks: &[usize],
) -> Result<E2eReport, EvalError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(EvalError::ZeroK);
    }
    let depth = *ks.iter().max().expect("non-empty");
    let opts = ScoreOptions {
        promoted_only: !config.demote_enabled,
        ..ScoreOptions::default()
    };
    let ranking = retrieve_with(ctx.engine, tree, depth, opts)?;
    let mut cache: HashMap<String, u8> = HashMap::new();
    let mut failures = 0;
    let mut labels = Vec::with_capacity(ranking.len());
    for hit in &ranking {
        if let Some(&l) = cache.get(&hit.doc_id) {
            labels.push(l);
            continue;
        }
        let text = ctx
            .corpus
            .get(&hit.doc_id)
            .map(|d| d.text.as_str())
            .ok_or_else(|| RetrieverError::UnknownDoc(hit.doc_id.clone()))?;
        let prompt = render_label_prompt(tree.intent(), text);
        let reply = llm::complete(ctx.llm, &ctx.ledger, &ChatRequest::new(prompt))?;
        let label = match parse_label(&reply.text) {
            Ok(Label::Evidence) => 1,
            Ok(Label::NotEvidence) => 0,
            Err(e) => {
                log::warn!("label for {}: {e}; counted as not evidence", hit.doc_id);
                failures += 1;
                0
            }
        };
        cache.insert(hit.doc_id.clone(), label);
        labels.push(label);
    }
    Ok(E2eReport {
        precision: ks.iter().map(|&k| (k, precision_at_k(&labels, k))).collect(),
        labeled: cache.len(),
        label_failures: failures,
    })
}
