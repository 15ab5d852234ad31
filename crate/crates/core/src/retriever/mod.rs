//! Retrieval engines and concept-tree scoring.
//!
//! [`RelevanceEngine`] is the pluggable single-grounding scorer. The native
//! implementation is [`RetrieverIndex`] (BM25); [`ScoreTable`] is an explicit
//! score table used to pin tree arithmetic in tests. Tree-level scoring,
//! reranking and retrieval live in [`scoring`].

mod bm25;
pub mod scoring;

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use bm25::{Bm25Params, Posting, RetrieverIndex};
pub use scoring::{rerank, rerank_with, retrieve, retrieve_with, tree_score, tree_score_with, ScoreOptions};

#[derive(Debug, thiserror::Error)]
pub enum RetrieverError {
    #[error("unknown document id {0:?}")]
    UnknownDoc(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("index i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("index format: {0}")]
    Format(#[from] serde_json::Error),
}

/// Lowercased maximal runs of alphanumeric characters (Unicode-aware).
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Score descending, then doc id ascending.
pub(crate) fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Sort in place by [`rank_order`] and keep the first `k`.
pub(crate) fn top_k(mut docs: Vec<ScoredDoc>, k: usize) -> Vec<ScoredDoc> {
    if k < docs.len() {
        docs.select_nth_unstable_by(k, rank_order);
        docs.truncate(k);
    }
    docs.sort_by(rank_order);
    docs
}

/// A single-grounding relevance scorer over a fixed document set.
///
/// Documents are addressed by ordinal `0..doc_count()`.
pub trait RelevanceEngine: Sync {
    fn doc_count(&self) -> usize;

    fn doc_id(&self, ordinal: usize) -> &str;

    fn ordinal(&self, doc_id: &str) -> Option<usize>;

    fn score_one(&self, grounding: &str, ordinal: usize) -> f64;

    /// Scores for every document, indexed by ordinal.
    ///
    /// Overrides must produce values bit-identical to [`Self::score_one`].
    fn score_all(&self, grounding: &str) -> Vec<f64> {
        (0..self.doc_count())
            .map(|d| self.score_one(grounding, d))
            .collect()
    }
}

/// Relevance score of `doc_id` for one grounding.
pub fn score_grounding<E: RelevanceEngine + ?Sized>(
    engine: &E,
    grounding: &str,
    doc_id: &str,
) -> Result<f64, RetrieverError> {
    let ord = engine
        .ordinal(doc_id)
        .ok_or_else(|| RetrieverError::UnknownDoc(doc_id.to_owned()))?;
    Ok(engine.score_one(grounding, ord))
}

/// Top-`k` documents for a single grounding. Zero-score documents pad the
/// list when fewer than `k` documents match.
pub fn search<E: RelevanceEngine + ?Sized>(
    engine: &E,
    grounding: &str,
    k: usize,
) -> Result<Vec<ScoredDoc>, RetrieverError> {
    if k == 0 {
        return Err(RetrieverError::ZeroK);
    }
    let scores = engine.score_all(grounding);
    let docs = scores
        .into_iter()
        .enumerate()
        .map(|(d, score)| ScoredDoc {
            doc_id: engine.doc_id(d).to_owned(),
            score,
        })
        .collect();
    Ok(top_k(docs, k))
}

/// Explicit `(grounding, doc) -> score` table; missing pairs score 0.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    doc_ids: Vec<String>,
    ordinals: HashMap<String, usize>,
    scores: HashMap<(String, usize), f64>,
}

impl ScoreTable {
    pub fn new<S: Into<String>>(doc_ids: impl IntoIterator<Item = S>) -> Self {
        let doc_ids: Vec<String> = doc_ids.into_iter().map(Into::into).collect();
        let ordinals = doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), i))
            .collect();
        Self {
            doc_ids,
            ordinals,
            scores: HashMap::new(),
        }
    }

    /// Panics if `doc_id` is not in the table.
    pub fn set(&mut self, grounding: &str, doc_id: &str, score: f64) -> &mut Self {
        let ord = self.ordinals[doc_id];
        self.scores.insert((grounding.to_owned(), ord), score);
        self
    }
}

impl RelevanceEngine for ScoreTable {
    fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    fn doc_id(&self, ordinal: usize) -> &str {
        &self.doc_ids[ordinal]
    }

    fn ordinal(&self, doc_id: &str) -> Option<usize> {
        self.ordinals.get(doc_id).copied()
    }

    fn score_one(&self, grounding: &str, ordinal: usize) -> f64 {
        self.scores
            .get(&(grounding.to_owned(), ordinal))
            .copied()
            .unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_basics() {
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Quick, FOX!"), vec!["quick", "fox"]);
        assert_eq!(tokenize("Straße café 42x"), vec!["straße", "café", "42x"]);
        assert_eq!(tokenize("  --  "), Vec::<String>::new());
    }

    #[test]
    fn top_k_breaks_ties_by_id() {
        let docs = vec![
            ScoredDoc { doc_id: "b".into(), score: 1.0 },
            ScoredDoc { doc_id: "a".into(), score: 1.0 },
            ScoredDoc { doc_id: "c".into(), score: 2.0 },
            ScoredDoc { doc_id: "d".into(), score: -0.0 },
            ScoredDoc { doc_id: "0".into(), score: 0.0 },
        ];
        let ids: Vec<_> = top_k(docs, 5).into_iter().map(|d| d.doc_id).collect();
        assert_eq!(ids, vec!["c", "a", "b", "0", "d"]);
    }

    #[test]
    fn score_table_defaults_to_zero() {
        let mut t = ScoreTable::new(["d1", "d2"]);
        t.set("g", "d1", 2.5);
        assert_eq!(score_grounding(&t, "g", "d1").unwrap(), 2.5);
        assert_eq!(score_grounding(&t, "g", "d2").unwrap(), 0.0);
        assert!(matches!(score_grounding(&t, "g", "zz"), Err(RetrieverError::UnknownDoc(_))));
    }
}
