//! In-memory BM25 inverted index.
//!
//! ```text
//! score(q, d) = sum over query tokens t of
//!     idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
//! idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
//! ```
//!
//! Repeated query tokens contribute once per occurrence. Tokens absent from
//! the index contribute nothing.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, RelevanceEngine, RetrieverError};
use crate::corpus::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverIndex {
    pub params: Bm25Params,
    /// Sorted by doc ordinal within each list.
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    doc_ids: Vec<String>,
    avg_doc_length: f64,
    #[serde(skip)]
    ordinals: HashMap<String, usize>,
}

impl RetrieverIndex {
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        let mut doc_ids = Vec::with_capacity(corpus.len());
        for (ord, doc) in corpus.iter().enumerate() {
            let tokens = tokenize(&doc.text);
            doc_lengths.push(tokens.len() as u32);
            doc_ids.push(doc.id.clone());
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, tf) in tf {
                postings.entry(term).or_default().push(Posting {
                    doc: ord as u32,
                    tf,
                });
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            total as f64 / doc_lengths.len() as f64
        };
        let mut index = Self {
            params,
            postings,
            doc_lengths,
            doc_ids,
            avg_doc_length,
            ordinals: HashMap::new(),
        };
        index.rebuild_ordinals();
        index
    }

    fn rebuild_ordinals(&mut self) {
        self.ordinals = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), i))
            .collect();
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, ordinal: usize) -> u32 {
        self.doc_lengths[ordinal]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, ordinal: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let dl = f64::from(self.doc_lengths[ordinal]);
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / self.avg_doc_length))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrieverError> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, self)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrieverError> {
        let mut index: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        index.rebuild_ordinals();
        Ok(index)
    }
}

impl RelevanceEngine for RetrieverIndex {
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
        let mut score = 0.0;
        for term in tokenize(grounding) {
            let list = self.postings(&term);
            if let Ok(pos) = list.binary_search_by_key(&(ordinal as u32), |p| p.doc) {
                score += self.term_weight(self.idf(&term), list[pos].tf, ordinal);
            }
        }
        score
    }

    fn score_all(&self, grounding: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_ids.len()];
        for term in tokenize(grounding) {
            let idf = self.idf(&term);
            for p in self.postings(&term) {
                let d = p.doc as usize;
                scores[d] += self.term_weight(idf, p.tf, d);
            }
        }
        scores
    }
}
