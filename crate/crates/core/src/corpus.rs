//! Document collections, trend queries and binary relevance labels.
//!
//! Corpus files are line-delimited JSON (`{"id":..,"text":..,"meta":{..}}`),
//! qrels files use the four-column TREC layout `query_id iteration doc_id label`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::retriever::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("document id must be non-empty")]
    EmptyId,
    #[error("document {0:?} has empty text")]
    EmptyText(String),
    #[error("line {line}: label {label:?} is not 0 or 1")]
    LabelOutOfRange { line: usize, label: String },
    #[error("line {line}: expected 4 columns, found {found}")]
    ColumnCount { line: usize, found: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    /// Free-form annotations (community, subreddit, ...). Never used for scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, String>>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            meta: None,
        }
    }
}

/// An ordered, duplicate-free document collection. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    documents: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn from_documents(
        name: impl Into<String>,
        docs: impl IntoIterator<Item = Document>,
    ) -> Result<Self, CorpusError> {
        let mut corpus = Self::new(name);
        for doc in docs {
            corpus.push(doc)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, doc: Document) -> Result<(), CorpusError> {
        if doc.id.is_empty() {
            return Err(CorpusError::EmptyId);
        }
        if doc.text.is_empty() {
            return Err(CorpusError::EmptyText(doc.id));
        }
        if self.by_id.contains_key(&doc.id) {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        self.by_id.insert(doc.id.clone(), self.documents.len());
        self.documents.push(doc);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.documents[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.id.as_str())
    }
}

/// A trend query; its text is the retrieval intent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trend {
    pub id: String,
    pub text: String,
}

impl Trend {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Option<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return None;
        }
        Some(Self { id: id.into(), text })
    }
}

pub fn read_corpus(name: &str, reader: impl BufRead) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::new(name);
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        corpus.push(doc).map_err(|e| match e {
            CorpusError::DuplicateId(_) => e,
            other => CorpusError::Malformed {
                line: lineno,
                message: other.to_string(),
            },
        })?;
    }
    Ok(corpus)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_corpus(&name, BufReader::new(file))
}

pub fn write_corpus_to(corpus: &Corpus, mut out: impl Write) -> std::io::Result<()> {
    for doc in corpus.iter() {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_corpus_to(corpus, BufWriter::new(file)).map_err(io_err(path))
}

/// Binary relevance judgments: query id -> doc id -> {0, 1}.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    labels: BTreeMap<String, BTreeMap<String, u8>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics if `label` is not 0 or 1.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, label: u8) {
        assert!(label <= 1, "qrels label must be 0 or 1, got {label}");
        self.labels
            .entry(query_id.to_owned())
            .or_default()
            .insert(doc_id.to_owned(), label);
    }

    /// Unjudged documents count as non-relevant.
    pub fn label(&self, query_id: &str, doc_id: &str) -> u8 {
        self.labels
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.labels.contains_key(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.labels.keys().map(String::as_str)
    }

    pub fn judgments(&self, query_id: &str) -> Option<&BTreeMap<String, u8>> {
        self.labels.get(query_id)
    }

    pub fn relevant_count(&self, query_id: &str) -> usize {
        self.labels
            .get(query_id)
            .map(|m| m.values().filter(|&&l| l == 1).count())
            .unwrap_or(0)
    }

    /// Total number of (query, doc) judgments.
    pub fn len(&self) -> usize {
        self.labels.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn read_qrels(reader: impl BufRead) -> Result<Qrels, CorpusError> {
    let mut qrels = Qrels::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 4 {
            return Err(CorpusError::ColumnCount {
                line: lineno,
                found: cols.len(),
            });
        }
        let label = match cols[3] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(CorpusError::LabelOutOfRange {
                    line: lineno,
                    label: other.to_owned(),
                })
            }
        };
        qrels.insert(cols[0], cols[2], label);
    }
    Ok(qrels)
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_qrels(BufReader::new(file))
}

pub fn write_qrels_to(qrels: &Qrels, mut out: impl Write) -> std::io::Result<()> {
    for (qid, docs) in &qrels.labels {
        for (doc, label) in docs {
            writeln!(out, "{qid} 0 {doc} {label}")?;
        }
    }
    out.flush()
}

pub fn write_qrels(qrels: &Qrels, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_qrels_to(qrels, BufWriter::new(file)).map_err(io_err(path))
}

/// Parameters for [`generate_synthetic_corpus`].
///
/// Filler documents are drawn from a fixed neutral word pool; about half of
/// them also mention one or two trend terms, so a literal query for the trend
/// matches them. Evidence documents are built from paraphrase templates and
/// never contain a trend-term token, which leaves an inferential gap between
/// the trend's wording and its evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_filler: usize,
    pub n_evidence: usize,
    pub trend_terms: Vec<String>,
    pub paraphrase_terms: Vec<String>,
    #[serde(default = "default_query_id")]
    pub query_id: String,
}

fn default_query_id() -> String {
    "q1".to_owned()
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_filler: 400,
            n_evidence: 40,
            trend_terms: vec!["freedom".into(), "independence".into(), "family".into()],
            paraphrase_terms: vec![
                "moved out".into(),
                "own apartment".into(),
                "parents rules".into(),
                "curfew".into(),
            ],
            query_id: default_query_id(),
        }
    }
}

impl SynthSpec {
    /// The trend whose literal wording is the trend terms.
    pub fn trend(&self) -> Trend {
        Trend {
            id: self.query_id.clone(),
            text: self.trend_terms.join(" "),
        }
    }
}

const WORD_POOL: &[&str] = &[
    "weather", "garden", "coffee", "morning", "train", "ticket", "music", "guitar", "recipe",
    "oven", "bread", "pasta", "market", "window", "paint", "bicycle", "helmet", "river", "bridge",
    "camera", "photo", "movie", "theater", "popcorn", "laptop", "keyboard", "monitor", "printer",
    "library", "novel", "chapter", "author", "puzzle", "board", "game", "soccer", "stadium",
    "jersey", "season", "winter", "summer", "jacket", "boots", "hiking", "trail", "mountain",
    "lake", "fishing", "boat", "engine", "repair", "garage", "tire", "highway", "traffic",
    "parking", "coupon", "grocery", "onion", "garlic", "pepper", "salad", "dinner", "lunch",
    "breakfast", "pancake", "sugar", "flour", "butter", "cheese", "pizza", "delivery", "order",
    "package", "mail", "stamp", "letter", "phone", "battery", "charger", "cable", "router",
    "signal", "update", "software", "website", "forum", "thread", "reply", "comment", "upvote",
    "meme", "joke", "podcast", "episode", "radio", "song", "album", "concert", "festival",
    "tent", "camping", "fire", "wood", "hammer", "nail", "shelf", "table", "chair", "couch",
    "blanket", "pillow", "lamp", "candle", "plant", "flower", "seed", "soil", "tomato", "carrot",
    "potato", "apple", "banana", "orange", "lemon", "juice", "water", "bottle", "glass", "plate",
    "spoon", "fork", "knife", "kitchen", "sink", "soap", "towel", "shower", "mirror", "brush",
    "paper", "pencil", "notebook", "desk", "office", "meeting", "schedule", "calendar",
    "weekend", "holiday", "beach", "sand", "wave", "surf", "island", "airport", "flight",
    "luggage", "hotel", "museum", "statue", "painting", "gallery", "sketch", "canvas", "clay",
    "pottery", "knitting", "yarn", "sweater", "scarf", "gloves", "snow", "rain", "cloud",
    "thunder", "storm", "sunset", "sunrise", "stars", "telescope", "planet", "rocket", "science",
    "math", "homework", "exam", "grade", "teacher", "lecture", "campus", "dorm", "roommate",
];

const EVIDENCE_TEMPLATES: &[&str] = &[
    "finally {p} and it feels like I can breathe again after the {w} and the {w}",
    "honestly since {p} my whole routine changed, even my {w} habits",
    "anyone else deal with {p}? I keep thinking about it while doing {w} stuff",
    "{p} was the best decision I made this year, no more arguing over {w}",
    "the day I got {p} I celebrated with some {w} and {w}",
    "tired of {p} so I started planning around my {w} schedule",
];

/// Deterministic synthetic corpus with planted evidence.
///
/// Documents are shuffled so filler and evidence interleave; ids are `d00000`,
/// `d00001`, ... in final order. Qrels judge every document (evidence 1,
/// filler 0) under `spec.query_id`.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> (Corpus, Qrels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let trend_tokens: BTreeSet<String> =
        spec.trend_terms.iter().flat_map(|t| tokenize(t)).collect();
    let paraphrase_tokens: BTreeSet<String> =
        spec.paraphrase_terms.iter().flat_map(|t| tokenize(t)).collect();
    let pool: Vec<&str> = WORD_POOL
        .iter()
        .copied()
        .filter(|w| !trend_tokens.contains(*w) && !paraphrase_tokens.contains(*w))
        .collect();

    let mut texts: Vec<(String, bool)> = Vec::with_capacity(spec.n_filler + spec.n_evidence);

    for _ in 0..spec.n_filler {
        let len = rng.gen_range(12..=20);
        let mut words: Vec<String> = (0..len)
            .map(|_| pool[rng.gen_range(0..pool.len())].to_owned())
            .collect();
        if !spec.trend_terms.is_empty() && rng.gen_bool(0.5) {
            for _ in 0..rng.gen_range(1..=2) {
                let term = &spec.trend_terms[rng.gen_range(0..spec.trend_terms.len())];
                let at = rng.gen_range(0..=words.len());
                words.insert(at, term.clone());
            }
        }
        texts.push((words.join(" "), false));
    }

    for _ in 0..spec.n_evidence {
        let template = EVIDENCE_TEMPLATES[rng.gen_range(0..EVIDENCE_TEMPLATES.len())];
        let phrase = if spec.paraphrase_terms.is_empty() {
            pool[rng.gen_range(0..pool.len())].to_owned()
        } else {
            spec.paraphrase_terms[rng.gen_range(0..spec.paraphrase_terms.len())].clone()
        };
        let mut text = template.replacen("{p}", &phrase, 1);
        while text.contains("{w}") {
            text = text.replacen("{w}", pool[rng.gen_range(0..pool.len())], 1);
        }
        if !spec.paraphrase_terms.is_empty() && rng.gen_bool(0.5) {
            let extra = &spec.paraphrase_terms[rng.gen_range(0..spec.paraphrase_terms.len())];
            text.push_str(", also ");
            text.push_str(extra);
        }
        // Template glue words could collide with trend vocabulary.
        let text = text
            .split(' ')
            .filter(|w| tokenize(w).iter().all(|t| !trend_tokens.contains(t)))
            .collect::<Vec<_>>()
            .join(" ");
        texts.push((text, true));
    }

    texts.shuffle(&mut rng);

    let mut corpus = Corpus::new("synthetic");
    let mut qrels = Qrels::new();
    for (i, (text, evidence)) in texts.into_iter().enumerate() {
        let id = format!("d{i:05}");
        qrels.insert(&spec.query_id, &id, u8::from(evidence));
        corpus
            .push(Document::new(id, text))
            .expect("generated ids are unique and texts non-empty");
    }
    (corpus, qrels)
}
