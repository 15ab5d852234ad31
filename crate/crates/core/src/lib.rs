//! Evidence retrieval with weighted concept trees.
//!
//! A concept tree carves an intent into promoted and demoted concepts, each
//! represented by a set of groundings (plain query strings). Documents are
//! scored against a tree by summing weighted per-grounding scores from an
//! ordinary retrieval engine. Trees are grown by the [`characterizer`], which
//! alternates retrieval, clustering and LLM reasoning steps.
//!
//! Module map:
//!
//! - [`corpus`]: documents, relevance labels, synthetic corpora
//! - [`retriever`]: BM25 engine and tree scoring (score, rerank, retrieve)
//! - [`concept_tree`]: tree data model, weighting, JSON schema
//! - [`clustering`]: embeddings and seeded spherical k-means
//! - [`llm`]: prompts, response parsers, transports, cost ledger
//! - [`characterizer`]: tree construction
//! - [`evaluation`]: run files, P/R/AP@k, end-to-end precision

pub mod characterizer;
pub mod clustering;
pub mod concept_tree;
pub mod corpus;
pub mod evaluation;
pub mod llm;
pub mod retriever;

pub use characterizer::{carve, expand_concept, predict_cost, CarveConfig, CarveContext, CostPrediction};
pub use concept_tree::{Concept, ConceptDraft, ConceptId, ConceptTree, Grounding, Polarity, Provenance};
pub use corpus::{Corpus, Document, Qrels, SynthSpec, Trend};
pub use retriever::{Bm25Params, RelevanceEngine, RetrieverIndex, ScoredDoc};
