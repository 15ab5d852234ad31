//! Concept-tree construction.
//!
//! Each promoted node is expanded by retrieving with its ancestor path,
//! clustering what comes back, asking the LLM which clusters support or
//! refute the intent (explore) and which supporting clusters are missing
//! (envision), and turning every chosen cluster into a child concept via a
//! properties prompt followed by a groundings prompt.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::clustering::{cluster_documents, Clusterer, EmbedError, Embedder};
use crate::concept_tree::{ConceptDraft, ConceptId, ConceptTree, Polarity, Provenance, TreeError};
use crate::corpus::Corpus;
use crate::llm::{
    self, parse_envision_response, parse_explore_response, parse_groundings_response, parse_properties_response,
    prompt_hash, render_envision_prompt, render_explore_prompt, render_groundings_prompt, render_properties_prompt,
    ChatRequest, ClusterView, CostLedger, LlmError, LlmProvider,
};
use crate::retriever::{retrieve, RelevanceEngine, RetrieverError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarveConfig {
    /// Documents retrieved per expansion.
    pub k: usize,
    pub pbf: usize,
    pub ebf: usize,
    pub dbf: usize,
    pub max_depth: usize,
    /// Clusters shown to the LLM.
    pub m: usize,
    /// Centroid documents shown per cluster.
    pub n: usize,
    /// Groundings per concept.
    pub gamma: usize,
    pub root_weight: f64,
    /// Turn refuting clusters into demoted concepts.
    pub demote_enabled: bool,
    /// Expand the nodes of each level concurrently.
    pub parallel: bool,
}

impl Default for CarveConfig {
    fn default() -> Self {
        Self {
            k: 2000,
            pbf: 5,
            ebf: 5,
            dbf: 5,
            max_depth: 2,
            m: 20,
            n: 6,
            gamma: 8,
            root_weight: 0.1,
            demote_enabled: false,
            parallel: false,
        }
    }
}

impl CarveConfig {
    pub fn validate(&self) -> Result<(), CarveError> {
        let counts = [
            ("k", self.k),
            ("pbf", self.pbf),
            ("ebf", self.ebf),
            ("dbf", self.dbf),
            ("m", self.m),
            ("n", self.n),
            ("gamma", self.gamma),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(CarveError::Config(format!("{name} must be at least 1")));
        }
        if !(self.root_weight > 0.0 && self.root_weight <= 1.0) {
            return Err(CarveError::Config(format!(
                "root_weight must be in (0, 1], got {}",
                self.root_weight
            )));
        }
        Ok(())
    }

    /// `pbf + ebf + dbf`.
    pub fn branching(&self) -> usize {
        self.pbf + self.ebf + self.dbf
    }

    /// Nodes expanded when every expansion yields its full promoted quota:
    /// `sum_{d < max_depth} (pbf + ebf)^d`.
    pub fn full_expansion_count(&self) -> usize {
        (0..self.max_depth)
            .map(|d| (self.pbf + self.ebf).pow(d as u32))
            .sum()
    }
}

#[derive(Debug, Error)]
pub enum CarveError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("concept {0} cannot be expanded: {1}")]
    NotExpandable(ConceptId, String),
    #[error("retrieved document {0} is not in the corpus")]
    MissingDocument(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    pub node_id: ConceptId,
    pub kind: String,
    pub detail: Value,
}

/// Everything an expansion needs besides the tree and configuration.
pub struct CarveContext<'a> {
    pub engine: &'a dyn RelevanceEngine,
    pub corpus: &'a Corpus,
    pub llm: &'a dyn LlmProvider,
    pub embedder: &'a dyn Embedder,
    pub clusterer: &'a dyn Clusterer,
    pub ledger: CostLedger,
    pub seed: u64,
    trace: Mutex<Vec<TraceEvent>>,
}

impl<'a> CarveContext<'a> {
    pub fn new(
        engine: &'a dyn RelevanceEngine,
        corpus: &'a Corpus,
        llm: &'a dyn LlmProvider,
        embedder: &'a dyn Embedder,
        clusterer: &'a dyn Clusterer,
        seed: u64,
    ) -> Self {
        Self {
            engine,
            corpus,
            llm,
            embedder,
            clusterer,
            ledger: CostLedger::new(),
            seed,
            trace: Mutex::new(Vec::new()),
        }
    }

    pub fn trace(&self) -> Vec<TraceEvent> {
        self.trace.lock().unwrap().clone()
    }

    /// One JSON object per line, LF-terminated.
    pub fn trace_jsonl(&self) -> String {
        self.trace
            .lock()
            .unwrap()
            .iter()
            .map(|e| serde_json::to_string(e).expect("trace event serializes") + "\n")
            .collect()
    }

    fn append(&self, node_id: ConceptId, events: Vec<(String, Value)>) {
        let mut trace = self.trace.lock().unwrap();
        for (kind, detail) in events {
            let step = trace.len() as u64;
            trace.push(TraceEvent {
                step,
                node_id,
                kind,
                detail,
            });
        }
    }
}

/// A cluster chosen for induction.
struct Candidate {
    name: String,
    posts: Vec<String>,
    provenance: Provenance,
    polarity: Polarity,
}

/// Children planned for one node. `events` is the node's trace fragment.
struct Expansion {
    drafts: Vec<(ConceptDraft, Polarity)>,
    events: Vec<(String, Value)>,
}

struct Expander<'c, 'a> {
    ctx: &'c CarveContext<'a>,
    config: &'c CarveConfig,
    events: Vec<(String, Value)>,
}

impl Expander<'_, '_> {
    fn event(&mut self, kind: &str, detail: Value) {
        self.events.push((kind.to_owned(), detail));
    }

    fn ask(&mut self, prompt_kind: &str, prompt: String) -> Result<String, LlmError> {
        let c = llm::complete(self.ctx.llm, &self.ctx.ledger, &ChatRequest::new(prompt.as_str()))?;
        self.event(
            "llm_call",
            json!({
                "prompt": prompt_kind,
                "prompt_sha256": prompt_hash(&prompt),
                "input_units": c.input_units,
                "output_units": c.output_units,
            }),
        );
        Ok(c.text)
    }

    /// Run the LLM steps. Parse errors stop the node and are returned in the
    /// inner result alongside whatever children were completed first.
    fn run(&mut self, tree: &ConceptTree, node: ConceptId) -> Result<Vec<(ConceptDraft, Polarity)>, CarveError> {
        let cfg = self.config;
        let ctx = self.ctx;

        let path = tree.ancestor_path(node)?;
        let path_groundings = path.grounding_count() as u64;
        ctx.ledger.add_retriever_calls(path_groundings);
        let hits = retrieve(ctx.engine, &path, cfg.k)?;
        let retrieved: Vec<(String, String)> = hits
            .into_iter()
            .filter(|h| h.score > 0.0)
            .map(|h| {
                ctx.corpus
                    .get(&h.doc_id)
                    .map(|d| (h.doc_id.clone(), d.text.clone()))
                    .ok_or(CarveError::MissingDocument(h.doc_id))
            })
            .collect::<Result<_, _>>()?;
        self.event(
            "retrieve",
            json!({"path_groundings": path_groundings, "documents": retrieved.len()}),
        );

        let seed = ctx.seed ^ (node as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let clusters = cluster_documents(&retrieved, ctx.embedder, ctx.clusterer, cfg.m, cfg.n, seed)?;
        let text_of = |id: &str| ctx.corpus.get(id).map(|d| d.text.clone()).unwrap_or_default();
        let views: Vec<ClusterView> = clusters
            .clusters
            .iter()
            .map(|c| ClusterView {
                name: c.label.clone(),
                posts: c.centroid_doc_ids.iter().map(|id| text_of(id)).collect(),
            })
            .collect();
        let shown: u64 = views.iter().map(|v| v.posts.len() as u64).sum();
        self.event(
            "cluster",
            json!({"clusters": views.iter().zip(&clusters.clusters).map(|(v, c)| json!({
                "label": v.name, "size": c.member_doc_ids.len(), "centroids": c.centroid_doc_ids,
            })).collect::<Vec<_>>()}),
        );

        let mut drafts = Vec::new();
        if let Err(e) = self.llm_steps(tree, &views, shown, &mut drafts) {
            match e {
                CarveError::Llm(err @ LlmError::Parse { .. }) => {
                    let raw = match &err {
                        LlmError::Parse { raw, .. } => raw.clone(),
                        _ => unreachable!(),
                    };
                    log::warn!("expansion of concept {node} stopped: {err}");
                    self.event("parse_error", json!({"message": err.to_string(), "raw": raw}));
                }
                fatal => return Err(fatal),
            }
        }
        Ok(drafts)
    }

    fn llm_steps(
        &mut self,
        tree: &ConceptTree,
        views: &[ClusterView],
        shown: u64,
        drafts: &mut Vec<(ConceptDraft, Polarity)>,
    ) -> Result<(), CarveError> {
        let cfg = self.config;
        let ledger = &self.ctx.ledger;
        let trend = tree.intent();

        let mut supporting = Vec::new();
        let mut refuting = Vec::new();
        if views.is_empty() {
            self.event("explore_skipped", json!({"reason": "no clusters"}));
        } else {
            let reply = self.ask("explore", render_explore_prompt(trend, views, cfg.pbf, cfg.dbf))?;
            ledger.add_shown_texts(shown);
            let choice = parse_explore_response(&reply, cfg.pbf, cfg.dbf, views.len())?;
            let worst: Vec<usize> = choice
                .worst
                .iter()
                .copied()
                .filter(|w| !choice.best.contains(w))
                .collect();
            self.event("explore", json!({"best": choice.best, "worst": worst}));
            supporting = choice.best;
            refuting = worst;
        }

        let reply = self.ask("envision", render_envision_prompt(trend, views, cfg.ebf, cfg.n))?;
        ledger.add_shown_texts(shown);
        let envisioned = parse_envision_response(&reply, cfg.ebf, cfg.n)?;
        ledger.add_generated_texts(envisioned.iter().map(|c| c.posts.len() as u64).sum());
        self.event(
            "envision",
            json!({"categories": envisioned.iter().map(|c| json!({"name": c.name, "posts": c.posts.len()})).collect::<Vec<_>>()}),
        );

        let from_view = |i: usize, provenance, polarity| Candidate {
            name: views[i - 1].name.clone(),
            posts: views[i - 1].posts.clone(),
            provenance,
            polarity,
        };
        let mut candidates: Vec<Candidate> = supporting
            .iter()
            .map(|&i| from_view(i, Provenance::Explore, Polarity::Promoted))
            .collect();
        candidates.extend(envisioned.into_iter().map(|c| Candidate {
            name: c.name,
            posts: c.posts,
            provenance: Provenance::Envision,
            polarity: Polarity::Promoted,
        }));
        if cfg.demote_enabled {
            candidates.extend(
                refuting
                    .iter()
                    .map(|&i| from_view(i, Provenance::Explore, Polarity::Demoted)),
            );
        }

        for cand in candidates {
            let supporting = cand.polarity == Polarity::Promoted;
            let reply = self.ask(
                "properties",
                render_properties_prompt(trend, &cand.posts, supporting),
            )?;
            ledger.add_shown_texts(cand.posts.len() as u64);
            let properties = parse_properties_response(&reply)?;
            let reply = self.ask("groundings", render_groundings_prompt(&properties, cfg.gamma))?;
            let parsed = parse_groundings_response(&reply, cfg.gamma)?;
            ledger.add_generated_texts(parsed.groundings.len() as u64);
            if parsed.shortfall {
                log::warn!(
                    "concept {:?}: {} of {} groundings",
                    cand.name,
                    parsed.groundings.len(),
                    cfg.gamma
                );
            }
            self.event(
                "concept",
                json!({
                    "name": cand.name,
                    "polarity": cand.polarity,
                    "provenance": cand.provenance,
                    "properties": properties.len(),
                    "groundings": parsed.groundings.len(),
                    "shortfall": parsed.shortfall,
                }),
            );
            drafts.push((
                ConceptDraft {
                    name: cand.name,
                    provenance: cand.provenance,
                    groundings: parsed.groundings,
                    properties,
                },
                cand.polarity,
            ));
        }
        Ok(())
    }
}

fn check_expandable(tree: &ConceptTree, id: ConceptId, config: &CarveConfig) -> Result<(), CarveError> {
    let concept = tree.get(id).ok_or(TreeError::UnknownConcept(id))?;
    let ancestors = tree.ancestors(id)?;
    let promoted = concept.polarity == Polarity::Promoted
        && ancestors
            .iter()
            .all(|a| tree.get(*a).is_some_and(|c| c.polarity == Polarity::Promoted));
    if !promoted {
        return Err(CarveError::NotExpandable(id, "not a promoted concept".into()));
    }
    if ancestors.len() >= config.max_depth {
        return Err(CarveError::NotExpandable(
            id,
            format!("depth {} is not below max_depth {}", ancestors.len(), config.max_depth),
        ));
    }
    Ok(())
}

fn plan(ctx: &CarveContext<'_>, tree: &ConceptTree, id: ConceptId, config: &CarveConfig) -> Result<Expansion, CarveError> {
    let mut ex = Expander {
        ctx,
        config,
        events: Vec::new(),
    };
    let drafts = ex.run(tree, id)?;
    Ok(Expansion {
        drafts,
        events: ex.events,
    })
}

fn attach(ctx: &CarveContext<'_>, tree: &mut ConceptTree, id: ConceptId, ex: Expansion) -> Result<Vec<ConceptId>, CarveError> {
    ctx.append(id, ex.events);
    let (promoted, demoted): (Vec<_>, Vec<_>) = ex
        .drafts
        .into_iter()
        .partition(|(_, p)| *p == Polarity::Promoted);
    let ids = tree.add_children(
        id,
        promoted.into_iter().map(|(d, _)| d).collect(),
        demoted.into_iter().map(|(d, _)| d).collect(),
    )?;
    ctx.append(id, vec![("expanded".into(), json!({"children": ids}))]);
    Ok(ids)
}

/// Expand one promoted concept in place and return the new child ids.
///
/// A malformed LLM reply stops this node's expansion; children completed
/// before it are still attached and the error is recorded in the trace.
/// Transport, retrieval and embedding failures are returned as errors.
pub fn expand_concept(
    ctx: &CarveContext<'_>,
    tree: &mut ConceptTree,
    concept_id: ConceptId,
    config: &CarveConfig,
) -> Result<Vec<ConceptId>, CarveError> {
    config.validate()?;
    check_expandable(tree, concept_id, config)?;
    let ex = plan(ctx, tree, concept_id, config)?;
    attach(ctx, tree, concept_id, ex)
}

/// Grow a tree for `intent` breadth-first in creation order, expanding every
/// promoted node above `max_depth`.
///
/// In parallel mode the nodes of one level are expanded concurrently against
/// the same tree and attached in id order afterwards. Expansions only read
/// their own ancestor path, so both modes build the same tree and trace when
/// the provider answers by prompt hash.
pub fn carve(ctx: &CarveContext<'_>, intent: &str, config: &CarveConfig) -> Result<ConceptTree, CarveError> {
    config.validate()?;
    let mut tree = ConceptTree::new(intent, config.root_weight)?;
    let mut frontier = vec![tree.root_id()];
    let mut depth = 0;
    while depth < config.max_depth && !frontier.is_empty() {
        let plans: Vec<Result<Expansion, CarveError>> = if config.parallel && frontier.len() > 1 {
            let snapshot = &tree;
            std::thread::scope(|s| {
                let handles: Vec<_> = frontier
                    .iter()
                    .map(|&id| s.spawn(move || plan(ctx, snapshot, id, config)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("expansion thread panicked"))
                    .collect()
            })
        } else {
            frontier.iter().map(|&id| plan(ctx, &tree, id, config)).collect()
        };
        let mut next = Vec::new();
        for (&id, planned) in frontier.iter().zip(plans) {
            let ids = attach(ctx, &mut tree, id, planned?)?;
            next.extend(
                ids.into_iter()
                    .filter(|c| tree.get(*c).is_some_and(|c| c.polarity == Polarity::Promoted)),
            );
        }
        frontier = next;
        depth += 1;
    }
    Ok(tree)
}

/// Closed-form characterizer cost in grounding-sized texts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostPrediction {
    pub expanded_nodes: u64,
    /// Per node `2mn + (pbf + dbf + ebf) n`: clusters shown to explore and
    /// envision, plus centroids shown to each properties prompt.
    pub input_units: u64,
    /// Per node `ebf n + (pbf + dbf + ebf) gamma`: envisioned posts plus
    /// groundings written.
    pub output_units: u64,
    /// Per node `(2m + B) n` with `B = pbf + ebf + dbf`.
    pub dominant_input_units: u64,
    /// Per node `2 B n`.
    pub dominant_output_units: u64,
    /// Expansions if every child, demoted ones included, were expanded:
    /// `sum_{d < max_depth} B^d` (`1 + B` at depth 2).
    pub all_children_nodes: u64,
    /// `dominant_input_units` at `all_children_nodes` expansions.
    pub all_children_input_units: u64,
    /// `dominant_output_units` at `all_children_nodes` expansions.
    pub all_children_output_units: u64,
}

/// The exact form assumes full branching: `m` clusters with `n` centroids
/// each, and every supporting, refuting and envisioned slot filled.
pub fn predict_cost(config: &CarveConfig, expanded_nodes: u64) -> CostPrediction {
    let (m, n, g) = (config.m as u64, config.n as u64, config.gamma as u64);
    let b = config.branching() as u64;
    let all_children_nodes: u64 = (0..config.max_depth as u32).map(|d| b.pow(d)).sum();
    CostPrediction {
        expanded_nodes,
        input_units: expanded_nodes * (2 * m * n + b * n),
        output_units: expanded_nodes * (config.ebf as u64 * n + b * g),
        dominant_input_units: expanded_nodes * (2 * m + b) * n,
        dominant_output_units: expanded_nodes * 2 * b * n,
        all_children_nodes,
        all_children_input_units: all_children_nodes * (2 * m + b) * n,
        all_children_output_units: all_children_nodes * 2 * b * n,
    }
}
