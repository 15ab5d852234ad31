//! Weighted concept trees.
//!
//! A tree's root carries the intent as its single grounding. Children are
//! promoted (positive weight) or demoted (negative weight) concepts. Weights
//! are a pure function of structure and polarity; see [`ConceptTree::reweight`].

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

pub type ConceptId = usize;

pub const TREE_FILE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error("intent must be non-empty")]
    EmptyIntent,
    #[error("root weight {0} outside (0, 1]")]
    RootWeight(f64),
    #[error("unknown concept id {0}")]
    UnknownConcept(ConceptId),
    #[error("concept draft {0:?} has no groundings")]
    NoGroundings(String),
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Promoted,
    Demoted,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Promoted => 1.0,
            Polarity::Demoted => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Root,
    Explore,
    Envision,
}

/// A single query string usable with a plain retriever.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Grounding(String);

impl Grounding {
    /// Returns `None` for blank text.
    pub fn new(text: impl Into<String>) -> Option<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            None
        } else {
            Some(Self(text))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Grounding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub parent: Option<ConceptId>,
    pub name: String,
    pub polarity: Polarity,
    pub provenance: Provenance,
    pub weight: f64,
    pub groundings: Vec<Grounding>,
    pub properties: Vec<String>,
}

/// A concept before it has an id, parent and weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptDraft {
    pub name: String,
    pub provenance: Provenance,
    pub groundings: Vec<Grounding>,
    pub properties: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptTree {
    intent: String,
    root_weight: f64,
    root_id: ConceptId,
    nodes: BTreeMap<ConceptId, Concept>,
    next_id: ConceptId,
}

impl ConceptTree {
    /// Single-node tree whose root grounding is the intent verbatim.
    pub fn new(intent: &str, root_weight: f64) -> Result<Self, TreeError> {
        if intent.trim().is_empty() {
            return Err(TreeError::EmptyIntent);
        }
        if !(root_weight > 0.0 && root_weight <= 1.0) {
            return Err(TreeError::RootWeight(root_weight));
        }
        let root = Concept {
            id: 0,
            parent: None,
            name: "root".to_owned(),
            polarity: Polarity::Promoted,
            provenance: Provenance::Root,
            weight: 1.0,
            groundings: vec![Grounding(intent.to_owned())],
            properties: Vec::new(),
        };
        Ok(Self {
            intent: intent.to_owned(),
            root_weight,
            root_id: 0,
            nodes: BTreeMap::from([(0, root)]),
            next_id: 1,
        })
    }

    pub fn intent(&self) -> &str {
        &self.intent
    }

    pub fn root_weight(&self) -> f64 {
        self.root_weight
    }

    pub fn root_id(&self) -> ConceptId {
        self.root_id
    }

    pub fn root(&self) -> &Concept {
        &self.nodes[&self.root_id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: ConceptId) -> Option<&Concept> {
        self.nodes.get(&id)
    }

    /// Concepts in id (creation) order.
    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.nodes.values()
    }

    pub fn children(&self, id: ConceptId) -> impl Iterator<Item = &Concept> {
        self.nodes.values().filter(move |c| c.parent == Some(id))
    }

    /// Number of edges between the root and `id`.
    pub fn depth(&self, id: ConceptId) -> Result<usize, TreeError> {
        Ok(self.ancestors(id)?.len())
    }

    /// Ancestor ids of `id`, nearest first, ending with the root.
    pub fn ancestors(&self, id: ConceptId) -> Result<Vec<ConceptId>, TreeError> {
        let mut node = self.nodes.get(&id).ok_or(TreeError::UnknownConcept(id))?;
        let mut out = Vec::new();
        while let Some(p) = node.parent {
            out.push(p);
            node = &self.nodes[&p];
        }
        Ok(out)
    }

    /// Attach drafts under `parent_id`, promoted first, then reweight.
    /// Returns the ids assigned, in attachment order.
    pub fn add_children(
        &mut self,
        parent_id: ConceptId,
        promoted: Vec<ConceptDraft>,
        demoted: Vec<ConceptDraft>,
    ) -> Result<Vec<ConceptId>, TreeError> {
        if !self.nodes.contains_key(&parent_id) {
            return Err(TreeError::UnknownConcept(parent_id));
        }
        let drafts = promoted
            .into_iter()
            .map(|d| (d, Polarity::Promoted))
            .chain(demoted.into_iter().map(|d| (d, Polarity::Demoted)))
            .collect::<Vec<_>>();
        if let Some((d, _)) = drafts.iter().find(|(d, _)| d.groundings.is_empty()) {
            return Err(TreeError::NoGroundings(d.name.clone()));
        }
        let mut ids = Vec::with_capacity(drafts.len());
        for (draft, polarity) in drafts {
            let id = self.next_id;
            self.next_id += 1;
            self.nodes.insert(
                id,
                Concept {
                    id,
                    parent: Some(parent_id),
                    name: draft.name,
                    polarity,
                    provenance: draft.provenance,
                    weight: 0.0,
                    groundings: draft.groundings,
                    properties: draft.properties,
                },
            );
            ids.push(id);
        }
        self.reweight();
        Ok(ids)
    }

    /// Assign weights from structure and polarity alone.
    ///
    /// Each non-root node gets a raw magnitude `(1/s) * prod(|raw(a)|)` over
    /// its ancestors `a`, where `s` counts same-polarity siblings (itself
    /// included) and `raw(root) = 1`. The root is then reset to the configured
    /// root weight and the remaining `1 - root_weight` is split across all
    /// non-root nodes in proportion to their raw magnitudes, signed by
    /// polarity. A childless root keeps weight 1.
    pub fn reweight(&mut self) {
        if self.nodes.len() == 1 {
            self.nodes.get_mut(&self.root_id).unwrap().weight = 1.0;
            return;
        }

        let mut children: BTreeMap<ConceptId, Vec<ConceptId>> = BTreeMap::new();
        for c in self.nodes.values() {
            if let Some(p) = c.parent {
                children.entry(p).or_default().push(c.id);
            }
        }

        // (node, product of ancestors' |raw|)
        let mut raw: BTreeMap<ConceptId, f64> = BTreeMap::new();
        raw.insert(self.root_id, 1.0);
        let mut queue = VecDeque::from([(self.root_id, 1.0_f64)]);
        while let Some((id, ancestor_product)) = queue.pop_front() {
            let own = raw[&id];
            let kids = match children.get(&id) {
                Some(k) => k,
                None => continue,
            };
            let n_promoted = kids
                .iter()
                .filter(|k| self.nodes[k].polarity == Polarity::Promoted)
                .count();
            let n_demoted = kids.len() - n_promoted;
            let product = ancestor_product * own;
            for &k in kids {
                let s = match self.nodes[&k].polarity {
                    Polarity::Promoted => n_promoted,
                    Polarity::Demoted => n_demoted,
                };
                raw.insert(k, product / s as f64);
                queue.push_back((k, product));
            }
        }

        let total: f64 = raw
            .iter()
            .filter(|(&id, _)| id != self.root_id)
            .map(|(_, r)| r)
            .sum();
        let pool = 1.0 - self.root_weight;
        for (id, node) in self.nodes.iter_mut() {
            if *id == self.root_id {
                node.weight = self.root_weight;
            } else {
                node.weight = node.polarity.sign() * pool * raw[id] / total;
            }
        }
    }

    fn subtree_of(&self, keep: impl Fn(&Concept) -> bool) -> ConceptTree {
        let nodes = self
            .nodes
            .iter()
            .filter(|(_, c)| keep(c))
            .map(|(&id, c)| (id, c.clone()))
            .collect();
        let mut tree = ConceptTree {
            intent: self.intent.clone(),
            root_weight: self.root_weight,
            root_id: self.root_id,
            nodes,
            next_id: self.next_id,
        };
        tree.reweight();
        tree
    }

    /// The root-to-`id` chain as a standalone, independently weighted tree.
    pub fn ancestor_path(&self, id: ConceptId) -> Result<ConceptTree, TreeError> {
        let mut chain = self.ancestors(id)?;
        chain.push(id);
        Ok(self.subtree_of(|c| chain.contains(&c.id)))
    }

    /// Root plus every node reachable through promoted nodes only, reweighted.
    pub fn promoted_view(&self) -> ConceptTree {
        self.subtree_of(|c| {
            c.id == self.root_id
                || (c.polarity == Polarity::Promoted
                    && self
                        .ancestors(c.id)
                        .map(|a| a.iter().all(|x| self.nodes[x].polarity == Polarity::Promoted))
                        .unwrap_or(false))
        })
    }

    pub fn has_demoted(&self) -> bool {
        self.nodes.values().any(|c| c.polarity == Polarity::Demoted)
    }

    pub fn grounding_count(&self) -> usize {
        self.nodes.values().map(|c| c.groundings.len()).sum()
    }

    pub fn to_json(&self) -> String {
        let file = TreeFile {
            version: TREE_FILE_VERSION,
            intent: self.intent.clone(),
            root_weight: self.root_weight,
            nodes: self.nodes.values().cloned().collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("tree serializes");
        s.push('\n');
        s
    }

    /// Parse and validate a tree file. Stored weights are kept as-is.
    pub fn from_json(text: &str) -> Result<ConceptTree, TreeError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: TreeFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = json_pointer(e.path());
            let message = e.inner().to_string();
            TreeError::Schema { pointer, message }
        })?;
        Self::from_file(file)
    }

    fn from_file(file: TreeFile) -> Result<ConceptTree, TreeError> {
        let schema = |pointer: String, message: String| TreeError::Schema { pointer, message };
        if file.version != TREE_FILE_VERSION {
            return Err(schema(
                "/version".into(),
                format!("unsupported version {}", file.version),
            ));
        }
        if !(file.root_weight > 0.0 && file.root_weight <= 1.0) {
            return Err(schema("/root_weight".into(), "must be in (0, 1]".into()));
        }
        let mut nodes = BTreeMap::new();
        let mut root = None;
        for (i, node) in file.nodes.into_iter().enumerate() {
            if !node.weight.is_finite() {
                return Err(schema(format!("/nodes/{i}/weight"), "must be finite".into()));
            }
            if node.parent.is_none() {
                if root.is_some() {
                    return Err(schema(format!("/nodes/{i}/parent"), "second root".into()));
                }
                root = Some(node.id);
            }
            if nodes.insert(node.id, node).is_some() {
                return Err(schema(format!("/nodes/{i}/id"), "duplicate id".into()));
            }
        }
        let root_id = root.ok_or_else(|| schema("/nodes".into(), "no root node".into()))?;
        // Every parent chain must reach the root without revisiting a node.
        for (i, node) in nodes.values().enumerate() {
            let mut seen = 0usize;
            let mut cur = node;
            while let Some(p) = cur.parent {
                cur = nodes.get(&p).ok_or_else(|| {
                    schema(format!("/nodes/{i}/parent"), format!("unknown parent {p}"))
                })?;
                seen += 1;
                if seen > nodes.len() {
                    return Err(schema(format!("/nodes/{i}/parent"), "cycle".into()));
                }
            }
        }
        let next_id = nodes.keys().next_back().map_or(0, |k| k + 1);
        Ok(ConceptTree {
            intent: file.intent,
            root_weight: file.root_weight,
            root_id,
            nodes,
            next_id,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    version: u32,
    intent: String,
    root_weight: f64,
    nodes: Vec<Concept>,
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}
