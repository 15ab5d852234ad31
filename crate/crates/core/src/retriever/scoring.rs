//! Concept-tree relevance: a document's score is the weighted sum of its
//! engine scores over every grounding of every concept. Tree structure plays
//! no part beyond supplying the weights.

use super::{top_k, RelevanceEngine, RetrieverError, ScoredDoc};
use crate::concept_tree::{Concept, ConceptTree, Polarity};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreOptions {
    /// Skip demoted concepts (and anything below them), keeping the carved
    /// weights of the remaining concepts.
    pub promoted_only: bool,
    /// Min-max normalize each grounding's scores over all indexed documents
    /// before weighting. Off by default: raw engine scores are summed.
    pub normalize_groundings: bool,
}

fn active_concepts(tree: &ConceptTree, promoted_only: bool) -> Vec<&Concept> {
    tree.concepts()
        .filter(|c| {
            !promoted_only
                || (c.polarity == Polarity::Promoted
                    && tree
                        .ancestors(c.id)
                        .unwrap_or_default()
                        .iter()
                        .all(|a| tree.get(*a).is_some_and(|x| x.polarity == Polarity::Promoted)))
        })
        .collect()
}

/// Per-grounding affine map `(offset, scale)` so that `(s - offset) * scale`
/// lands in [0, 1]. Constant score vectors map to 0.
fn normalizer<E: RelevanceEngine + ?Sized>(engine: &E, grounding: &str) -> (f64, f64) {
    let all = engine.score_all(grounding);
    let (lo, hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if all.is_empty() || hi <= lo {
        (0.0, 0.0)
    } else {
        (lo, 1.0 / (hi - lo))
    }
}

pub fn tree_score<E: RelevanceEngine + ?Sized>(
    engine: &E,
    tree: &ConceptTree,
    doc_id: &str,
) -> Result<f64, RetrieverError> {
    tree_score_with(engine, tree, doc_id, ScoreOptions::default())
}

pub fn tree_score_with<E: RelevanceEngine + ?Sized>(
    engine: &E,
    tree: &ConceptTree,
    doc_id: &str,
    opts: ScoreOptions,
) -> Result<f64, RetrieverError> {
    let ord = engine
        .ordinal(doc_id)
        .ok_or_else(|| RetrieverError::UnknownDoc(doc_id.to_owned()))?;
    let concepts = active_concepts(tree, opts.promoted_only);
    let norms = opts
        .normalize_groundings
        .then(|| normalizers(engine, &concepts));
    Ok(score_doc(engine, &concepts, norms.as_deref(), ord))
}

fn normalizers<E: RelevanceEngine + ?Sized>(engine: &E, concepts: &[&Concept]) -> Vec<Vec<(f64, f64)>> {
    concepts
        .iter()
        .map(|c| c.groundings.iter().map(|g| normalizer(engine, g.as_str())).collect())
        .collect()
}

fn score_doc<E: RelevanceEngine + ?Sized>(
    engine: &E,
    concepts: &[&Concept],
    norms: Option<&[Vec<(f64, f64)>]>,
    ord: usize,
) -> f64 {
    let mut score = 0.0;
    for (ci, concept) in concepts.iter().enumerate() {
        for (gi, g) in concept.groundings.iter().enumerate() {
            let mut s = engine.score_one(g.as_str(), ord);
            if let Some(norms) = norms {
                let (offset, scale) = norms[ci][gi];
                s = (s - offset) * scale;
            }
            score += concept.weight * s;
        }
    }
    score
}

/// Score exactly the given documents and sort them (score desc, id asc).
pub fn rerank<E: RelevanceEngine + ?Sized, S: AsRef<str>>(
    engine: &E,
    tree: &ConceptTree,
    doc_ids: &[S],
    promoted_only: bool,
) -> Result<Vec<ScoredDoc>, RetrieverError> {
    let opts = ScoreOptions {
        promoted_only,
        ..ScoreOptions::default()
    };
    rerank_with(engine, tree, doc_ids, opts)
}

pub fn rerank_with<E: RelevanceEngine + ?Sized, S: AsRef<str>>(
    engine: &E,
    tree: &ConceptTree,
    doc_ids: &[S],
    opts: ScoreOptions,
) -> Result<Vec<ScoredDoc>, RetrieverError> {
    let concepts = active_concepts(tree, opts.promoted_only);
    let norms = opts
        .normalize_groundings
        .then(|| normalizers(engine, &concepts));
    let mut out = Vec::with_capacity(doc_ids.len());
    for id in doc_ids {
        let id = id.as_ref();
        let ord = engine
            .ordinal(id)
            .ok_or_else(|| RetrieverError::UnknownDoc(id.to_owned()))?;
        out.push(ScoredDoc {
            doc_id: id.to_owned(),
            score: score_doc(engine, &concepts, norms.as_deref(), ord),
        });
    }
    out.sort_by(super::rank_order);
    Ok(out)
}

/// Top-`k` over every indexed document, using dense per-grounding scoring.
pub fn retrieve<E: RelevanceEngine + ?Sized>(
    engine: &E,
    tree: &ConceptTree,
    k: usize,
) -> Result<Vec<ScoredDoc>, RetrieverError> {
    retrieve_with(engine, tree, k, ScoreOptions::default())
}

pub fn retrieve_with<E: RelevanceEngine + ?Sized>(
    engine: &E,
    tree: &ConceptTree,
    k: usize,
    opts: ScoreOptions,
) -> Result<Vec<ScoredDoc>, RetrieverError> {
    if k == 0 {
        return Err(RetrieverError::ZeroK);
    }
    let mut totals = vec![0.0; engine.doc_count()];
    for concept in active_concepts(tree, opts.promoted_only) {
        for g in &concept.groundings {
            let scores = engine.score_all(g.as_str());
            let (offset, scale) = if opts.normalize_groundings {
                normalizer(engine, g.as_str())
            } else {
                (0.0, 1.0)
            };
            for (total, s) in totals.iter_mut().zip(scores) {
                let s = if opts.normalize_groundings { (s - offset) * scale } else { s };
                *total += concept.weight * s;
            }
        }
    }
    let docs = totals
        .into_iter()
        .enumerate()
        .map(|(d, score)| ScoredDoc {
            doc_id: engine.doc_id(d).to_owned(),
            score,
        })
        .collect();
    Ok(top_k(docs, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concept_tree::{ConceptDraft, Grounding, Provenance};
    use crate::retriever::ScoreTable;

    fn draft(name: &str, groundings: &[&str]) -> ConceptDraft {
        ConceptDraft {
            name: name.into(),
            provenance: Provenance::Explore,
            groundings: groundings.iter().map(|g| Grounding::new(*g).unwrap()).collect(),
            properties: vec![],
        }
    }

    /// Tree with hand-set weights {root: 0, c1: 0.6 (g1, g2), c2: -0.4 (g3)}.
    fn hand_tree() -> ConceptTree {
        let mut t = ConceptTree::new("intent", 0.1).unwrap();
        t.add_children(0, vec![draft("c1", &["g1", "g2"])], vec![draft("c2", &["g3"])])
            .unwrap();
        let json = t.to_json();
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["nodes"][0]["weight"] = 0.0.into();
        v["nodes"][1]["weight"] = 0.6.into();
        v["nodes"][2]["weight"] = (-0.4).into();
        ConceptTree::from_json(&v.to_string()).unwrap()
    }

    #[test]
    fn stub_engine_hand_value() {
        let mut e = ScoreTable::new(["d"]);
        e.set("g1", "d", 1.0).set("g2", "d", 2.0).set("g3", "d", 3.0);
        let s = tree_score(&e, &hand_tree(), "d").unwrap();
        assert!((s - 0.6).abs() < 1e-12, "{s}");
    }

    #[test]
    fn promoted_only_skips_demoted() {
        let mut e = ScoreTable::new(["d"]);
        e.set("g1", "d", 1.0).set("g2", "d", 2.0).set("g3", "d", 3.0);
        let opts = ScoreOptions {
            promoted_only: true,
            ..Default::default()
        };
        let s = tree_score_with(&e, &hand_tree(), "d", opts).unwrap();
        assert!((s - 1.8).abs() < 1e-12, "{s}");
    }

    #[test]
    fn empty_groundings_score_zero() {
        let e = ScoreTable::new(["d"]);
        assert_eq!(tree_score(&e, &hand_tree(), "d").unwrap(), 0.0);
    }

    #[test]
    fn rerank_permutes_input() {
        let mut e = ScoreTable::new(["a", "b", "c"]);
        e.set("g1", "b", 3.0).set("g3", "c", 1.0);
        let out = rerank(&e, &hand_tree(), &["a", "b", "c"], false).unwrap();
        let ids: Vec<_> = out.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "a", "c"]);
        assert!(matches!(
            rerank(&e, &hand_tree(), &["a", "x"], false),
            Err(RetrieverError::UnknownDoc(ref d)) if d == "x"
        ));
    }

    #[test]
    fn normalized_scores_in_unit_range() {
        let mut e = ScoreTable::new(["a", "b", "c"]);
        e.set("intent", "a", 5.0).set("intent", "b", 10.0);
        let t = ConceptTree::new("intent", 0.1).unwrap();
        let opts = ScoreOptions {
            normalize_groundings: true,
            ..Default::default()
        };
        let r = retrieve_with(&e, &t, 3, opts).unwrap();
        assert_eq!(r[0].score, 1.0);
        assert_eq!(r[1].score, 0.5);
        assert_eq!(r[2].score, 0.0);
        let rr = rerank_with(&e, &t, &["c", "b", "a"], opts).unwrap();
        assert_eq!(r, rr);
    }
}
