mod common;

use common::{envision_reply, groundings_reply, kind_of, topic_corpus, Kind, Script};
use conceptcarve::characterizer::{carve, expand_concept, CarveConfig, CarveContext, CarveError, TraceEvent};
use conceptcarve::clustering::{HashEmbedder, SphericalKMeans};
use conceptcarve::concept_tree::{ConceptTree, Polarity, Provenance};
use conceptcarve::corpus::Corpus;
use conceptcarve::llm::{FnProvider, LlmError, LlmProvider};
use conceptcarve::retriever::{Bm25Params, RetrieverIndex};

struct Fixture {
    corpus: Corpus,
    index: RetrieverIndex,
    embedder: HashEmbedder,
    clusterer: SphericalKMeans,
}

impl Fixture {
    fn new() -> Self {
        let corpus = topic_corpus("trendword", 10);
        let index = RetrieverIndex::build(&corpus, Bm25Params::default());
        Self {
            corpus,
            index,
            embedder: HashEmbedder::default(),
            clusterer: SphericalKMeans::default(),
        }
    }

    fn ctx<'a>(&'a self, llm: &'a dyn LlmProvider) -> CarveContext<'a> {
        CarveContext::new(&self.index, &self.corpus, llm, &self.embedder, &self.clusterer, 7)
    }
}

fn small_config() -> CarveConfig {
    CarveConfig {
        k: 40,
        pbf: 2,
        ebf: 1,
        dbf: 2,
        max_depth: 1,
        m: 4,
        n: 3,
        gamma: 4,
        ..CarveConfig::default()
    }
}

fn llm_calls(trace: &[TraceEvent], node: usize) -> usize {
    trace
        .iter()
        .filter(|e| e.node_id == node && e.kind == "llm_call")
        .count()
}

#[test]
fn empty_explore_one_envision_gives_one_child() {
    let fx = Fixture::new();
    let llm = Script::new("\n", envision_reply(1, 3), groundings_reply(4, "moving out")).provider();
    let ctx = fx.ctx(&llm);
    let cfg = small_config();
    let mut tree = ConceptTree::new("trendword", cfg.root_weight).unwrap();
    let ids = expand_concept(&ctx, &mut tree, 0, &cfg).unwrap();
    assert_eq!(ids.len(), 1);
    let child = tree.get(ids[0]).unwrap();
    assert_eq!(child.polarity, Polarity::Promoted);
    assert_eq!(child.provenance, Provenance::Envision);
    assert_eq!(child.groundings.len(), cfg.gamma);
    assert_eq!(child.name, "Imagined theme 1");
}

#[test]
fn worst_list_ignored_without_demotion() {
    let fx = Fixture::new();
    let llm = Script::new("1\n2, 3", envision_reply(1, 3), groundings_reply(4, "g")).provider();
    let ctx = fx.ctx(&llm);
    let cfg = small_config();
    let tree = carve(&ctx, "trendword", &cfg).unwrap();
    assert!(!tree.has_demoted());
    assert_eq!(tree.len(), 3);

    let with_demote = CarveConfig {
        demote_enabled: true,
        ..cfg
    };
    let ctx = fx.ctx(&llm);
    let tree = carve(&ctx, "trendword", &with_demote).unwrap();
    assert_eq!(tree.concepts().filter(|c| c.polarity == Polarity::Demoted).count(), 2);
    assert!(tree.concepts().all(|c| c.polarity == Polarity::Promoted || c.weight < 0.0));
}

#[test]
fn retriever_calls_count_path_groundings() {
    let fx = Fixture::new();
    let llm = Script::new("1", envision_reply(1, 3), groundings_reply(4, "g")).provider();
    let ctx = fx.ctx(&llm);
    let cfg = CarveConfig {
        max_depth: 2,
        ..small_config()
    };
    let mut tree = ConceptTree::new("trendword", cfg.root_weight).unwrap();
    let ids = expand_concept(&ctx, &mut tree, 0, &cfg).unwrap();
    assert_eq!(ctx.ledger.snapshot().retriever_calls, 1);
    let child = ids[0];
    let path_groundings = tree.ancestor_path(child).unwrap().grounding_count() as u64;
    assert_eq!(path_groundings, 1 + 4);
    expand_concept(&ctx, &mut tree, child, &cfg).unwrap();
    assert_eq!(ctx.ledger.snapshot().retriever_calls, 1 + path_groundings);
}

#[test]
fn depth_zero_is_root_only() {
    let fx = Fixture::new();
    let llm = FnProvider(|_: &str| -> Result<String, LlmError> { panic!("no calls expected") });
    let ctx = fx.ctx(&llm);
    let cfg = CarveConfig {
        max_depth: 0,
        ..small_config()
    };
    let tree = carve(&ctx, "trendword", &cfg).unwrap();
    assert_eq!(tree.len(), 1);
    assert_eq!(ctx.ledger.snapshot().llm_calls, 0);
}

#[test]
fn depth_one_two_supports_one_envision_is_four_nodes() {
    let fx = Fixture::new();
    let llm = Script::new("1, 2\n", envision_reply(1, 3), groundings_reply(4, "g")).provider();
    let ctx = fx.ctx(&llm);
    let tree = carve(&ctx, "trendword", &small_config()).unwrap();
    assert_eq!(tree.len(), 4);
    let provenance: Vec<Provenance> = tree.concepts().skip(1).map(|c| c.provenance).collect();
    assert_eq!(provenance, vec![Provenance::Explore, Provenance::Explore, Provenance::Envision]);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let fx = Fixture::new();
    let cfg = CarveConfig {
        max_depth: 2,
        ..small_config()
    };
    let run = |parallel: bool| {
        let llm = Script::new("2, 1\n3", envision_reply(1, 3), groundings_reply(4, "g")).provider();
        let ctx = fx.ctx(&llm);
        let tree = carve(&ctx, "trendword", &CarveConfig { parallel, ..cfg.clone() }).unwrap();
        (tree.to_json(), ctx.trace_jsonl(), ctx.ledger.snapshot())
    };
    let a = run(false);
    assert_eq!(a, run(false));
    assert_eq!(a, run(true));
}

#[test]
fn structural_invariants_hold() {
    let fx = Fixture::new();
    let cfg = CarveConfig {
        max_depth: 2,
        demote_enabled: true,
        ..small_config()
    };
    let llm = Script::new("1, 2\n3, 4", envision_reply(2, 3), groundings_reply(9, "g")).provider();
    let ctx = fx.ctx(&llm);
    let tree = carve(&ctx, "trendword", &cfg).unwrap();
    for c in tree.concepts() {
        assert!(tree.depth(c.id).unwrap() <= cfg.max_depth);
        if c.polarity == Polarity::Demoted {
            assert_eq!(tree.children(c.id).count(), 0);
        }
        if c.parent.is_some() {
            assert!(!c.groundings.is_empty() && c.groundings.len() <= cfg.gamma);
        }
    }
    let trace = ctx.trace();
    for c in tree.concepts() {
        let children = tree.children(c.id).count();
        if children > 0 {
            assert_eq!(llm_calls(&trace, c.id), 2 + 2 * children, "node {}", c.id);
        }
    }
}

#[test]
fn envision_only_fixture_yields_envision_provenance() {
    let fx = Fixture::new();
    let cfg = CarveConfig {
        max_depth: 2,
        ..small_config()
    };
    let llm = Script::new("\n\n", envision_reply(1, 3), groundings_reply(4, "g")).provider();
    let ctx = fx.ctx(&llm);
    let tree = carve(&ctx, "trendword", &cfg).unwrap();
    assert!(tree.len() > 1);
    assert!(tree
        .concepts()
        .skip(1)
        .all(|c| c.provenance == Provenance::Envision));
}

#[test]
fn parse_error_keeps_completed_children() {
    let fx = Fixture::new();
    let llm = FnProvider(|p: &str| -> Result<String, LlmError> {
        Ok(match kind_of(p) {
            Kind::Explore => "1\n".into(),
            Kind::Envision => envision_reply(1, 2),
            Kind::Properties if p.contains("imagined post") => "### nothing ###".into(),
            Kind::Properties => "- p".into(),
            Kind::Groundings => groundings_reply(4, "g"),
            _ => unreachable!(),
        })
    });
    let ctx = fx.ctx(&llm);
    let tree = carve(&ctx, "trendword", &small_config()).unwrap();
    assert_eq!(tree.len(), 2);
    assert_eq!(tree.get(1).unwrap().provenance, Provenance::Explore);
    let trace = ctx.trace();
    let err = trace.iter().find(|e| e.kind == "parse_error").expect("parse error traced");
    assert_eq!(err.node_id, 0);
    assert_eq!(err.detail["raw"], "### nothing ###");
}

#[test]
fn malformed_explore_adds_no_children() {
    let fx = Fixture::new();
    let llm = Script::new("best: one", envision_reply(1, 2), groundings_reply(4, "g")).provider();
    let ctx = fx.ctx(&llm);
    let tree = carve(&ctx, "trendword", &small_config()).unwrap();
    assert_eq!(tree.len(), 1);
    assert_eq!(ctx.trace().iter().filter(|e| e.kind == "parse_error").count(), 1);
}

#[test]
fn transport_error_is_fatal() {
    let fx = Fixture::new();
    let llm = FnProvider(|_: &str| -> Result<String, LlmError> { Err(LlmError::Timeout) });
    let ctx = fx.ctx(&llm);
    assert!(matches!(
        carve(&ctx, "trendword", &small_config()),
        Err(CarveError::Llm(LlmError::Timeout))
    ));
}

#[test]
fn expand_preconditions() {
    let fx = Fixture::new();
    let llm = Script::new("1\n2", envision_reply(1, 2), groundings_reply(4, "g")).provider();
    let ctx = fx.ctx(&llm);
    let cfg = CarveConfig {
        demote_enabled: true,
        ..small_config()
    };
    let mut tree = ConceptTree::new("trendword", cfg.root_weight).unwrap();
    expand_concept(&ctx, &mut tree, 0, &cfg).unwrap();
    let demoted = tree.concepts().find(|c| c.polarity == Polarity::Demoted).unwrap().id;
    assert!(matches!(
        expand_concept(&ctx, &mut tree, demoted, &cfg),
        Err(CarveError::NotExpandable(..))
    ));
    // depth 1 is not below max_depth 1
    assert!(matches!(
        expand_concept(&ctx, &mut tree, 1, &cfg),
        Err(CarveError::NotExpandable(..))
    ));
    assert!(expand_concept(&ctx, &mut tree, 99, &cfg).is_err());
}

#[test]
fn trace_is_jsonl_and_matches_ledger() {
    let fx = Fixture::new();
    let llm = Script::new("1, 2\n3", envision_reply(1, 3), groundings_reply(4, "g")).provider();
    let ctx = fx.ctx(&llm);
    carve(&ctx, "trendword", &CarveConfig { max_depth: 2, ..small_config() }).unwrap();
    let text = ctx.trace_jsonl();
    let mut input = 0;
    let mut output = 0;
    for (i, line) in text.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["step"], i as u64);
        assert!(v["node_id"].is_u64() && v["kind"].is_string() && v.get("detail").is_some());
        if v["kind"] == "llm_call" {
            input += v["detail"]["input_units"].as_u64().unwrap();
            output += v["detail"]["output_units"].as_u64().unwrap();
        }
    }
    let s = ctx.ledger.snapshot();
    assert_eq!((input, output), (s.llm_input_units, s.llm_output_units));
    assert!(text.ends_with('\n'));
}
