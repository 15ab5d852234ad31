//! `carve`: build, apply and evaluate concept trees from the command line.
//!
//! ```text
//! carve synth   --out data/
//! carve index   --corpus data/corpus.jsonl --out data/index.json
//! carve carve   --corpus data/corpus.jsonl --index data/index.json \
//!               --trend "freedom independence family" --fixture replies.json --out tree/
//! carve rerank  --index data/index.json --tree tree/tree.json --docs ids.txt --out run.txt
//! carve eval    --run run.txt --qrels data/qrels.txt
//! ```
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or invalid input, 3 LLM provider or
//! reply parsing.

mod config;
mod error;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use conceptcarve::characterizer::{carve, CarveContext};
use conceptcarve::clustering::SphericalKMeans;
use conceptcarve::concept_tree::ConceptTree;
use conceptcarve::corpus::{generate_synthetic_corpus, load_corpus, load_qrels, write_corpus, write_qrels, SynthSpec};
use conceptcarve::evaluation::{evaluate_run, read_run, write_run, RunFile, DIR_KS};
use conceptcarve::llm::{self, parse_compare_response, render_compare_prompt, ChatRequest, CostLedger, ProviderKind};
use conceptcarve::retriever::{rerank, retrieve_with, Bm25Params, RetrieverIndex, ScoreOptions};

use config::{resolve_provider, AppConfig, EmbeddingKind};
use error::{Failure, EXIT_USAGE};

#[derive(Parser, Debug)]
#[command(name = "carve", version, about = "Concept-tree retrieval over a document collection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with planted paraphrase evidence.
    Synth(SynthArgs),
    /// Build and save the BM25 index for a corpus.
    Index(IndexArgs),
    /// Construct a concept tree for a trend.
    Carve(CarveArgs),
    /// Rerank a fixed list of documents with a tree.
    Rerank(RerankArgs),
    /// Retrieve the top-k documents of the whole corpus with a tree.
    Retrieve(RetrieveArgs),
    /// Precision, recall and AP at each cutoff.
    Eval(EvalArgs),
    /// Ask the LLM to contrast two trees along polarity axes.
    CompareTrees(CompareArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory for corpus.jsonl, qrels.txt and trend.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_filler: Option<usize>,
    #[arg(long)]
    n_evidence: Option<usize>,
    #[arg(long)]
    query_id: Option<String>,
}

#[derive(Args, Debug)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ProviderArgs {
    #[arg(long, value_parser = parse_provider_kind)]
    provider: Option<ProviderKind>,
    /// Scripted reply fixture; implies `--provider scripted`.
    #[arg(long)]
    fixture: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CarveArgs {
    /// TOML file with `corpus`, `index`, `out`, `seed`, `[carve]`,
    /// `[provider]` and `[embedding]`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    trend: String,
    /// Directory receiving tree.json and trace.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    pbf: Option<usize>,
    #[arg(long)]
    ebf: Option<usize>,
    #[arg(long)]
    dbf: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    gamma: Option<usize>,
    #[arg(long)]
    root_weight: Option<f64>,
    /// Add demoted concepts for refuting clusters.
    #[arg(long)]
    demote: bool,
    /// Expand the nodes of each level concurrently.
    #[arg(long)]
    parallel: bool,
    #[arg(long, value_enum)]
    embedding: Option<EmbeddingKind>,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Args, Debug)]
struct RunOutputArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    tree: PathBuf,
    /// Score demoted concepts too (promoted only by default).
    #[arg(long)]
    with_demoted: bool,
    #[arg(long, default_value = "q1")]
    query_id: String,
    #[arg(long, default_value = "carve")]
    tag: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RerankArgs {
    /// One document id per line.
    #[arg(long)]
    docs: PathBuf,
    #[command(flatten)]
    common: RunOutputArgs,
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[command(flatten)]
    common: RunOutputArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DIR_KS)]
    ks: Vec<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    tree_a: PathBuf,
    #[arg(long)]
    tree_b: PathBuf,
    /// Defaults to the intent of the first tree.
    #[arg(long)]
    trend: Option<String>,
    #[arg(long)]
    label_a: Option<String>,
    #[arg(long)]
    label_b: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    provider: ProviderArgs,
}

fn parse_provider_kind(s: &str) -> Result<ProviderKind, String> {
    match s {
        "http" => Ok(ProviderKind::Http),
        "scripted" => Ok(ProviderKind::Scripted),
        other => Err(format!("unknown provider {other:?} (expected http or scripted)")),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn read_tree(path: &Path) -> Result<ConceptTree, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    ConceptTree::from_json(&text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn load_index(path: &Path) -> Result<RetrieverIndex, Failure> {
    RetrieverIndex::load(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let mut spec = SynthSpec::default();
    spec.n_filler = a.n_filler.unwrap_or(spec.n_filler);
    spec.n_evidence = a.n_evidence.unwrap_or(spec.n_evidence);
    if let Some(q) = a.query_id {
        spec.query_id = q;
    }
    let (corpus, qrels) = generate_synthetic_corpus(&spec, a.seed);
    fs::create_dir_all(&a.out).map_err(|e| Failure::io(format!("{}: {e}", a.out.display())))?;
    write_corpus(&corpus, a.out.join("corpus.jsonl"))?;
    write_qrels(&qrels, a.out.join("qrels.txt"))?;
    let trend = spec.trend();
    write_file(&a.out.join("trend.txt"), format!("{}\t{}\n", trend.id, trend.text))?;
    println!(
        "wrote {} documents ({} evidence) to {}",
        corpus.len(),
        qrels.relevant_count(&spec.query_id),
        a.out.display()
    );
    println!("trend {}: {}", trend.id, trend.text);
    Ok(())
}

fn cmd_index(a: IndexArgs) -> Result<(), Failure> {
    let corpus = load_corpus(&a.corpus)?;
    let index = RetrieverIndex::build(&corpus, Bm25Params::default());
    index
        .save(&a.out)
        .map_err(|e| Failure::io(format!("{}: {e}", a.out.display())))?;
    println!(
        "indexed {} documents ({} terms) -> {}",
        corpus.len(),
        index.vocabulary_size(),
        a.out.display()
    );
    Ok(())
}

fn cmd_carve(a: CarveArgs) -> Result<(), Failure> {
    let app = AppConfig::load(a.config.as_deref())?;
    let mut cfg = app.carve.clone();
    let set = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.k, a.k);
    set(&mut cfg.max_depth, a.depth);
    set(&mut cfg.pbf, a.pbf);
    set(&mut cfg.ebf, a.ebf);
    set(&mut cfg.dbf, a.dbf);
    set(&mut cfg.m, a.m);
    set(&mut cfg.n, a.n);
    set(&mut cfg.gamma, a.gamma);
    cfg.root_weight = a.root_weight.unwrap_or(cfg.root_weight);
    cfg.demote_enabled |= a.demote;
    cfg.parallel |= a.parallel;
    cfg.validate()?;

    let corpus_path = a.corpus.or(app.corpus).ok_or_else(|| Failure::usage("--corpus is required"))?;
    let index_path = a.index.or(app.index).ok_or_else(|| Failure::usage("--index is required"))?;
    let out = a.out.or(app.out).ok_or_else(|| Failure::usage("--out is required"))?;
    let seed = a.seed.or(app.seed).unwrap_or(0);
    let mut embedding = app.embedding.clone();
    if let Some(kind) = a.embedding {
        embedding.provider = kind;
    }
    let provider = resolve_provider(app.provider, a.provider.provider, a.provider.fixture)?;

    let corpus = load_corpus(&corpus_path)?;
    let index = load_index(&index_path)?;
    if index.doc_ids().len() != corpus.len() {
        return Err(Failure::io(format!(
            "index has {} documents but corpus has {}",
            index.doc_ids().len(),
            corpus.len()
        )));
    }
    let llm = provider.build()?;
    let embedder = embedding.build()?;
    let clusterer = SphericalKMeans::default();
    let ctx = CarveContext::new(&index, &corpus, llm.as_ref(), embedder.as_ref(), &clusterer, seed);
    let tree = carve(&ctx, &a.trend, &cfg)?;

    fs::create_dir_all(&out).map_err(|e| Failure::io(format!("{}: {e}", out.display())))?;
    write_file(&out.join("tree.json"), tree.to_json())?;
    write_file(&out.join("trace.jsonl"), ctx.trace_jsonl())?;
    let s = ctx.ledger.snapshot();
    println!("concepts {} (groundings {})", tree.len(), tree.grounding_count());
    println!(
        "ledger llm_calls={} input_units={} output_units={} shown_texts={} generated_texts={} retriever_calls={}",
        s.llm_calls, s.llm_input_units, s.llm_output_units, s.shown_texts, s.generated_texts, s.retriever_calls
    );
    Ok(())
}

fn write_ranking(common: &RunOutputArgs, ranking: &[conceptcarve::ScoredDoc]) -> Result<(), Failure> {
    let mut run = RunFile::new();
    run.insert_ranking(&common.query_id, ranking, &common.tag)?;
    write_run(&run, &common.out)?;
    println!("wrote {} rows to {}", ranking.len(), common.out.display());
    Ok(())
}

fn cmd_rerank(a: RerankArgs) -> Result<(), Failure> {
    let index = load_index(&a.common.index)?;
    let tree = read_tree(&a.common.tree)?;
    let list = fs::read_to_string(&a.docs).map_err(|e| Failure::io(format!("{}: {e}", a.docs.display())))?;
    let ids: Vec<&str> = list.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
        return Err(Failure::io(format!("{}: duplicate document id {dup:?}", a.docs.display())));
    }
    let ranking = rerank(&index, &tree, &ids, !a.common.with_demoted)?;
    write_ranking(&a.common, &ranking)
}

fn cmd_retrieve(a: RetrieveArgs) -> Result<(), Failure> {
    let index = load_index(&a.common.index)?;
    let tree = read_tree(&a.common.tree)?;
    let opts = ScoreOptions {
        promoted_only: !a.common.with_demoted,
        ..ScoreOptions::default()
    };
    let ranking = retrieve_with(&index, &tree, a.k, opts)?;
    write_ranking(&a.common, &ranking)
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    let run = read_run(&a.run)?;
    let qrels = load_qrels(&a.qrels)?;
    let report = evaluate_run(&run, &qrels, &a.ks)?;
    let csv = report.to_csv();
    match a.out {
        Some(path) => write_file(&path, csv),
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| Failure::io(format!("stdout: {e}"))),
    }
}

/// Properties of every non-root concept, first occurrence kept.
fn tree_properties(tree: &ConceptTree) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in tree.concepts().filter(|c| c.parent.is_some()) {
        for p in &c.properties {
            if !out.contains(p) {
                out.push(p.clone());
            }
        }
    }
    out
}

fn cmd_compare(a: CompareArgs) -> Result<(), Failure> {
    let app = AppConfig::load(a.config.as_deref())?;
    let provider = resolve_provider(app.provider, a.provider.provider, a.provider.fixture)?;
    let (tree_a, tree_b) = (read_tree(&a.tree_a)?, read_tree(&a.tree_b)?);
    let (props_a, props_b) = (tree_properties(&tree_a), tree_properties(&tree_b));
    for (path, props) in [(&a.tree_a, &props_a), (&a.tree_b, &props_b)] {
        if props.is_empty() {
            return Err(Failure::io(format!("{}: tree has no concept properties", path.display())));
        }
    }
    let stem = |p: &Path| p.file_stem().map_or("tree".into(), |s| s.to_string_lossy().into_owned());
    let label_a = a.label_a.unwrap_or_else(|| stem(&a.tree_a));
    let label_b = a.label_b.unwrap_or_else(|| stem(&a.tree_b));
    let trend = a.trend.unwrap_or_else(|| tree_a.intent().to_owned());

    let llm = provider.build()?;
    let prompt = render_compare_prompt(&trend, &label_a, &props_a, &label_b, &props_b);
    let reply = llm::complete(llm.as_ref(), &CostLedger::new(), &ChatRequest::new(prompt))?;
    let axes = match parse_compare_response(&reply.text) {
        Ok(axes) => axes,
        Err(e) => {
            let mut raw = a.out.clone().into_os_string();
            raw.push(".raw.txt");
            let raw = PathBuf::from(raw);
            write_file(&raw, &reply.text)?;
            return Err(Failure::provider(format!("{e}; raw reply saved to {}", raw.display())));
        }
    };
    let mut csv = String::from("axis,score_a,score_b\n");
    for axis in &axes {
        csv.push_str(&format!("{},{},{}\n", csv_field(&axis.axis), axis.score_a, axis.score_b));
    }
    write_file(&a.out, csv)?;
    println!("wrote {} axes to {}", axes.len(), a.out.display());
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Index(a) => cmd_index(a),
        Command::Carve(a) => cmd_carve(a),
        Command::Rerank(a) => cmd_rerank(a),
        Command::Retrieve(a) => cmd_retrieve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::CompareTrees(a) => cmd_compare(a),
    };
    if let Err(f) = result {
        eprintln!("error: {f}");
        std::process::exit(f.code);
    }
}
