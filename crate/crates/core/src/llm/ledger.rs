use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Characters per grounding-sized unit of LLM text.
pub const CHARS_PER_UNIT: usize = 200;

/// `ceil(chars / 200)`; the empty string costs nothing.
pub fn grounding_units(text: &str) -> u64 {
    text.chars().count().div_ceil(CHARS_PER_UNIT) as u64
}

/// Shared, monotone cost counters.
///
/// `llm_input_units` / `llm_output_units` charge every prompt and reply at
/// [`grounding_units`]. `shown_texts` / `generated_texts` count only the
/// grounding-sized texts themselves (centroid posts shown to the LLM, posts
/// and groundings it writes), which is the quantity the closed-form cost
/// model predicts. `retriever_calls` counts single-grounding engine calls.
#[derive(Debug, Default)]
pub struct CostLedger {
    llm_calls: AtomicU64,
    llm_input_units: AtomicU64,
    llm_output_units: AtomicU64,
    shown_texts: AtomicU64,
    generated_texts: AtomicU64,
    retriever_calls: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub llm_calls: u64,
    pub llm_input_units: u64,
    pub llm_output_units: u64,
    pub shown_texts: u64,
    pub generated_texts: u64,
    pub retriever_calls: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_call(&self, input_units: u64, output_units: u64) {
        self.llm_calls.fetch_add(1, Ordering::Relaxed);
        self.llm_input_units.fetch_add(input_units, Ordering::Relaxed);
        self.llm_output_units.fetch_add(output_units, Ordering::Relaxed);
    }

    pub fn add_shown_texts(&self, n: u64) {
        self.shown_texts.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_generated_texts(&self, n: u64) {
        self.generated_texts.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_retriever_calls(&self, n: u64) {
        self.retriever_calls.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            llm_calls: self.llm_calls.load(Ordering::Relaxed),
            llm_input_units: self.llm_input_units.load(Ordering::Relaxed),
            llm_output_units: self.llm_output_units.load(Ordering::Relaxed),
            shown_texts: self.shown_texts.load(Ordering::Relaxed),
            generated_texts: self.generated_texts.load(Ordering::Relaxed),
            retriever_calls: self.retriever_calls.load(Ordering::Relaxed),
        }
    }
}

impl std::fmt::Display for LedgerSnapshot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "llm_calls={} input_units={} output_units={} shown_texts={} generated_texts={} retriever_calls={}",
            self.llm_calls,
            self.llm_input_units,
            self.llm_output_units,
            self.shown_texts,
            self.generated_texts,
            self.retriever_calls
        )
    }
}
