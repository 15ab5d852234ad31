#![allow(dead_code)]

use conceptcarve::corpus::{Corpus, Document};
use conceptcarve::llm::{FnProvider, LlmError, LlmProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Label,
    Explore,
    Envision,
    Properties,
    Groundings,
    Compare,
}

/// Classify a rendered prompt by its fixed opening text.
pub fn kind_of(prompt: &str) -> Kind {
    if prompt.starts_with("I am trying to find evidence") {
        Kind::Label
    } else if prompt.starts_with("I am trying to analyze the following trend using social media data") {
        Kind::Explore
    } else if prompt.starts_with("I am trying to analyze the following trend using reddit data") {
        Kind::Envision
    } else if prompt.starts_with("### INSTRUCTION ###\nI am trying to analyze the following trend") {
        Kind::Properties
    } else if prompt.starts_with("### INSTRUCTION ###\nI am trying to analyze social media posts") {
        Kind::Groundings
    } else if prompt.starts_with("I am comparing") {
        Kind::Compare
    } else {
        panic!("unrecognized prompt: {}", &prompt[..prompt.len().min(80)])
    }
}

/// Canned replies per prompt kind. Replies are a pure function of the
/// prompt, so runs are reproducible in any call order.
#[derive(Debug, Clone)]
pub struct Script {
    pub explore: String,
    pub envision: String,
    pub properties: String,
    pub groundings: String,
    pub label: String,
}

impl Script {
    pub fn new(explore: &str, envision: String, groundings: String) -> Self {
        Self {
            explore: explore.to_owned(),
            envision,
            properties: "- first property\n- second property".to_owned(),
            groundings,
            label: "Yes".to_owned(),
        }
    }

    pub fn reply(&self, prompt: &str) -> String {
        match kind_of(prompt) {
            Kind::Explore => self.explore.clone(),
            Kind::Envision => self.envision.clone(),
            Kind::Properties => self.properties.clone(),
            Kind::Groundings => self.groundings.clone(),
            Kind::Label => self.label.clone(),
            Kind::Compare => "axis | 5 | 5".to_owned(),
        }
    }

    pub fn provider(self) -> impl LlmProvider {
        FnProvider(move |p: &str| Ok::<_, LlmError>(self.reply(p)))
    }
}

pub fn envision_reply(categories: usize, posts: usize) -> String {
    (1..=categories)
        .map(|c| {
            let lines: String = (1..=posts)
                .map(|p| format!("\"imagined post {p} for theme {c}\"\n"))
                .collect();
            format!("<Imagined theme {c}>\nExample Posts:\n{lines}")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn groundings_reply(gamma: usize, vocabulary: &str) -> String {
    (1..=gamma)
        .map(|i| format!("{vocabulary} example {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub const TOPICS: [&str; 4] = [
    "river boat fishing lake paddle",
    "guitar concert album drummer song",
    "oven recipe flour baking bread",
    "stadium goal striker league match",
];

/// `per_topic` documents for each topic, all containing `shared`.
pub fn topic_corpus(shared: &str, per_topic: usize) -> Corpus {
    let mut docs = Vec::new();
    for (t, words) in TOPICS.iter().enumerate() {
        for i in 0..per_topic {
            let id = format!("t{t}d{i:02}");
            docs.push(Document::new(id, format!("{shared} {words} note{}", i % 3)));
        }
    }
    Corpus::from_documents("topics", docs).expect("valid corpus")
}
