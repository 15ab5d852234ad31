use std::path::{Path, PathBuf};
use std::time::Duration;

use conceptcarve::characterizer::CarveConfig;
use conceptcarve::clustering::{Embedder, HashEmbedder, HttpEmbedder};
use conceptcarve::llm::{ProviderConfig, ProviderKind};
use serde::Deserialize;

use crate::error::Failure;

/// Optional TOML file shared by the commands. Flags override its values;
/// API keys are only ever read from the environment.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub carve: CarveConfig,
    pub provider: Option<ProviderConfig>,
    pub embedding: EmbeddingConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    #[default]
    Hash,
    Http,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: EmbeddingKind,
    pub url: Option<String>,
    pub dim: usize,
    pub timeout_secs: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: EmbeddingKind::Hash,
            url: None,
            dim: HashEmbedder::default().dim,
            timeout_secs: 60,
        }
    }
}

impl EmbeddingConfig {
    pub fn build(&self) -> Result<Box<dyn Embedder>, Failure> {
        match self.provider {
            EmbeddingKind::Hash => Ok(Box::new(HashEmbedder {
                dim: self.dim,
                ..HashEmbedder::default()
            })),
            EmbeddingKind::Http => {
                let url = self
                    .url
                    .clone()
                    .ok_or_else(|| Failure::usage("http embedding requires embedding.url"))?;
                let e = HttpEmbedder::new(url, Duration::from_secs(self.timeout_secs)).map_err(Failure::provider)?;
                Ok(Box::new(e))
            }
        }
    }
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }
}

/// Provider from flags, then the config file, then `LLM_API_BASE` /
/// `LLM_MODEL` for the HTTP endpoint.
pub fn resolve_provider(
    config: Option<ProviderConfig>,
    kind: Option<ProviderKind>,
    fixture: Option<PathBuf>,
) -> Result<ProviderConfig, Failure> {
    let kind = kind
        .or(fixture.as_ref().map(|_| ProviderKind::Scripted))
        .or(config.as_ref().map(|c| c.kind))
        .ok_or_else(|| Failure::usage("no LLM provider: pass --provider/--fixture or set [provider] in --config"))?;
    let mut p = match config {
        Some(c) => ProviderConfig { kind, ..c },
        None => match kind {
            ProviderKind::Scripted => ProviderConfig::scripted(PathBuf::new()),
            ProviderKind::Http => ProviderConfig::http("", ""),
        },
    };
    match kind {
        ProviderKind::Scripted => {
            if let Some(f) = fixture {
                p.fixture_path = Some(f);
            }
            if p.fixture_path.as_ref().is_none_or(|f| f.as_os_str().is_empty()) {
                return Err(Failure::usage("scripted provider requires --fixture"));
            }
        }
        ProviderKind::Http => {
            let env = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
            let blank = |v: &Option<String>| v.as_deref().is_none_or(str::is_empty);
            if blank(&p.base_url) {
                p.base_url = env("LLM_API_BASE");
            }
            if blank(&p.model) {
                p.model = env("LLM_MODEL");
            }
            if blank(&p.base_url) || blank(&p.model) {
                return Err(Failure::usage(
                    "http provider requires a base URL and model (config or LLM_API_BASE / LLM_MODEL)",
                ));
            }
        }
    }
    Ok(p)
}
