use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::gateway::Tier;

/// Per-session knobs for generation and scoring.
///
/// Range-valued prompt parameters (`n_bullets`, `n_words`, ...) are kept as
/// strings because they are rendered verbatim into prompts ("2-4").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub sample_size: usize,
    pub max_concepts: usize,
    pub n_quotes: Option<String>,
    pub n_bullets: String,
    pub n_words: String,
    pub n_name_words: String,
    pub n_example_ids: String,
    /// Concepts requested per cluster; derived from `max_concepts` when unset.
    pub n_concepts_per_cluster: Option<usize>,
    pub seed_term: Option<String>,
    pub score_threshold: f64,
    pub generic_fraction: f64,
    /// Derived as `max(2, ceil(0.02 * n_bullets))` when unset.
    pub min_cluster_size: Option<usize>,
    /// Defaults to the effective min_cluster_size.
    pub min_samples: Option<usize>,
    pub allow_single_cluster: bool,
    /// Filter step runs only for documents longer than this many characters.
    pub filter_min_chars: usize,
    pub score_batch_size: usize,
    pub embed_batch_size: usize,
    pub max_concurrency: usize,
    pub n_loops: u32,
    pub rng_seed: u64,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
    pub models: ModelTiers,
    pub rates: IndexMap<Tier, TokenRate>,
    pub retry: RetryConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            sample_size: 200,
            max_concepts: 20,
            n_quotes: None,
            n_bullets: "2-4".into(),
            n_words: "5-8".into(),
            n_name_words: "2-4".into(),
            n_example_ids: "1-2".into(),
            n_concepts_per_cluster: None,
            seed_term: None,
            score_threshold: 1.0,
            generic_fraction: 0.5,
            min_cluster_size: None,
            min_samples: None,
            allow_single_cluster: true,
            filter_min_chars: 350,
            score_batch_size: 5,
            embed_batch_size: 100,
            max_concurrency: 4,
            n_loops: 1,
            rng_seed: 0,
            temperature: 0.0,
            max_output_tokens: None,
            models: ModelTiers::default(),
            rates: IndexMap::new(),
            retry: RetryConfig::default(),
        }
    }
}

impl SessionConfig {
    /// Invariant violations as human-readable strings; empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.score_threshold > 0.0 && self.score_threshold <= 1.0) {
            out.push(format!("score_threshold {} not in (0, 1]", self.score_threshold));
        }
        if !(self.generic_fraction > 0.0 && self.generic_fraction <= 1.0) {
            out.push(format!("generic_fraction {} not in (0, 1]", self.generic_fraction));
        }
        if self.sample_size == 0 {
            out.push("sample_size must be >= 1".into());
        }
        if self.score_batch_size == 0 {
            out.push("score_batch_size must be >= 1".into());
        }
        if self.embed_batch_size == 0 {
            out.push("embed_batch_size must be >= 1".into());
        }
        if self.max_concepts == 0 {
            out.push("max_concepts must be >= 1".into());
        }
        if let Some(m) = self.min_cluster_size {
            if m < 2 {
                out.push("min_cluster_size must be >= 2".into());
            }
        }
        out
    }

    pub fn seed_term(&self) -> Option<&str> {
        self.seed_term.as_deref().map(str::trim).filter(|s| !s.is_empty())
    }
}

/// Provider model name per tier. An unset tier cannot be used with a live backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelTiers {
    pub distill: Option<String>,
    pub synthesize: Option<String>,
    pub score: Option<String>,
    pub embed: Option<String>,
    pub generate_synthetic: Option<String>,
    pub coverage_match: Option<String>,
}

impl Default for ModelTiers {
    fn default() -> Self {
        ModelTiers {
            distill: Some("gpt-3.5-turbo".into()),
            synthesize: None,
            score: Some("gpt-3.5-turbo".into()),
            embed: Some("text-embedding-ada-002".into()),
            generate_synthetic: None,
            coverage_match: Some("gpt-3.5-turbo".into()),
        }
    }
}

impl ModelTiers {
    pub fn get(&self, tier: Tier) -> Option<&str> {
        match tier {
            Tier::Distill => self.distill.as_deref(),
            Tier::Synthesize => self.synthesize.as_deref(),
            Tier::Score => self.score.as_deref(),
            Tier::Embed => self.embed.as_deref(),
            Tier::GenerateSynthetic => self.generate_synthetic.as_deref(),
            Tier::CoverageMatch => self.coverage_match.as_deref(),
        }
        .filter(|s| !s.is_empty())
    }
}

/// Currency per 1000 tokens.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenRate {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig { max_attempts: 4, base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}
