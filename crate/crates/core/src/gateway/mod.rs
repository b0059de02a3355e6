//! Uniform access to chat-completion and embedding providers.
//!
//! The [`Gateway`] wraps a [`Backend`] with tier→model resolution, retries
//! with exponential backoff on transient failures, a concurrent-request
//! ceiling and an append-only usage ledger.

mod http;
mod parse;
mod scripted;
mod templates;
mod usage;

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{LlmCallRecord, ModelTiers, RetryConfig, SessionConfig, TokenRate};
use indexmap::IndexMap;

pub use http::{network_calls, HttpBackend, HttpBackendConfig};
pub use parse::{
    extract_json, parse_json_payload, ConceptMatch, ParseError, Pattern, PatternResult, Payload, SchemaId,
    SyntheticParagraph,
};
pub use scripted::{ScriptEntry, ScriptError, ScriptedBackend, ScriptFile};
pub use templates::{render_prompt, seed_phrase, TemplateError, TemplateId, TemplateSet};
pub use usage::{usage_report, Stage, StageShare, Tier, UsageRecord, UsageReport, UsageTotals};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub tier: Tier,
    pub stage: Stage,
    pub template_id: Option<TemplateId>,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
}

impl CompletionRequest {
    pub fn new(tier: Tier, stage: Stage, template_id: TemplateId, prompt: String) -> Self {
        CompletionRequest { tier, stage, template_id: Some(template_id), prompt, temperature: 0.0, max_output_tokens: None }
    }

    pub fn with_config(mut self, config: &SessionConfig) -> Self {
        self.temperature = config.temperature;
        self.max_output_tokens = config.max_output_tokens;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub model: String,
    pub attempts: u32,
    pub prompt_hash: String,
    pub usage: UsageRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    /// One record per provider call.
    pub calls: Vec<LlmCallRecord>,
}

/// What a backend sees for one call.
#[derive(Debug, Clone)]
pub struct BackendRequest<'a> {
    pub tier: Tier,
    pub template_id: Option<TemplateId>,
    pub model: &'a str,
    pub prompt: &'a str,
    pub prompt_hash: &'a str,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedReply {
    pub vectors: Vec<Vec<f64>>,
    pub input_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    /// Timeouts, rate limits, 5xx: worth retrying.
    #[error("transient: {0}")]
    Transient(String),
    /// The provider answered but refused or filtered the content.
    #[error("refusal: {message}")]
    Refusal { message: String, raw: String },
    /// Authentication, bad request, unmatched script entry: never retried.
    #[error("{0}")]
    Fatal(String),
}

/// A provider of completions and embeddings.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Whether tiers must resolve to configured model names.
    fn requires_models(&self) -> bool {
        true
    }

    fn complete(&self, req: &BackendRequest<'_>) -> Result<BackendReply, BackendError>;

    fn embed(&self, model: &str, texts: &[String]) -> Result<EmbedReply, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("content error: {message}")]
    Content { attempts: u32, message: String, raw: String },
    #[error("provider error: {0}")]
    Provider(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl GatewayError {
    pub fn attempts(&self) -> u32 {
        match self {
            GatewayError::Transport { attempts, .. } | GatewayError::Content { attempts, .. } => *attempts,
            GatewayError::Provider(_) => 1,
            _ => 0,
        }
    }

    pub fn raw(&self) -> Option<&str> {
        match self {
            GatewayError::Content { raw, .. } => Some(raw),
            GatewayError::Parse(p) => Some(p.raw()),
            _ => None,
        }
    }
}

/// Counting semaphore bounding in-flight provider calls.
#[derive(Debug)]
pub struct Limiter {
    permits: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(permits: usize) -> Self {
        Limiter { permits: Mutex::new(permits.max(1)), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.permits.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.limiter.cv.notify_one();
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Rough token estimate for providers that do not report usage.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub models: ModelTiers,
    pub rates: IndexMap<Tier, TokenRate>,
    pub retry: RetryConfig,
    pub max_concurrency: usize,
    pub embed_batch_size: usize,
}

impl GatewayOptions {
    pub fn from_config(config: &SessionConfig) -> Self {
        GatewayOptions {
            models: config.models.clone(),
            rates: config.rates.clone(),
            retry: config.retry.clone(),
            max_concurrency: config.max_concurrency,
            embed_batch_size: config.embed_batch_size,
        }
    }
}

impl Default for GatewayOptions {
    fn default() -> Self {
        GatewayOptions::from_config(&SessionConfig::default())
    }
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    options: GatewayOptions,
    templates: TemplateSet,
    limiter: Limiter,
    ledger: Mutex<Vec<UsageRecord>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, options: GatewayOptions) -> Self {
        let limiter = Limiter::new(options.max_concurrency);
        Gateway { backend, options, templates: TemplateSet::default(), limiter, ledger: Mutex::new(Vec::new()) }
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn options(&self) -> &GatewayOptions {
        &self.options
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn render(
        &self,
        id: TemplateId,
        params: &std::collections::BTreeMap<String, String>,
    ) -> Result<String, TemplateError> {
        self.templates.render(id, params)
    }

    fn model_for(&self, tier: Tier) -> Result<String, GatewayError> {
        match self.options.models.get(tier) {
            Some(m) => Ok(m.to_string()),
            None if !self.backend.requires_models() => Ok(self.backend.name().to_string()),
            None => Err(GatewayError::Config(format!("no model configured for tier {}", tier.as_str()))),
        }
    }

    /// Checks that every listed tier resolves to a model.
    pub fn check_tiers(&self, tiers: &[Tier]) -> Result<(), GatewayError> {
        tiers.iter().try_for_each(|t| self.model_for(*t).map(|_| ()))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let r = &self.options.retry;
        let ms = r.base_delay_ms.saturating_mul(1u64 << (attempt.saturating_sub(1)).min(20));
        Duration::from_millis(ms.min(r.max_delay_ms))
    }

    /// Runs `op` with retries on transient failures only.
    fn with_retries<T>(
        &self,
        mut op: impl FnMut() -> Result<T, BackendError>,
    ) -> (Result<T, GatewayError>, u32) {
        let max = self.options.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = {
                let _permit = self.limiter.acquire();
                op()
            };
            match result {
                Ok(v) => return (Ok(v), attempt),
                Err(BackendError::Transient(message)) => {
                    if attempt >= max {
                        return (Err(GatewayError::Transport { attempts: attempt, message }), attempt);
                    }
                    log::debug!("transient failure (attempt {attempt}): {message}");
                    std::thread::sleep(self.backoff(attempt));
                }
                Err(BackendError::Refusal { message, raw }) => {
                    return (Err(GatewayError::Content { attempts: attempt, message, raw }), attempt)
                }
                Err(BackendError::Fatal(message)) => return (Err(GatewayError::Provider(message)), attempt),
            }
        }
    }

    fn push_usage(&self, record: &UsageRecord) {
        self.ledger.lock().unwrap_or_else(|e| e.into_inner()).push(record.clone());
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let model = self.model_for(req.tier)?;
        let hash = prompt_hash(&req.prompt);
        let started = Instant::now();
        let breq = BackendRequest {
            tier: req.tier,
            template_id: req.template_id,
            model: &model,
            prompt: &req.prompt,
            prompt_hash: &hash,
            temperature: req.temperature,
            max_output_tokens: req.max_output_tokens,
        };
        let (result, attempts) = self.with_retries(|| self.backend.complete(&breq));
        let reply = result?;
        let usage = UsageRecord::priced(
            req.tier,
            req.stage,
            &model,
            reply.input_tokens.unwrap_or_else(|| estimate_tokens(&req.prompt)),
            reply.output_tokens.unwrap_or_else(|| estimate_tokens(&reply.text)),
            self.options.rates.get(&req.tier),
            started.elapsed().as_millis() as u64,
        );
        self.push_usage(&usage);
        Ok(CompletionResponse { text: reply.text, model, attempts, prompt_hash: hash, usage })
    }

    /// Builds the audit record of a completed (or failed) call.
    pub fn call_record(
        &self,
        req: &CompletionRequest,
        result: &Result<CompletionResponse, GatewayError>,
    ) -> LlmCallRecord {
        let model = self.model_for(req.tier).unwrap_or_default();
        match result {
            Ok(r) => LlmCallRecord {
                tier: req.tier,
                template_id: req.template_id,
                model: r.model.clone(),
                prompt_hash: r.prompt_hash.clone(),
                prompt: req.prompt.clone(),
                temperature: req.temperature,
                attempts: r.attempts,
                raw_response: Some(r.text.clone()),
                error: None,
                usage: Some(r.usage.clone()),
            },
            Err(e) => LlmCallRecord {
                tier: req.tier,
                template_id: req.template_id,
                model,
                prompt_hash: prompt_hash(&req.prompt),
                prompt: req.prompt.clone(),
                temperature: req.temperature,
                attempts: e.attempts(),
                raw_response: e.raw().map(str::to_string),
                error: Some(e.to_string()),
                usage: None,
            },
        }
    }

    /// Embeds `texts` in provider batches; one vector per text.
    pub fn embed(&self, texts: &[String], stage: Stage) -> Result<EmbedResponse, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::Precondition("embed requires at least one text".into()));
        }
        let model = self.model_for(Tier::Embed)?;
        let batch = self.options.embed_batch_size.max(1);
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
        let mut calls = Vec::new();
        for chunk in texts.chunks(batch) {
            let started = Instant::now();
            let joined = serde_json::to_string(chunk).unwrap_or_default();
            let (result, attempts) = self.with_retries(|| self.backend.embed(&model, chunk));
            let reply = result?;
            if reply.vectors.len() != chunk.len() {
                return Err(GatewayError::Internal(format!(
                    "provider returned {} vectors for {} texts",
                    reply.vectors.len(),
                    chunk.len()
                )));
            }
            let usage = UsageRecord::priced(
                Tier::Embed,
                stage,
                &model,
                reply.input_tokens.unwrap_or_else(|| chunk.iter().map(|t| estimate_tokens(t)).sum()),
                0,
                self.options.rates.get(&Tier::Embed),
                started.elapsed().as_millis() as u64,
            );
            self.push_usage(&usage);
            calls.push(LlmCallRecord {
                tier: Tier::Embed,
                template_id: None,
                model: model.clone(),
                prompt_hash: prompt_hash(&joined),
                prompt: joined,
                temperature: 0.0,
                attempts,
                raw_response: None,
                error: None,
                usage: Some(usage),
            });
            vectors.extend(reply.vectors);
        }
        let dim = vectors[0].len();
        if let Some(bad) = vectors.iter().position(|v| v.len() != dim) {
            return Err(GatewayError::Internal(format!(
                "embedding dimension mismatch: item {bad} has {} values, expected {dim}",
                vectors[bad].len()
            )));
        }
        Ok(EmbedResponse { vectors, calls })
    }

    /// Snapshot of the ledger in append order.
    pub fn ledger(&self) -> Vec<UsageRecord> {
        self.ledger.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

/// Order-preserving parallel map with at most `workers` threads.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Flaky {
        failures_left: AtomicUsize,
        refuse: bool,
    }

    impl Backend for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn complete(&self, _req: &BackendRequest<'_>) -> Result<BackendReply, BackendError> {
            if self.refuse {
                return Err(BackendError::Refusal { message: "no".into(), raw: "I can't".into() });
            }
            if self.failures_left.load(Ordering::SeqCst) > 0 {
                self.failures_left.fetch_sub(1, Ordering::SeqCst);
                return Err(BackendError::Transient("429".into()));
            }
            Ok(BackendReply { text: "ok".into(), input_tokens: Some(7), output_tokens: Some(1) })
        }
        fn embed(&self, _model: &str, texts: &[String]) -> Result<EmbedReply, BackendError> {
            Ok(EmbedReply { vectors: texts.iter().map(|t| vec![t.len() as f64, 1.0]).collect(), input_tokens: None })
        }
    }

    fn fast_options() -> GatewayOptions {
        let mut o = GatewayOptions::default();
        o.models.synthesize = Some("big".into());
        o.retry.base_delay_ms = 1;
        o.retry.max_attempts = 4;
        o
    }

    fn req() -> CompletionRequest {
        CompletionRequest::new(Tier::Distill, Stage::Generation, TemplateId::Filter, "p".into())
    }

    #[test]
    fn retries_transient_failures() {
        let gw = Gateway::new(Arc::new(Flaky { failures_left: AtomicUsize::new(2), refuse: false }), fast_options());
        let r = gw.complete(&req()).unwrap();
        assert_eq!(r.attempts, 3);
        assert_eq!(r.text, "ok");
        assert_eq!(gw.ledger().len(), 1);
        let rec = gw.call_record(&req(), &Ok(r));
        assert_eq!(rec.attempts, 3);
    }

    #[test]
    fn exhausted_retries_are_transport_errors() {
        let gw = Gateway::new(Arc::new(Flaky { failures_left: AtomicUsize::new(10), refuse: false }), fast_options());
        match gw.complete(&req()) {
            Err(GatewayError::Transport { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("{other:?}"),
        }
        assert!(gw.ledger().is_empty());
    }

    #[test]
    fn refusals_are_not_retried_and_keep_raw() {
        let gw = Gateway::new(Arc::new(Flaky { failures_left: AtomicUsize::new(0), refuse: true }), fast_options());
        let err = gw.complete(&req()).unwrap_err();
        assert_eq!(err.attempts(), 1);
        assert_eq!(err.raw(), Some("I can't"));
    }

    #[test]
    fn unconfigured_tier_is_a_config_error() {
        let mut o = fast_options();
        o.models.synthesize = None;
        let gw = Gateway::new(Arc::new(Flaky { failures_left: AtomicUsize::new(0), refuse: false }), o);
        let r = CompletionRequest::new(Tier::Synthesize, Stage::Generation, TemplateId::Synthesize, "p".into());
        assert!(matches!(gw.complete(&r), Err(GatewayError::Config(_))));
    }

    #[test]
    fn embed_batches_and_rejects_empty() {
        let mut o = fast_options();
        o.embed_batch_size = 100;
        let gw = Gateway::new(Arc::new(Flaky { failures_left: AtomicUsize::new(0), refuse: false }), o);
        let texts: Vec<String> = (0..1000).map(|i| format!("t{i}")).collect();
        let r = gw.embed(&texts, Stage::Generation).unwrap();
        assert_eq!(r.calls.len(), 10);
        assert_eq!(r.vectors.len(), 1000);
        assert!(matches!(gw.embed(&[], Stage::Generation), Err(GatewayError::Precondition(_))));
    }

    struct Gauge {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl Backend for Gauge {
        fn name(&self) -> &str {
            "gauge"
        }
        fn complete(&self, _req: &BackendRequest<'_>) -> Result<BackendReply, BackendError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(20));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok(BackendReply { text: "x".into(), input_tokens: None, output_tokens: None })
        }
        fn embed(&self, _model: &str, _texts: &[String]) -> Result<EmbedReply, BackendError> {
            unreachable!()
        }
    }

    #[test]
    fn ceiling_bounds_in_flight_requests() {
        let gauge = Arc::new(Gauge { current: AtomicUsize::new(0), peak: AtomicUsize::new(0) });
        let mut o = fast_options();
        o.max_concurrency = 4;
        let gw = Gateway::new(gauge.clone(), o);
        let items: Vec<usize> = (0..10).collect();
        // more workers than permits: the limiter, not the pool, is what bounds concurrency
        let out = parallel_map(&items, 10, |_| gw.complete(&req()).unwrap().text);
        assert_eq!(out.len(), 10);
        assert!(gauge.peak.load(Ordering::SeqCst) <= 4);
        assert!(gauge.peak.load(Ordering::SeqCst) >= 2);
        assert_eq!(gw.ledger().len(), 10);
    }

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<u32> = (0..50).collect();
        assert_eq!(parallel_map(&items, 7, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn prompt_hash_is_stable() {
        assert_eq!(prompt_hash("abc"), "ba7816bf8f01cfea");
        assert_eq!(estimate_tokens("abcde"), 2);
    }
}
