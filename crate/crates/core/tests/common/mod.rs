#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use concept_induction::gateway::{
    Backend, BackendError, BackendReply, BackendRequest, EmbedReply, Gateway, GatewayOptions, ScriptedBackend,
    TemplateId,
};
use concept_induction::ingest::{ingest_path, IngestOptions};
use concept_induction::model::{Session, SessionConfig, TraceEvent};
use concept_induction::pipeline::run_iterations;
use concept_induction::scoring::score_missing;
use serde_json::{json, Value};

pub fn civic_path(name: &str) -> PathBuf {
    oracle::fixture_path("civic").join(name)
}

pub fn civic_config() -> SessionConfig {
    SessionConfig { max_concepts: 4, min_cluster_size: Some(4), rng_seed: 1, ..SessionConfig::default() }
}

/// The 12-document civic forum fixture as a fresh session.
pub fn civic_session() -> Session {
    let report = ingest_path(&civic_path("civic.csv"), &IngestOptions { text_col: "text".into(), id_col: Some("id".into()) })
        .expect("fixture ingests");
    Session::new("civic", report.documents, civic_config())
}

pub fn civic_gateway() -> Gateway {
    let backend = ScriptedBackend::from_path(&civic_path("civic_script.json")).expect("script loads");
    Gateway::new(Arc::new(backend), GatewayOptions::from_config(&civic_config()))
}

/// Induction plus full scoring on the civic fixture, as `conind induce` runs it.
pub fn run_civic(loops: u32) -> Session {
    let mut s = civic_session();
    let gw = civic_gateway();
    s.record(TraceEvent::note("induction-started", format!("n_loops {loops}")));
    run_iterations(&mut s, &gw, loops, None).expect("induction succeeds");
    score_missing(&mut s, &gw).expect("scoring succeeds");
    s
}

type AnswerFn = dyn Fn(&str, &str, &str) -> char + Send + Sync;

/// Backend that answers score prompts by rule, per (criteria, doc id, doc text),
/// and merge/split prompts with fixed patterns derived from the prompt.
pub struct RuleBackend {
    answer: Box<AnswerFn>,
    pub calls: AtomicUsize,
}

impl RuleBackend {
    pub fn new(answer: impl Fn(&str, &str, &str) -> char + Send + Sync + 'static) -> Self {
        RuleBackend { answer: Box::new(answer), calls: AtomicUsize::new(0) }
    }
}

fn line_after<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
    let rest = &prompt[prompt.find(marker)? + marker.len()..];
    rest.lines().map(str::trim).find(|l| !l.is_empty())
}

impl Backend for RuleBackend {
    fn name(&self) -> &str {
        "rule"
    }

    fn requires_models(&self) -> bool {
        false
    }

    fn complete(&self, req: &BackendRequest<'_>) -> Result<BackendReply, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let reply = |v: Value| Ok(BackendReply { text: v.to_string(), input_tokens: None, output_tokens: None });
        match req.template_id {
            Some(TemplateId::Score) => {
                let criteria = line_after(req.prompt, "with the following PROMPT:").unwrap_or("");
                let examples: Vec<Value> = line_after(req.prompt, "text examples in a JSON:")
                    .and_then(|l| serde_json::from_str(l).ok())
                    .ok_or_else(|| BackendError::Fatal("no examples in score prompt".into()))?;
                let results: Vec<Value> = examples
                    .iter()
                    .map(|e| {
                        let id = e["example_id"].as_str().unwrap_or("");
                        let text = e["example_text"].as_str().unwrap_or("");
                        let a = (self.answer)(criteria, id, text);
                        json!({"example_id": id, "rationale": format!("rule {a}"), "answer": a.to_string()})
                    })
                    .collect();
                reply(json!({ "pattern_results": results }))
            }
            Some(TemplateId::Merge) => reply(json!({"patterns": [{
                "name": "Merged Concern",
                "prompt": "Does the text raise either of the merged concerns?"
            }]})),
            Some(TemplateId::Split) => reply(json!({"patterns": [
                {"name": "First Facet", "prompt": "Does the text raise the first facet?"},
                {"name": "Second Facet", "prompt": "Does the text raise the second facet?"}
            ]})),
            other => Err(BackendError::Fatal(format!("rule backend cannot answer {other:?}"))),
        }
    }

    fn embed(&self, _model: &str, texts: &[String]) -> Result<EmbedReply, BackendError> {
        Ok(EmbedReply { vectors: texts.iter().map(|t| ScriptedBackend::hashed_embedding(t, 8)).collect(), input_tokens: None })
    }
}

pub fn rule_gateway(answer: impl Fn(&str, &str, &str) -> char + Send + Sync + 'static) -> Gateway {
    Gateway::new(Arc::new(RuleBackend::new(answer)), GatewayOptions::default())
}

/// Answers A when the document text contains any word of the criteria longer
/// than five letters, E otherwise.
pub fn keyword_answer(criteria: &str, _id: &str, text: &str) -> char {
    let text = text.to_lowercase();
    let hit = criteria
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 5)
        .any(|w| text.contains(&w.to_lowercase()));
    if hit {
        'A'
    } else {
        'E'
    }
}
