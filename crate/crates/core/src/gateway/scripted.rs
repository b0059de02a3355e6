//! Deterministic backend driven by a JSON script, for tests and hermetic runs.
//!
//! Lookup order for a completion: entries keyed by prompt hash, then entries
//! matched by substrings (file order), then the per-template ordered fallback
//! queue. A prompt that matches nothing is an error.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Backend, BackendError, BackendReply, BackendRequest, EmbedReply, TemplateId};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptEntry {
    /// Template the entry applies to; any template when absent.
    pub template: Option<TemplateId>,
    pub prompt_hash: Option<String>,
    /// Every fragment must occur in the rendered prompt.
    pub contains: Vec<String>,
    pub response: String,
    /// Number of transient failures to emit before answering.
    pub transient_failures: u32,
    pub refusal: bool,
    /// Consume the entry after its first successful answer.
    pub once: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptFile {
    pub completions: Vec<ScriptEntry>,
    pub fallback: BTreeMap<TemplateId, Vec<String>>,
    pub embeddings: BTreeMap<String, Vec<f64>>,
    pub embedding_dim: Option<usize>,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("script {path}: {detail}")]
    Load { path: String, detail: String },
}

#[derive(Debug)]
struct EntryState {
    entry: ScriptEntry,
    failures_left: u32,
    spent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedCall {
    pub template: Option<TemplateId>,
    pub prompt_hash: String,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Mutex<Vec<EntryState>>,
    fallback: Mutex<BTreeMap<TemplateId, VecDeque<String>>>,
    embeddings: BTreeMap<String, Vec<f64>>,
    dim: usize,
    calls: Mutex<Vec<ScriptedCall>>,
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        ScriptedBackend::new(ScriptFile::default())
    }
}

impl ScriptedBackend {
    pub fn new(script: ScriptFile) -> Self {
        ScriptedBackend {
            entries: Mutex::new(
                script
                    .completions
                    .into_iter()
                    .map(|entry| EntryState { failures_left: entry.transient_failures, entry, spent: false })
                    .collect(),
            ),
            fallback: Mutex::new(script.fallback.into_iter().map(|(k, v)| (k, v.into())).collect()),
            embeddings: script.embeddings,
            dim: script.embedding_dim.unwrap_or(8).max(2),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, ScriptError> {
        let err = |detail: String| ScriptError::Load { path: path.display().to_string(), detail };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let script: ScriptFile = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        Ok(ScriptedBackend::new(script))
    }

    /// Calls seen so far, in arrival order.
    pub fn calls(&self) -> Vec<ScriptedCall> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn answer(state: &mut EntryState) -> Result<BackendReply, BackendError> {
        if state.failures_left > 0 {
            state.failures_left -= 1;
            return Err(BackendError::Transient("scripted transient failure".into()));
        }
        if state.entry.refusal {
            return Err(BackendError::Refusal { message: "scripted refusal".into(), raw: state.entry.response.clone() });
        }
        if state.entry.once {
            state.spent = true;
        }
        Ok(BackendReply { text: state.entry.response.clone(), input_tokens: None, output_tokens: None })
    }

    /// Feature-hashed bag of words; stable across platforms.
    pub fn hashed_embedding(text: &str, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for word in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let h = Sha256::digest(word.to_lowercase().as_bytes());
            let idx = u32::from_le_bytes([h[0], h[1], h[2], h[3]]) as usize % dim;
            let sign = if h[4] & 1 == 0 { 1.0 } else { -1.0 };
            v[idx] += sign;
        }
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        v
    }
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn requires_models(&self) -> bool {
        false
    }

    fn complete(&self, req: &BackendRequest<'_>) -> Result<BackendReply, BackendError> {
        self.calls
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(ScriptedCall { template: req.template_id, prompt_hash: req.prompt_hash.to_string() });

        let template_ok = |e: &ScriptEntry| e.template.is_none() || e.template == req.template_id;
        {
            let mut entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(state) = entries.iter_mut().find(|s| {
                !s.spent && template_ok(&s.entry) && s.entry.prompt_hash.as_deref() == Some(req.prompt_hash)
            }) {
                return Self::answer(state);
            }
            if let Some(state) = entries.iter_mut().find(|s| {
                !s.spent
                    && s.entry.prompt_hash.is_none()
                    && !s.entry.contains.is_empty()
                    && template_ok(&s.entry)
                    && s.entry.contains.iter().all(|frag| req.prompt.contains(frag.as_str()))
            }) {
                return Self::answer(state);
            }
        }
        if let Some(t) = req.template_id {
            let mut fb = self.fallback.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(text) = fb.get_mut(&t).and_then(VecDeque::pop_front) {
                return Ok(BackendReply { text, input_tokens: None, output_tokens: None });
            }
        }
        Err(BackendError::Fatal(format!(
            "scripted backend has no entry for template {} prompt hash {}",
            req.template_id.map_or("-", |t| t.as_str()),
            req.prompt_hash
        )))
    }

    fn embed(&self, _model: &str, texts: &[String]) -> Result<EmbedReply, BackendError> {
        let vectors = texts
            .iter()
            .map(|t| self.embeddings.get(t).cloned().unwrap_or_else(|| Self::hashed_embedding(t, self.dim)))
            .collect();
        Ok(EmbedReply { vectors, input_tokens: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{prompt_hash, Tier};

    fn request<'a>(t: TemplateId, prompt: &'a str, hash: &'a str) -> BackendRequest<'a> {
        BackendRequest {
            tier: Tier::Distill,
            template_id: Some(t),
            model: "scripted",
            prompt,
            prompt_hash: hash,
            temperature: 0.0,
            max_output_tokens: None,
        }
    }

    #[test]
    fn hash_keyed_entries_take_precedence() {
        let h = prompt_hash("hello doc");
        let b = ScriptedBackend::new(ScriptFile {
            completions: vec![
                ScriptEntry { contains: vec!["hello".into()], response: "by-substring".into(), ..Default::default() },
                ScriptEntry { prompt_hash: Some(h.clone()), response: "by-hash".into(), ..Default::default() },
            ],
            ..Default::default()
        });
        assert_eq!(b.complete(&request(TemplateId::Filter, "hello doc", &h)).unwrap().text, "by-hash");
        let h2 = prompt_hash("hello other");
        assert_eq!(b.complete(&request(TemplateId::Filter, "hello other", &h2)).unwrap().text, "by-substring");
    }

    #[test]
    fn fallback_queue_is_ordered_and_unmatched_fails_loudly() {
        let mut fallback = BTreeMap::new();
        fallback.insert(TemplateId::Score, vec!["one".to_string(), "two".to_string()]);
        let b = ScriptedBackend::new(ScriptFile { fallback, ..Default::default() });
        let h = prompt_hash("p");
        assert_eq!(b.complete(&request(TemplateId::Score, "p", &h)).unwrap().text, "one");
        assert_eq!(b.complete(&request(TemplateId::Score, "p", &h)).unwrap().text, "two");
        let err = b.complete(&request(TemplateId::Score, "p", &h)).unwrap_err();
        assert!(matches!(err, BackendError::Fatal(ref m) if m.contains("no entry")));
    }

    #[test]
    fn template_filter_applies() {
        let b = ScriptedBackend::new(ScriptFile {
            completions: vec![ScriptEntry {
                template: Some(TemplateId::Summarize),
                contains: vec!["x".into()],
                response: "r".into(),
                ..Default::default()
            }],
            ..Default::default()
        });
        let h = prompt_hash("x");
        assert!(b.complete(&request(TemplateId::Filter, "x", &h)).is_err());
        assert!(b.complete(&request(TemplateId::Summarize, "x", &h)).is_ok());
    }

    #[test]
    fn fixed_embeddings() {
        let b = ScriptedBackend::default();
        let r = b.embed("m", &["a".into(), "b".into()]).unwrap();
        assert_eq!(r.vectors.len(), 2);
        assert!(r.vectors.iter().all(|v| v.len() == 8));
        assert_eq!(r.vectors, b.embed("m", &["a".into(), "b".into()]).unwrap().vectors);
        assert_ne!(r.vectors[0], r.vectors[1]);
    }
}
