use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    Bullet, ClusterRun, Concept, Document, Quote, ScoreMatrix, SessionConfig, Slice, TraceEntry,
    TraceEvent,
};
use crate::gateway::UsageRecord;

/// The persisted unit of analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub schema_version: String,
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub documents: Vec<Document>,
    pub config: SessionConfig,
    #[serde(default)]
    pub quotes: Vec<Quote>,
    #[serde(default)]
    pub bullets: Vec<Bullet>,
    #[serde(default)]
    pub clusters: Vec<ClusterRun>,
    #[serde(default)]
    pub concepts: Vec<Concept>,
    #[serde(default)]
    pub matrix: ScoreMatrix,
    #[serde(default)]
    pub slices: Vec<Slice>,
    #[serde(default)]
    pub usage: Vec<UsageRecord>,
    #[serde(default)]
    pub trace: Vec<TraceEntry>,
}

impl Session {
    pub fn new(id: impl Into<String>, documents: Vec<Document>, config: SessionConfig) -> Self {
        let doc_ids = documents.iter().map(|d| d.id.clone()).collect();
        Session {
            schema_version: super::SCHEMA_VERSION.to_string(),
            id: id.into(),
            created_at: Utc::now(),
            documents,
            config,
            quotes: Vec::new(),
            bullets: Vec::new(),
            clusters: Vec::new(),
            concepts: Vec::new(),
            matrix: ScoreMatrix::new(doc_ids),
            slices: Vec::new(),
            usage: Vec::new(),
            trace: Vec::new(),
        }
    }

    /// Applies `event` to the state and appends it to the trace.
    pub fn record(&mut self, event: TraceEvent) -> u64 {
        let seq = self.trace.last().map_or(0, |e| e.seq + 1);
        self.apply_entry(TraceEntry { seq, timestamp: Utc::now(), event });
        seq
    }

    pub fn record_all(&mut self, events: impl IntoIterator<Item = TraceEvent>) {
        for e in events {
            self.record(e);
        }
    }

    fn apply_entry(&mut self, entry: TraceEntry) {
        self.apply(&entry.event);
        self.trace.push(entry);
    }

    fn apply(&mut self, event: &TraceEvent) {
        match event {
            TraceEvent::LlmCall(call) => {
                if let Some(u) = &call.usage {
                    self.usage.push(u.clone());
                }
            }
            TraceEvent::QuotesExtracted { doc_id, quotes, .. } => {
                self.quotes.extend(quotes.iter().map(|q| Quote { doc_id: doc_id.clone(), text: q.clone() }));
            }
            TraceEvent::BulletsAdded { bullets, .. } => self.bullets.extend(bullets.iter().cloned()),
            TraceEvent::ClustersAssigned { run } => self.clusters.push(run.clone()),
            TraceEvent::ConceptsAdded { concepts } => self.concepts.extend(concepts.iter().cloned()),
            TraceEvent::ScoresWritten { concept_id, entries } => {
                self.matrix.columns.insert(concept_id.clone(), entries.clone());
            }
            TraceEvent::ConceptEdited { after, .. } => {
                if let Some(c) = self.concepts.iter_mut().find(|c| c.id == after.id) {
                    *c = after.clone();
                }
            }
            TraceEvent::ConceptsDeactivated { ids, .. } => {
                for c in self.concepts.iter_mut().filter(|c| ids.contains(&c.id)) {
                    c.active = false;
                }
            }
            TraceEvent::ConceptsFlaggedGeneric { ids } => {
                for c in self.concepts.iter_mut().filter(|c| ids.contains(&c.id)) {
                    c.generic = true;
                }
            }
            TraceEvent::SliceDefined { slice } => {
                match self.slices.iter_mut().find(|s| s.name == slice.name) {
                    Some(s) => *s = slice.clone(),
                    None => self.slices.push(slice.clone()),
                }
            }
            TraceEvent::ThresholdChanged { threshold, .. } => {
                self.config.score_threshold = *threshold;
                for col in self.matrix.columns.values_mut() {
                    for e in col.iter_mut() {
                        e.label = e.score >= *threshold;
                    }
                }
            }
            TraceEvent::Warning { .. }
            | TraceEvent::Note { .. }
            | TraceEvent::Sampled { .. }
            | TraceEvent::ColumnArchived { .. }
            | TraceEvent::LoopSelected { .. } => {}
        }
    }

    /// Rebuilds the session from its initial documents and config by
    /// re-applying every trace entry in order.
    pub fn replay(&self) -> Session {
        let mut initial_config = self.config.clone();
        if let Some(previous) = self.trace.iter().find_map(|e| match &e.event {
            TraceEvent::ThresholdChanged { previous, .. } => Some(*previous),
            _ => None,
        }) {
            initial_config.score_threshold = previous;
        }
        let mut s = Session::new(self.id.clone(), self.documents.clone(), initial_config);
        s.schema_version = self.schema_version.clone();
        s.created_at = self.created_at;
        for entry in &self.trace {
            s.apply_entry(entry.clone());
        }
        s
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn concept(&self, id: &str) -> Option<&Concept> {
        self.concepts.iter().find(|c| c.id == id)
    }

    pub fn bullet(&self, id: &str) -> Option<&Bullet> {
        self.bullets.iter().find(|b| b.id == id)
    }

    pub fn active_concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.iter().filter(|c| c.active)
    }

    /// Fresh concept id with the given prefix, unique within the session.
    pub fn fresh_concept_id(&self, prefix: &str, offset: usize) -> String {
        let mut n = self.concepts.len() + 1 + offset;
        loop {
            let id = format!("{prefix}{n}");
            if self.concept(&id).is_none() {
                return id;
            }
            n += 1;
        }
    }

    /// Quotes extracted from `doc_id`, in extraction order.
    pub fn quotes_for<'a>(&'a self, doc_id: &'a str) -> impl Iterator<Item = &'a Quote> + 'a {
        self.quotes.iter().filter(move |q| q.doc_id == doc_id)
    }

    pub fn last_iteration(&self) -> Option<u32> {
        self.trace
            .iter()
            .filter_map(|e| match &e.event {
                TraceEvent::Sampled { iteration, .. } => Some(*iteration),
                _ => None,
            })
            .max()
    }
}
