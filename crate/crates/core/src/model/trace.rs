use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Bullet, ClusterRun, Concept, ScoreEntry, Slice};
use crate::gateway::{TemplateId, Tier, UsageRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// Raw record of one gateway call. The response is stored before parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmCallRecord {
    pub tier: Tier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<TemplateId>,
    pub model: String,
    pub prompt_hash: String,
    pub prompt: String,
    pub temperature: f64,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<UsageRecord>,
}

/// Every state change of a session, plus audit-only records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum TraceEvent {
    LlmCall(Box<LlmCallRecord>),
    Warning {
        code: String,
        detail: String,
    },
    Note {
        code: String,
        detail: String,
    },
    Sampled {
        iteration: u32,
        doc_ids: Vec<String>,
    },
    QuotesExtracted {
        iteration: u32,
        doc_id: String,
        quotes: Vec<String>,
    },
    BulletsAdded {
        iteration: u32,
        bullets: Vec<Bullet>,
    },
    ClustersAssigned {
        run: ClusterRun,
    },
    ConceptsAdded {
        concepts: Vec<Concept>,
    },
    /// Writes (or replaces) a full matrix column.
    ScoresWritten {
        concept_id: String,
        entries: Vec<ScoreEntry>,
    },
    /// A stale column kept for audit before a rescore replaced it.
    ColumnArchived {
        concept_id: String,
        entries: Vec<ScoreEntry>,
    },
    ConceptEdited {
        before: Concept,
        after: Concept,
    },
    ConceptsDeactivated {
        ids: Vec<String>,
        reason: String,
    },
    ConceptsFlaggedGeneric {
        ids: Vec<String>,
    },
    LoopSelected {
        iteration: u32,
        doc_ids: Vec<String>,
        generic_concept_ids: Vec<String>,
    },
    SliceDefined {
        slice: Slice,
    },
    ThresholdChanged {
        previous: f64,
        threshold: f64,
    },
}

impl TraceEvent {
    pub fn warning(code: &str, detail: impl Into<String>) -> Self {
        TraceEvent::Warning { code: code.to_string(), detail: detail.into() }
    }

    pub fn note(code: &str, detail: impl Into<String>) -> Self {
        TraceEvent::Note { code: code.to_string(), detail: detail.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::LlmCall(_) => "llm_call",
            TraceEvent::Warning { .. } => "warning",
            TraceEvent::Note { .. } => "note",
            TraceEvent::Sampled { .. } => "sampled",
            TraceEvent::QuotesExtracted { .. } => "quotes_extracted",
            TraceEvent::BulletsAdded { .. } => "bullets_added",
            TraceEvent::ClustersAssigned { .. } => "clusters_assigned",
            TraceEvent::ConceptsAdded { .. } => "concepts_added",
            TraceEvent::ScoresWritten { .. } => "scores_written",
            TraceEvent::ColumnArchived { .. } => "column_archived",
            TraceEvent::ConceptEdited { .. } => "concept_edited",
            TraceEvent::ConceptsDeactivated { .. } => "concepts_deactivated",
            TraceEvent::ConceptsFlaggedGeneric { .. } => "concepts_flagged_generic",
            TraceEvent::LoopSelected { .. } => "loop_selected",
            TraceEvent::SliceDefined { .. } => "slice_defined",
            TraceEvent::ThresholdChanged { .. } => "threshold_changed",
        }
    }
}
