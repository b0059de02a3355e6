//! Shared domain types for a concept-induction session.
//!
//! A [`Session`] is event-sourced: every state change is expressed as a
//! [`TraceEvent`] that is applied to the session and appended to its trace.
//! Replaying the trace on top of the initial documents and config rebuilds
//! the same state (see [`Session::replay`]).

mod config;
mod io;
mod session;
mod trace;
mod validate;

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use config::{ModelTiers, RetryConfig, SessionConfig, TokenRate};
pub use io::{canonical_session, canonical_session_json, load_session, load_session_file, save_session, save_session_file, SessionIoError, SCHEMA_VERSION};
pub use session::Session;
pub use trace::{LlmCallRecord, TraceEntry, TraceEvent};
pub use validate::{validate_session, Violation};

/// A metadata cell. Nested values are rejected at ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl MetaValue {
    pub fn kind(&self) -> MetaKind {
        match self {
            MetaValue::Bool(_) => MetaKind::Bool,
            MetaValue::Number(_) => MetaKind::Number,
            MetaValue::Text(_) => MetaKind::Text,
        }
    }
}

impl fmt::Display for MetaValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetaValue::Bool(b) => write!(f, "{b}"),
            MetaValue::Number(n) => write!(f, "{n}"),
            MetaValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaKind {
    Bool,
    Number,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub metadata: IndexMap<String, MetaValue>,
}

/// An extractive excerpt; must occur verbatim in its source document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bullet {
    pub id: String,
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub item_id: String,
    pub values: Vec<f64>,
}

/// Cluster label of one item. Serialized as a non-negative integer or `"NOISE"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClusterLabel {
    Cluster(u32),
    Noise,
}

impl ClusterLabel {
    pub fn id(self) -> Option<u32> {
        match self {
            ClusterLabel::Cluster(id) => Some(id),
            ClusterLabel::Noise => None,
        }
    }

    pub fn is_noise(self) -> bool {
        matches!(self, ClusterLabel::Noise)
    }
}

impl Serialize for ClusterLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ClusterLabel::Cluster(id) => s.serialize_u32(*id),
            ClusterLabel::Noise => s.serialize_str("NOISE"),
        }
    }
}

impl<'de> Deserialize<'de> for ClusterLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u32),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Id(id) => Ok(ClusterLabel::Cluster(id)),
            Raw::Tag(t) if t == "NOISE" => Ok(ClusterLabel::Noise),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!(
                "expected cluster id or \"NOISE\", got {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub bullet_id: String,
    pub cluster_id: ClusterLabel,
    /// Membership strength in [0, 1]; 0 for noise.
    #[serde(default)]
    pub strength: f64,
}

/// One clustering pass over the bullets of a loop iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRun {
    pub iteration: u32,
    pub min_cluster_size: usize,
    pub assignments: Vec<ClusterAssignment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptOrigin {
    Synthesized,
    UserAuthored,
    Merged,
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub name: String,
    pub criteria_prompt: String,
    /// Ids as cited by the synthesizer (bullet ids).
    #[serde(default)]
    pub representative_example_ids: Vec<String>,
    /// The same examples resolved to their source documents.
    #[serde(default)]
    pub representative_doc_ids: Vec<String>,
    #[serde(default)]
    pub subconcept_ids: Vec<String>,
    #[serde(default)]
    pub generation: u32,
    pub origin: ConceptOrigin,
    pub active: bool,
    /// Cluster the concept was synthesized from, for synthesized concepts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_cluster: Option<u32>,
    /// Set when the loop selection deemed this concept generic.
    #[serde(default)]
    pub generic: bool,
}

impl Concept {
    fn base(id: &str, name: &str, criteria: &str, origin: ConceptOrigin) -> Self {
        Concept {
            id: id.to_string(),
            name: name.trim().to_string(),
            criteria_prompt: criteria.trim().to_string(),
            representative_example_ids: Vec::new(),
            representative_doc_ids: Vec::new(),
            subconcept_ids: Vec::new(),
            generation: 0,
            origin,
            active: true,
            source_cluster: None,
            generic: false,
        }
    }

    pub fn synthesized(id: &str, name: &str, criteria: &str, generation: u32) -> Self {
        Concept { generation, ..Concept::base(id, name, criteria, ConceptOrigin::Synthesized) }
    }

    pub fn user_authored(id: &str, name: &str, criteria: &str) -> Self {
        Concept::base(id, name, criteria, ConceptOrigin::UserAuthored)
    }

    /// A concept derived from `parents` by a merge or split.
    pub fn derived(id: &str, name: &str, criteria: &str, origin: ConceptOrigin, parents: Vec<String>) -> Self {
        Concept { subconcept_ids: parents, ..Concept::base(id, name, criteria, origin) }
    }
}

/// Multiple-choice answer of the scoring prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Answer {
    A,
    B,
    C,
    D,
    E,
}

impl Answer {
    pub const ALL: [Answer; 5] = [Answer::A, Answer::B, Answer::C, Answer::D, Answer::E];

    /// Bucketed score: A (strongly agree) = 1.0 down to E (strongly disagree) = 0.0.
    pub fn score(self) -> f64 {
        match self {
            Answer::A => 1.0,
            Answer::B => 0.75,
            Answer::C => 0.5,
            Answer::D => 0.25,
            Answer::E => 0.0,
        }
    }

    pub fn parse(s: &str) -> Option<Answer> {
        match s.trim().trim_end_matches([':', '.', ')']).to_ascii_uppercase().as_str() {
            "A" => Some(Answer::A),
            "B" => Some(Answer::B),
            "C" => Some(Answer::C),
            "D" => Some(Answer::D),
            "E" => Some(Answer::E),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Answer::A => 'A',
            Answer::B => 'B',
            Answer::C => 'C',
            Answer::D => 'D',
            Answer::E => 'E',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    #[default]
    Ok,
    /// No usable answer after the single retry; neutral answer substituted.
    Fallback,
    /// Gateway failure after retries; neutral answer substituted.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub doc_id: String,
    pub concept_id: String,
    pub answer: Answer,
    pub score: f64,
    pub rationale: String,
    pub label: bool,
    #[serde(default)]
    pub status: EntryStatus,
}

impl ScoreEntry {
    pub fn new(doc_id: &str, concept_id: &str, answer: Answer, rationale: String, threshold: f64) -> Self {
        let score = answer.score();
        ScoreEntry {
            doc_id: doc_id.to_string(),
            concept_id: concept_id.to_string(),
            answer,
            score,
            rationale,
            label: score >= threshold,
            status: EntryStatus::Ok,
        }
    }
}

/// Dense documents × concepts matrix stored column-wise.
///
/// Every column is aligned with `doc_ids`; column order is concept order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub doc_ids: Vec<String>,
    pub columns: IndexMap<String, Vec<ScoreEntry>>,
}

impl ScoreMatrix {
    pub fn new(doc_ids: Vec<String>) -> Self {
        ScoreMatrix { doc_ids, columns: IndexMap::new() }
    }

    pub fn column(&self, concept_id: &str) -> Option<&[ScoreEntry]> {
        self.columns.get(concept_id).map(Vec::as_slice)
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    /// Per-document positive label vectors for the given concept ids.
    pub fn labels(&self, concept_id: &str) -> Option<Vec<bool>> {
        self.column(concept_id).map(|c| c.iter().map(|e| e.label).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub name: String,
    pub predicate: String,
}
