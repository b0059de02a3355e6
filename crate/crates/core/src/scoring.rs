//! Scoring every document against concept criteria, thresholding to labels,
//! and prevalence statistics over the resulting matrix.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::gateway::{
    parallel_map, parse_json_payload, CompletionRequest, Gateway, GatewayError, Payload, SchemaId, Stage, TemplateId,
    Tier,
};
use crate::model::{Answer, Concept, Document, EntryStatus, ScoreEntry, ScoreMatrix, Session, SessionConfig, TraceEvent};
use crate::params;

/// Parses an answer letter, tolerating forms like `"B: Agree"`.
pub fn parse_answer(raw: &str) -> Option<Answer> {
    Answer::parse(raw).or_else(|| {
        let t = raw.trim();
        let mut chars = t.chars();
        let first = chars.next()?;
        match chars.next() {
            Some(c) if c.is_alphanumeric() => None,
            _ => Answer::parse(&first.to_string()),
        }
    })
}

pub fn answer_to_score(letter: &str) -> Result<f64> {
    parse_answer(letter).map(Answer::score).ok_or_else(|| Error::Invalid(format!("invalid answer letter {letter:?}")))
}

pub fn apply_threshold(score: f64, threshold: f64) -> Result<bool> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Invalid(format!("threshold {threshold} outside (0, 1]")));
    }
    Ok(score >= threshold)
}

/// Entries plus the trace events produced while scoring one concept.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnScores {
    pub entries: Vec<ScoreEntry>,
    pub events: Vec<TraceEvent>,
}

fn examples_json(docs: &[&Document]) -> String {
    let items: Vec<_> = docs.iter().map(|d| json!({"example_id": d.id, "example_text": d.text})).collect();
    serde_json::to_string(&items).expect("examples serialize")
}

type Answers = HashMap<String, (Answer, String)>;

/// One scoring call over `docs`. Returns usable answers keyed by doc id.
fn score_batch(
    gw: &Gateway,
    concept: &Concept,
    docs: &[&Document],
    config: &SessionConfig,
    events: &mut Vec<TraceEvent>,
) -> std::result::Result<Answers, GatewayError> {
    let prompt = gw.render(
        TemplateId::Score,
        &params! {
            "examples_json" => examples_json(docs),
            "concept_name" => concept.name,
            "concept_prompt" => concept.criteria_prompt,
        },
    )?;
    let req = CompletionRequest::new(Tier::Score, Stage::Scoring, TemplateId::Score, prompt).with_config(config);
    let result = gw.complete(&req);
    events.push(TraceEvent::LlmCall(Box::new(gw.call_record(&req, &result))));
    let resp = result?;
    let results = match parse_json_payload(&resp.text, SchemaId::PatternResults) {
        Ok(Payload::PatternResults(r)) => r,
        Ok(_) => unreachable!("schema-specific payload"),
        Err(e) => {
            events.push(TraceEvent::warning("score-unparseable", format!("concept {}: {e}", concept.id)));
            return Ok(Answers::new());
        }
    };
    let wanted: HashMap<&str, ()> = docs.iter().map(|d| (d.id.as_str(), ())).collect();
    let mut out = Answers::new();
    for r in results {
        let id = r.example_id.trim().to_string();
        if !wanted.contains_key(id.as_str()) {
            events.push(TraceEvent::warning("score-unknown-example", format!("concept {}: example id {id:?} not in batch", concept.id)));
            continue;
        }
        match parse_answer(&r.answer) {
            Some(a) => {
                out.entry(id).or_insert((a, r.rationale));
            }
            None => events.push(TraceEvent::warning(
                "score-invalid-answer",
                format!("concept {}: example {id}: answer {:?}", concept.id, r.answer),
            )),
        }
    }
    Ok(out)
}

/// Scores one batch, retrying each unanswered document once on its own.
fn score_batch_with_fallback(
    gw: &Gateway,
    concept: &Concept,
    docs: &[&Document],
    config: &SessionConfig,
) -> (Vec<ScoreEntry>, Vec<TraceEvent>) {
    let mut events = Vec::new();
    let threshold = config.score_threshold;
    let answers = score_batch(gw, concept, docs, config, &mut events).unwrap_or_default();
    let mut entries = Vec::with_capacity(docs.len());
    for d in docs {
        if let Some((a, rationale)) = answers.get(&d.id) {
            entries.push(ScoreEntry::new(&d.id, &concept.id, *a, rationale.clone(), threshold));
            continue;
        }
        let single = score_batch(gw, concept, &[*d], config, &mut events);
        let entry = match single {
            Ok(ans) => match ans.get(&d.id) {
                Some((a, rationale)) => ScoreEntry::new(&d.id, &concept.id, *a, rationale.clone(), threshold),
                None => {
                    events.push(TraceEvent::warning(
                        "score-fallback",
                        format!("concept {}: no usable answer for {} after retry; using C", concept.id, d.id),
                    ));
                    ScoreEntry { status: EntryStatus::Fallback, ..ScoreEntry::new(&d.id, &concept.id, Answer::C, String::new(), threshold) }
                }
            },
            Err(e) => {
                events.push(TraceEvent::warning("score-error", format!("concept {}: {}: {e}", concept.id, d.id)));
                ScoreEntry {
                    status: EntryStatus::Error,
                    ..ScoreEntry::new(&d.id, &concept.id, Answer::C, e.to_string(), threshold)
                }
            }
        };
        entries.push(entry);
    }
    (entries, events)
}

/// Scores `concept` against every document in `docs`, in batches.
pub fn score_concept(gw: &Gateway, concept: &Concept, docs: &[Document], config: &SessionConfig) -> Result<ColumnScores> {
    if !concept.active {
        return Err(Error::ConceptInactive(concept.id.clone()));
    }
    let batch = config.score_batch_size.max(1);
    let refs: Vec<&Document> = docs.iter().collect();
    let chunks: Vec<&[&Document]> = refs.chunks(batch).collect();
    let results = parallel_map(&chunks, gw.options().max_concurrency, |chunk| {
        score_batch_with_fallback(gw, concept, chunk, config)
    });
    let mut out = ColumnScores { entries: Vec::with_capacity(docs.len()), events: Vec::new() };
    for (entries, events) in results {
        out.entries.extend(entries);
        out.events.extend(events);
    }
    Ok(out)
}

/// Scores and records a column for `concept_id`, archiving any previous column.
pub fn rescore_concept(session: &mut Session, gw: &Gateway, concept_id: &str) -> Result<Vec<ScoreEntry>> {
    let concept = session.concept(concept_id).cloned().ok_or_else(|| Error::UnknownConcept(concept_id.to_string()))?;
    let scored = score_concept(gw, &concept, &session.documents, &session.config)?;
    if let Some(old) = session.matrix.columns.get(concept_id).cloned() {
        session.record(TraceEvent::ColumnArchived { concept_id: concept_id.to_string(), entries: old });
    }
    session.record_all(scored.events);
    session.record(TraceEvent::ScoresWritten { concept_id: concept_id.to_string(), entries: scored.entries.clone() });
    Ok(scored.entries)
}

/// Scores every active concept that has no column yet, in concept order.
pub fn score_missing(session: &mut Session, gw: &Gateway) -> Result<usize> {
    let ids: Vec<String> =
        session.active_concepts().filter(|c| !session.matrix.columns.contains_key(&c.id)).map(|c| c.id.clone()).collect();
    for id in &ids {
        rescore_concept(session, gw, id)?;
    }
    Ok(ids.len())
}

/// Changes the session threshold and relabels every entry.
pub fn set_threshold(session: &mut Session, threshold: f64) -> Result<()> {
    apply_threshold(0.0, threshold)?;
    let previous = session.config.score_threshold;
    session.record(TraceEvent::ThresholdChanged { previous, threshold });
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    BySlice,
    ByConcept,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceCell {
    pub concept_id: String,
    pub slice_name: String,
    pub count: usize,
    pub denominator: usize,
    pub prevalence: f64,
    pub normalization: Normalization,
    /// Set when the denominator is zero; prevalence is then 0.
    pub empty_denominator: bool,
}

/// Share of a slice (or of the concept's matches) labeled positive.
/// `in_slice` holds one flag per matrix document.
pub fn prevalence(
    matrix: &ScoreMatrix,
    concept_id: &str,
    slice_name: &str,
    in_slice: &[bool],
    normalization: Normalization,
) -> PrevalenceCell {
    let labels = matrix.labels(concept_id).unwrap_or_else(|| vec![false; matrix.n_docs()]);
    let count = labels.iter().zip(in_slice).filter(|(l, s)| **l && **s).count();
    let denominator = match normalization {
        Normalization::BySlice => in_slice.iter().filter(|s| **s).count(),
        Normalization::ByConcept => labels.iter().filter(|l| **l).count(),
    };
    PrevalenceCell {
        concept_id: concept_id.to_string(),
        slice_name: slice_name.to_string(),
        count,
        denominator,
        prevalence: if denominator == 0 { 0.0 } else { count as f64 / denominator as f64 },
        normalization,
        empty_denominator: denominator == 0,
    }
}

/// Fraction of documents with no positive label among `concept_ids`.
pub fn outlier_fraction(matrix: &ScoreMatrix, concept_ids: &[String]) -> f64 {
    let n = matrix.n_docs();
    if n == 0 {
        return 0.0;
    }
    let cols: Vec<&[ScoreEntry]> = concept_ids.iter().filter_map(|c| matrix.column(c)).collect();
    let uncovered = (0..n).filter(|i| !cols.iter().any(|col| col.get(*i).is_some_and(|e| e.label))).count();
    uncovered as f64 / n as f64
}

pub fn session_outlier_fraction(session: &Session) -> f64 {
    let ids: Vec<String> = session.active_concepts().map(|c| c.id.clone()).collect();
    outlier_fraction(&session.matrix, &ids)
}

/// Matrix as CSV: doc id, then a score and a label column per active concept.
pub fn matrix_csv(session: &Session) -> Result<String> {
    let concepts: Vec<&Concept> =
        session.active_concepts().filter(|c| session.matrix.columns.contains_key(&c.id)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["doc_id".to_string()];
    for c in &concepts {
        header.push(format!("{} [{}] score", c.name, c.id));
        header.push(format!("{} [{}] label", c.name, c.id));
    }
    let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(&header).map_err(io)?;
    for (i, doc_id) in session.matrix.doc_ids.iter().enumerate() {
        let mut row = vec![doc_id.clone()];
        for c in &concepts {
            let e = &session.matrix.columns[&c.id][i];
            row.push(e.score.to_string());
            row.push(if e.label { "1" } else { "0" }.to_string());
        }
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
