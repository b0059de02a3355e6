use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{ConceptOrigin, Session, TraceEvent};

/// One invariant violation, with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub subject: String,
    pub detail: String,
}

impl Violation {
    fn new(code: &str, subject: impl Into<String>, detail: impl Into<String>) -> Self {
        Violation { code: code.into(), subject: subject.into(), detail: detail.into() }
    }
}

/// Checks every session invariant. Returns an empty list iff consistent.
pub fn validate_session(session: &Session) -> Vec<Violation> {
    let mut out = Vec::new();

    for p in session.config.problems() {
        out.push(Violation::new("config-invalid", "config", p));
    }

    let mut doc_ids: HashSet<&str> = HashSet::new();
    for d in &session.documents {
        if !doc_ids.insert(d.id.as_str()) {
            out.push(Violation::new("duplicate-doc-id", &d.id, "document id appears more than once"));
        }
        if d.text.trim().is_empty() {
            out.push(Violation::new("empty-doc-text", &d.id, "document text is empty after trimming"));
        }
    }
    let docs_by_id: HashMap<&str, &str> =
        session.documents.iter().map(|d| (d.id.as_str(), d.text.as_str())).collect();

    for q in &session.quotes {
        match docs_by_id.get(q.doc_id.as_str()) {
            None => out.push(Violation::new("quote-unknown-doc", &q.doc_id, "quote references a missing document")),
            Some(text) if !text.contains(q.text.as_str()) => out.push(Violation::new(
                "quote-not-verbatim",
                &q.doc_id,
                format!("quote {:?} does not occur in the document", q.text),
            )),
            _ => {}
        }
    }

    let mut bullet_ids: HashSet<&str> = HashSet::new();
    for b in &session.bullets {
        if !bullet_ids.insert(b.id.as_str()) {
            out.push(Violation::new("duplicate-bullet-id", &b.id, "bullet id appears more than once"));
        }
        if !doc_ids.contains(b.doc_id.as_str()) {
            out.push(Violation::new("bullet-unknown-doc", &b.id, format!("bullet cites missing document {}", b.doc_id)));
        }
    }

    for run in &session.clusters {
        let mut sizes: HashMap<u32, usize> = HashMap::new();
        for a in &run.assignments {
            if !bullet_ids.contains(a.bullet_id.as_str()) {
                out.push(Violation::new("cluster-unknown-bullet", &a.bullet_id, "assignment for a missing bullet"));
            }
            if let Some(id) = a.cluster_id.id() {
                *sizes.entry(id).or_default() += 1;
            }
        }
        let mut small: Vec<_> = sizes.into_iter().filter(|(_, n)| *n < run.min_cluster_size).collect();
        small.sort_unstable();
        for (id, n) in small {
            out.push(Violation::new(
                "cluster-too-small",
                format!("iteration {} cluster {id}", run.iteration),
                format!("{n} members < min_cluster_size {}", run.min_cluster_size),
            ));
        }
    }

    let mut concept_ids: HashSet<&str> = HashSet::new();
    for c in &session.concepts {
        if !concept_ids.insert(c.id.as_str()) {
            out.push(Violation::new("duplicate-concept-id", &c.id, "concept id appears more than once"));
        }
    }
    let traced: HashSet<&str> = session
        .trace
        .iter()
        .filter_map(|e| match &e.event {
            TraceEvent::ConceptsAdded { concepts } => Some(concepts.iter().map(|c| c.id.as_str())),
            _ => None,
        })
        .flatten()
        .collect();
    for c in &session.concepts {
        if c.criteria_prompt.trim().is_empty() {
            out.push(Violation::new("concept-empty-criteria", &c.id, "criteria prompt is empty"));
        }
        if c.name.trim().is_empty() {
            out.push(Violation::new("concept-empty-name", &c.id, "name is empty"));
        }
        for ex in &c.representative_example_ids {
            if !bullet_ids.contains(ex.as_str()) && !doc_ids.contains(ex.as_str()) {
                out.push(Violation::new("concept-unknown-example", &c.id, format!("example id {ex} does not resolve")));
            }
        }
        for d in &c.representative_doc_ids {
            if !doc_ids.contains(d.as_str()) {
                out.push(Violation::new("concept-unknown-example", &c.id, format!("document id {d} does not resolve")));
            }
        }
        for s in &c.subconcept_ids {
            if !concept_ids.contains(s.as_str()) {
                out.push(Violation::new("concept-unknown-subconcept", &c.id, format!("subconcept {s} does not resolve")));
            }
        }
        if matches!(c.origin, ConceptOrigin::Merged | ConceptOrigin::Split) && c.subconcept_ids.is_empty() {
            out.push(Violation::new("concept-missing-parents", &c.id, "merged/split concept records no parents"));
        }
        if !traced.contains(c.id.as_str()) {
            out.push(Violation::new("concept-untraced", &c.id, "concept is not introduced by any trace entry"));
        }
    }

    let threshold = session.config.score_threshold;
    let m = &session.matrix;
    let matrix_doc_ids: Vec<&str> = m.doc_ids.iter().map(String::as_str).collect();
    let session_doc_ids: Vec<&str> = session.documents.iter().map(|d| d.id.as_str()).collect();
    if matrix_doc_ids != session_doc_ids {
        out.push(Violation::new("matrix-doc-order", "matrix", "matrix document order differs from session documents"));
    }
    for (cid, col) in &m.columns {
        if !concept_ids.contains(cid.as_str()) {
            out.push(Violation::new("matrix-unknown-concept", cid, "column for a missing concept"));
        }
        if col.len() != m.doc_ids.len() {
            out.push(Violation::new(
                "matrix-column-length",
                cid,
                format!("{} entries for {} documents", col.len(), m.doc_ids.len()),
            ));
        }
        for (e, doc) in col.iter().zip(&m.doc_ids) {
            if &e.doc_id != doc || &e.concept_id != cid {
                out.push(Violation::new("matrix-misaligned", format!("{cid}/{}", e.doc_id), "entry not aligned with its cell"));
            }
            if e.score != e.answer.score() {
                out.push(Violation::new(
                    "score-answer-mismatch",
                    format!("{cid}/{}", e.doc_id),
                    format!("score {} does not match answer {:?}", e.score, e.answer),
                ));
            }
            if e.label != (e.score >= threshold) {
                out.push(Violation::new(
                    "label-threshold-mismatch",
                    format!("{cid}/{}", e.doc_id),
                    format!("label {} contradicts score {} at threshold {threshold}", e.label, e.score),
                ));
            }
        }
    }
    for c in session.active_concepts() {
        if !m.columns.contains_key(&c.id) {
            out.push(Violation::new("matrix-missing-column", &c.id, "active concept has no score column"));
        }
    }

    for s in &session.slices {
        if let Err(e) = crate::slices::compile(&s.predicate, session) {
            out.push(Violation::new("slice-invalid", &s.name, e.to_string()));
        }
    }

    for w in session.trace.windows(2) {
        if w[1].seq <= w[0].seq {
            out.push(Violation::new("trace-order", w[1].seq.to_string(), "trace sequence numbers must increase"));
        }
    }

    out
}
