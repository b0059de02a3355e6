//! Read-only payloads for the matrix, concept detail and slice detail views.
//! Every number the UI draws is computed here.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::actions::ALL_SLICE;
use crate::error::{Error, Result};
use crate::model::{Answer, ConceptOrigin, LlmCallRecord, MetaKind, MetaValue, Session, TraceEvent};
use crate::scoring::{prevalence, session_outlier_fraction, Normalization, PrevalenceCell};
use crate::slices::{self, Expr, Operand};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRow {
    pub id: String,
    pub name: String,
    pub criteria_prompt: String,
    pub origin: ConceptOrigin,
    pub generation: u32,
    pub generic: bool,
    pub n_matches: usize,
    pub scored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceColumn {
    pub name: String,
    pub predicate: String,
    pub size: usize,
    /// Set when a stored predicate no longer compiles; the slice is then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixView {
    pub session_id: String,
    pub n_docs: usize,
    pub threshold: f64,
    pub normalization: Normalization,
    pub outlier_fraction: f64,
    pub concepts: Vec<ConceptRow>,
    pub slices: Vec<SliceColumn>,
    /// Row-major: for each concept, one cell per slice in `slices` order.
    pub cells: Vec<PrevalenceCell>,
}

struct SliceMask {
    column: SliceColumn,
    mask: Vec<bool>,
    expr: Option<Expr>,
}

fn slice_masks(session: &Session) -> Vec<SliceMask> {
    let n = session.documents.len();
    let mut out = vec![SliceMask {
        column: SliceColumn { name: ALL_SLICE.into(), predicate: String::new(), size: n, error: None },
        mask: vec![true; n],
        expr: None,
    }];
    for s in &session.slices {
        let (mask, expr, error) = match slices::compile(&s.predicate, session) {
            Ok(e) => (slices::evaluate(&e, session), Some(e), None),
            Err(e) => (vec![false; n], None, Some(e.to_string())),
        };
        let size = mask.iter().filter(|m| **m).count();
        out.push(SliceMask {
            column: SliceColumn { name: s.name.clone(), predicate: s.predicate.clone(), size, error },
            mask,
            expr,
        });
    }
    out
}

fn concept_row(session: &Session, c: &crate::model::Concept) -> ConceptRow {
    let labels = session.matrix.labels(&c.id);
    ConceptRow {
        id: c.id.clone(),
        name: c.name.clone(),
        criteria_prompt: c.criteria_prompt.clone(),
        origin: c.origin,
        generation: c.generation,
        generic: c.generic,
        n_matches: labels.as_ref().map_or(0, |l| l.iter().filter(|x| **x).count()),
        scored: labels.is_some(),
    }
}

pub fn matrix_view(session: &Session, normalization: Normalization) -> MatrixView {
    let slices = slice_masks(session);
    let concepts: Vec<ConceptRow> = session.active_concepts().map(|c| concept_row(session, c)).collect();
    let mut cells = Vec::with_capacity(concepts.len() * slices.len());
    for c in &concepts {
        for s in &slices {
            cells.push(prevalence(&session.matrix, &c.id, &s.column.name, &s.mask, normalization));
        }
    }
    MatrixView {
        session_id: session.id.clone(),
        n_docs: session.documents.len(),
        threshold: session.config.score_threshold,
        normalization,
        outlier_fraction: session_outlier_fraction(session),
        concepts,
        slices: slices.into_iter().map(|s| s.column).collect(),
        cells,
    }
}

/// A run of document text, marked when it lies inside an extracted quote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    pub highlighted: bool,
}

/// Splits `text` into plain and highlighted runs; overlapping quotes merge.
pub fn highlight(text: &str, quotes: &[&str]) -> Vec<Segment> {
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for q in quotes.iter().filter(|q| !q.is_empty()) {
        let mut from = 0;
        while let Some(pos) = text[from..].find(q) {
            let start = from + pos;
            spans.push((start, start + q.len()));
            from = start + q.len();
        }
    }
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    let mut out = Vec::new();
    let mut at = 0;
    for (s, e) in merged {
        if s > at {
            out.push(Segment { text: text[at..s].to_string(), highlighted: false });
        }
        out.push(Segment { text: text[s..e].to_string(), highlighted: true });
        at = e;
    }
    if at < text.len() || out.is_empty() {
        out.push(Segment { text: text[at..].to_string(), highlighted: false });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub doc_id: String,
    pub segments: Vec<Segment>,
    pub answer: Answer,
    pub score: f64,
    pub rationale: String,
    pub metadata: IndexMap<String, MetaValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub n_docs: usize,
    /// Documents in the bin that belong to the measured set (concept matches or slice members).
    pub n_selected: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub column: String,
    pub bins: Vec<HistogramBin>,
}

/// Quantile with linear interpolation between closest ranks.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartile bins of a numeric column; `selected` marks the measured documents.
pub fn quartile_histogram(session: &Session, column: &str, selected: &[bool]) -> Option<Histogram> {
    let values: Vec<(usize, f64)> = session
        .documents
        .iter()
        .enumerate()
        .filter_map(|(i, d)| match d.metadata.get(column) {
            Some(MetaValue::Number(x)) if x.is_finite() => Some((i, *x)),
            _ => None,
        })
        .collect();
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = values.iter().map(|(_, x)| *x).collect();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|p| quantile(&sorted, *p)).collect();
    edges.dedup();
    if edges.len() == 1 {
        edges.push(edges[0]);
    }
    let last = edges.len() - 2;
    let mut bins: Vec<HistogramBin> = edges
        .windows(2)
        .map(|w| HistogramBin { lower: w[0], upper: w[1], n_docs: 0, n_selected: 0, share: 0.0 })
        .collect();
    for (i, x) in values {
        let b = bins.iter().position(|b| x >= b.lower && x < b.upper).unwrap_or(last);
        bins[b].n_docs += 1;
        if selected.get(i).copied().unwrap_or(false) {
            bins[b].n_selected += 1;
        }
    }
    for b in &mut bins {
        b.share = if b.n_docs == 0 { 0.0 } else { b.n_selected as f64 / b.n_docs as f64 };
    }
    Some(Histogram { column: column.to_string(), bins })
}

fn numeric_columns(session: &Session) -> Vec<String> {
    slices::column_kinds(session).into_iter().filter(|(_, k)| *k == MetaKind::Number).map(|(c, _)| c).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRef {
    pub id: String,
    pub name: String,
    pub criteria_prompt: String,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRef {
    pub example_id: String,
    pub doc_id: String,
    /// Bullet text when the example is a bullet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bullet: Option<String>,
    pub doc_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptDetail {
    pub concept: ConceptRow,
    pub active: bool,
    pub subconcepts: Vec<ConceptRef>,
    pub representative_examples: Vec<ExampleRef>,
    pub prevalence_by_slice: Vec<PrevalenceCell>,
    pub histograms: Vec<Histogram>,
    pub matches: Vec<MatchRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debug_calls: Option<Vec<LlmCallRecord>>,
}

/// Detail payload for one concept. Inactive concepts resolve too.
pub fn concept_detail(session: &Session, id: &str, normalization: Normalization, debug: bool) -> Result<ConceptDetail> {
    let c = session.concept(id).ok_or_else(|| Error::UnknownConcept(id.to_string()))?;
    let subconcepts = c
        .subconcept_ids
        .iter()
        .filter_map(|s| session.concept(s))
        .map(|s| ConceptRef { id: s.id.clone(), name: s.name.clone(), criteria_prompt: s.criteria_prompt.clone(), active: s.active })
        .collect();
    let representative_examples = c
        .representative_example_ids
        .iter()
        .map(|e| match session.bullet(e) {
            Some(b) => ExampleRef {
                example_id: e.clone(),
                doc_id: b.doc_id.clone(),
                bullet: Some(b.text.clone()),
                doc_text: session.document(&b.doc_id).map(|d| d.text.clone()),
            },
            None => ExampleRef {
                example_id: e.clone(),
                doc_id: e.clone(),
                bullet: None,
                doc_text: session.document(e).map(|d| d.text.clone()),
            },
        })
        .collect();
    let slices = slice_masks(session);
    let prevalence_by_slice =
        slices.iter().map(|s| prevalence(&session.matrix, id, &s.column.name, &s.mask, normalization)).collect();
    let labels = session.matrix.labels(id).unwrap_or_else(|| vec![false; session.documents.len()]);
    let histograms = numeric_columns(session).iter().filter_map(|col| quartile_histogram(session, col, &labels)).collect();
    let matches = session
        .matrix
        .column(id)
        .unwrap_or(&[])
        .iter()
        .zip(&session.documents)
        .filter(|(e, _)| e.label)
        .map(|(e, d)| {
            let quotes: Vec<&str> = session.quotes_for(&d.id).map(|q| q.text.as_str()).collect();
            MatchRow {
                doc_id: d.id.clone(),
                segments: highlight(&d.text, &quotes),
                answer: e.answer,
                score: e.score,
                rationale: e.rationale.clone(),
                metadata: d.metadata.clone(),
            }
        })
        .collect();
    let debug_calls = debug.then(|| {
        session
            .trace
            .iter()
            .filter_map(|t| match &t.event {
                TraceEvent::LlmCall(call)
                    if call.prompt.contains(&c.criteria_prompt)
                        || call.raw_response.as_deref().is_some_and(|r| r.contains(&c.criteria_prompt)) =>
                {
                    Some((**call).clone())
                }
                _ => None,
            })
            .collect()
    });
    Ok(ConceptDetail {
        concept: concept_row(session, c),
        active: c.active,
        subconcepts,
        representative_examples,
        prevalence_by_slice,
        histograms,
        matches,
        debug_calls,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDocRow {
    pub doc_id: String,
    pub segments: Vec<Segment>,
    pub metadata: IndexMap<String, MetaValue>,
    /// Active concepts labeled positive for this document.
    pub concept_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDetail {
    pub slice: SliceColumn,
    pub prevalence: Vec<PrevalenceCell>,
    pub histograms: Vec<Histogram>,
    pub documents: Vec<SliceDocRow>,
}

fn referenced_columns(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Cmp { operand: Operand::Column(c), .. } => {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        Expr::Cmp { .. } => {}
        Expr::Not(x) => referenced_columns(x, out),
        Expr::And(a, b) | Expr::Or(a, b) => {
            referenced_columns(a, out);
            referenced_columns(b, out);
        }
    }
}

/// Detail payload for a slice, `All` included. Histograms cover the numeric
/// columns the predicate mentions, or every numeric column when it mentions none.
pub fn slice_detail(session: &Session, name: &str, normalization: Normalization) -> Result<SliceDetail> {
    let s = slice_masks(session)
        .into_iter()
        .find(|s| s.column.name == name)
        .ok_or_else(|| Error::Invalid(format!("unknown slice {name:?}")))?;
    let numeric = numeric_columns(session);
    let mut cols = Vec::new();
    if let Some(e) = &s.expr {
        referenced_columns(e, &mut cols);
    }
    cols.retain(|c| numeric.contains(c));
    if cols.is_empty() {
        cols = numeric;
    }
    let active: Vec<&crate::model::Concept> = session.active_concepts().collect();
    let prevalence = active.iter().map(|c| prevalence(&session.matrix, &c.id, name, &s.mask, normalization)).collect();
    let histograms = cols.iter().filter_map(|c| quartile_histogram(session, c, &s.mask)).collect();
    let documents = session
        .documents
        .iter()
        .enumerate()
        .filter(|(i, _)| s.mask[*i])
        .map(|(i, d)| {
            let quotes: Vec<&str> = session.quotes_for(&d.id).map(|q| q.text.as_str()).collect();
            SliceDocRow {
                doc_id: d.id.clone(),
                segments: highlight(&d.text, &quotes),
                metadata: d.metadata.clone(),
                concept_ids: active
                    .iter()
                    .filter(|c| session.matrix.column(&c.id).and_then(|col| col.get(i)).is_some_and(|e| e.label))
                    .map(|c| c.id.clone())
                    .collect(),
            }
        })
        .collect();
    Ok(SliceDetail { slice: s.column, prevalence, histograms, documents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Concept, Document, ScoreEntry, Slice};

    fn session() -> Session {
        let docs = (0..8)
            .map(|i| Document {
                id: format!("d{i}"),
                text: format!("text {i}: the quick brown fox"),
                metadata: [("toxicity".to_string(), MetaValue::Number(i as f64))].into_iter().collect(),
            })
            .collect();
        let mut s = Session::new("s", docs, Default::default());
        let mut a = Concept::synthesized("a", "Alpha", "Is it alpha?", 0);
        a.representative_example_ids = vec!["d1".into()];
        let b = Concept { active: false, ..Concept::synthesized("b", "Beta", "Is it beta?", 0) };
        s.record(TraceEvent::ConceptsAdded { concepts: vec![a, b] });
        let col = (0..8)
            .map(|i| ScoreEntry::new(&format!("d{i}"), "a", if i < 2 { Answer::A } else { Answer::D }, "r".into(), 1.0))
            .collect();
        s.record(TraceEvent::ScoresWritten { concept_id: "a".into(), entries: col });
        s.record(TraceEvent::SliceDefined { slice: Slice { name: "low".into(), predicate: "toxicity < 4".into() } });
        s.record(TraceEvent::QuotesExtracted { iteration: 0, doc_id: "d0".into(), quotes: vec!["quick brown".into()] });
        s
    }

    #[test]
    fn matrix_has_all_slice_and_active_rows_only() {
        let v = matrix_view(&session(), Normalization::BySlice);
        assert_eq!(v.slices[0].name, ALL_SLICE);
        assert_eq!(v.slices[0].size, 8);
        assert_eq!(v.concepts.len(), 1);
        assert_eq!(v.cells.len(), v.concepts.len() * v.slices.len());
        assert_eq!(v.cells[1].count, 2);
        assert_eq!(v.cells[1].prevalence, 0.5);
        assert!(!serde_json::to_string(&v).unwrap().contains("\"prompt\""));
    }

    #[test]
    fn inactive_concept_resolves_in_detail() {
        let d = concept_detail(&session(), "b", Normalization::BySlice, false).unwrap();
        assert!(!d.active);
        assert!(concept_detail(&session(), "zz", Normalization::BySlice, false).is_err());
    }

    #[test]
    fn concept_detail_highlights_quotes() {
        let d = concept_detail(&session(), "a", Normalization::BySlice, false).unwrap();
        assert_eq!(d.matches.len(), 2);
        let segs = &d.matches[0].segments;
        assert!(segs.iter().any(|s| s.highlighted && s.text == "quick brown"));
        assert_eq!(segs.iter().map(|s| s.text.as_str()).collect::<String>(), "text 0: the quick brown fox");
        assert_eq!(d.histograms[0].bins.len(), 4);
        assert!(d.debug_calls.is_none());
    }

    #[test]
    fn highlight_merges_overlaps() {
        let segs = highlight("abcdef", &["bcd", "cde"]);
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[1], Segment { text: "bcde".into(), highlighted: true });
        assert_eq!(highlight("abc", &[]), vec![Segment { text: "abc".into(), highlighted: false }]);
    }

    #[test]
    fn quartile_bins() {
        let s = session();
        let h = quartile_histogram(&s, "toxicity", &[true; 8]).unwrap();
        let edges: Vec<f64> = h.bins.iter().map(|b| b.lower).collect();
        assert_eq!(edges, vec![0.0, 1.75, 3.5, 5.25]);
        assert_eq!(h.bins.iter().map(|b| b.n_docs).sum::<usize>(), 8);
        assert_eq!(h.bins[3].upper, 7.0);
    }

    #[test]
    fn slice_detail_lists_members() {
        let d = slice_detail(&session(), "low", Normalization::BySlice).unwrap();
        assert_eq!(d.slice.size, 4);
        assert_eq!(d.documents.len(), 4);
        assert_eq!(d.documents[0].concept_ids, vec!["a".to_string()]);
        assert_eq!(d.histograms.len(), 1);
        assert!(slice_detail(&session(), "nope", Normalization::BySlice).is_err());
        assert_eq!(slice_detail(&session(), ALL_SLICE, Normalization::BySlice).unwrap().documents.len(), 8);
    }
}
