//! Synthetic paragraphs with a known seed concept, plus their verification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::hierarchy::ConceptHierarchy;
use crate::gateway::{
    parallel_map, parse_json_payload, CompletionRequest, Gateway, Payload, SchemaId, Stage, TemplateId, Tier,
};
use crate::model::TraceEvent;
use crate::{Error, Result};

pub const DOC_LENGTHS: [u32; 2] = [5, 10];
pub const PREVALENCES: [f64; 2] = [0.2, 0.4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Sentences per paragraph.
    pub doc_length: u32,
    /// Fraction of sentences that carry the seed concept.
    pub concept_prevalence: f64,
    pub seed_concept: String,
    pub n_docs: usize,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !DOC_LENGTHS.contains(&self.doc_length) {
            return Err(Error::Invalid(format!("doc_length must be 5 or 10, got {}", self.doc_length)));
        }
        if !PREVALENCES.iter().any(|p| (p - self.concept_prevalence).abs() < 1e-9) {
            return Err(Error::Invalid(format!(
                "concept_prevalence must be 0.2 or 0.4, got {}",
                self.concept_prevalence
            )));
        }
        let seeds = self.concept_prevalence * self.doc_length as f64;
        if (seeds - seeds.round()).abs() > 1e-9 {
            return Err(Error::Invalid(format!("{} x {} is not a whole sentence count", self.concept_prevalence, self.doc_length)));
        }
        if self.seed_concept.trim().is_empty() {
            return Err(Error::Invalid("seed_concept is empty".into()));
        }
        if self.n_docs == 0 {
            return Err(Error::Invalid("n_docs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_seed_sentences(&self) -> usize {
        (self.concept_prevalence * self.doc_length as f64).round() as usize
    }
}

/// One spec per specific concept of `hierarchy`.
pub fn hierarchy_specs(hierarchy: &ConceptHierarchy, doc_length: u32, prevalence: f64, n_docs: usize) -> Vec<SyntheticSpec> {
    hierarchy
        .specifics()
        .map(|s| SyntheticSpec {
            doc_length,
            concept_prevalence: prevalence,
            seed_concept: s.to_string(),
            n_docs,
        })
        .collect()
}

/// Abbreviations whose trailing period does not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "vs.", "e.g.", "i.e.", "u.s.", "u.k.", "u.n.", "inc.",
    "ltd.", "co.", "corp.", "gov.", "sen.", "rep.", "gen.", "no.", "approx.",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];

/// Splits on `.`, `!` or `?` followed by whitespace or end of text. A period
/// closing a stoplisted abbreviation or a single-letter initial is not a
/// boundary. Closing quotes and brackets stay with their sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && matches!(chars[j + 1].1, '.' | '!' | '?') {
            j += 1;
        }
        while j + 1 < chars.len() && CLOSERS.contains(&chars[j + 1].1) {
            j += 1;
        }
        let end = chars.get(j + 1).map(|&(b, _)| b).unwrap_or(text.len());
        let at_break = j + 1 >= chars.len() || chars[j + 1].1.is_whitespace();
        if at_break && !(c == '.' && j == i && is_abbreviation(&text[start..end])) {
            push_sentence(&mut out, &text[start..end]);
            start = end;
        }
        i = j + 1;
    }
    push_sentence(&mut out, &text[start..]);
    out
}

fn push_sentence(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

fn is_abbreviation(upto: &str) -> bool {
    let word = upto.split_whitespace().last().unwrap_or("");
    let word = word.trim_start_matches(['(', '"', '\'', '[', '\u{201c}']);
    let lower = word.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    let mut cs = word.chars();
    matches!((cs.next(), cs.next(), cs.next()), (Some(a), Some('.'), None) if a.is_uppercase())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDoc {
    pub paragraph: String,
    pub seed_sentences: Vec<String>,
}

impl SyntheticDoc {
    /// Seed sentences returned as one string are segmented with the same rule as the paragraph.
    pub fn from_payload(paragraph: String, seed: Vec<String>, as_text: bool) -> Self {
        let seed_sentences = if as_text { seed.iter().flat_map(|s| split_sentences(s)).collect() } else { seed };
        SyntheticDoc { paragraph, seed_sentences }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub accepted: bool,
    pub sentence_count: usize,
    pub seed_count: usize,
    pub expected_seed_count: usize,
    pub reasons: Vec<Rejection>,
}

pub fn verify_synthetic(doc: &SyntheticDoc, spec: &SyntheticSpec) -> Verification {
    let mut reasons = Vec::new();
    let sentence_count = split_sentences(&doc.paragraph).len();
    if sentence_count != spec.doc_length as usize {
        reasons.push(Rejection {
            code: "sentence-count".into(),
            detail: format!("expected {} sentences, found {sentence_count}", spec.doc_length),
        });
    }
    let seeds: Vec<&str> = doc.seed_sentences.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    let expected = spec.n_seed_sentences();
    if seeds.len() != expected {
        reasons.push(Rejection {
            code: "seed-count".into(),
            detail: format!("expected {expected} seed sentences, declared {}", seeds.len()),
        });
    }
    for s in &seeds {
        if !doc.paragraph.contains(s) {
            reasons.push(Rejection { code: "seed-not-verbatim".into(), detail: format!("{s:?}") });
        }
    }
    Verification {
        accepted: reasons.is_empty(),
        sentence_count,
        seed_count: seeds.len(),
        expected_seed_count: expected,
        reasons,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub max_attempts: u32,
    pub temperature: f64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions { max_attempts: 5, temperature: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDoc {
    pub seed_concept: String,
    pub paragraph: String,
    pub seed_sentences: Vec<String>,
    pub attempts: u32,
}

/// Requests paragraphs until one passes [`verify_synthetic`] or the attempt cap is spent.
pub fn generate_synthetic_doc(
    gw: &Gateway,
    spec: &SyntheticSpec,
    options: &GenerateOptions,
    events: &mut Vec<TraceEvent>,
) -> Result<GeneratedDoc> {
    spec.validate()?;
    let params = BTreeMap::from([
        ("doc_length".to_string(), spec.doc_length.to_string()),
        ("n_seed_sentences".to_string(), spec.n_seed_sentences().to_string()),
        ("low_level_concept".to_string(), spec.seed_concept.clone()),
    ]);
    let prompt = gw.render(TemplateId::SyntheticGen, &params)?;
    let mut req = CompletionRequest::new(Tier::GenerateSynthetic, Stage::Eval, TemplateId::SyntheticGen, prompt);
    req.temperature = options.temperature;
    let mut last = String::new();
    for attempt in 1..=options.max_attempts.max(1) {
        let result = gw.complete(&req);
        events.push(TraceEvent::LlmCall(Box::new(gw.call_record(&req, &result))));
        let text = result?.text;
        let doc = match parse_json_payload(&text, SchemaId::Paragraph) {
            Ok(Payload::Paragraph(p)) => SyntheticDoc::from_payload(p.paragraph, p.seed_topic_sentences, p.seed_sentences_as_text),
            Ok(_) => unreachable!("schema-specific payload"),
            Err(e) => {
                last = e.to_string();
                events.push(TraceEvent::warning("synthetic-unparseable", format!("{}: {last}", spec.seed_concept)));
                continue;
            }
        };
        let v = verify_synthetic(&doc, spec);
        if v.accepted {
            return Ok(GeneratedDoc {
                seed_concept: spec.seed_concept.clone(),
                paragraph: doc.paragraph,
                seed_sentences: doc.seed_sentences,
                attempts: attempt,
            });
        }
        last = v.reasons.iter().map(|r| r.code.as_str()).collect::<Vec<_>>().join(",");
        events.push(TraceEvent::warning("synthetic-rejected", format!("{} attempt {attempt}: {last}", spec.seed_concept)));
    }
    Err(Error::Pipeline(format!(
        "synthetic generation for {:?} failed after {} attempts ({last})",
        spec.seed_concept,
        options.max_attempts.max(1)
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub seed_concept: String,
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub documents: Vec<GeneratedDoc>,
    pub failures: Vec<CellFailure>,
}

impl SyntheticDataset {
    /// CSV with `id,text,seed_concept,generic_concept`, ready for ingestion.
    pub fn to_csv(&self, hierarchy: &ConceptHierarchy) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "text", "seed_concept", "generic_concept"]).expect("in-memory write");
        for (i, d) in self.documents.iter().enumerate() {
            let generic = hierarchy.generic_of(&d.seed_concept).unwrap_or("");
            w.write_record([format!("syn-{i}").as_str(), &d.paragraph, &d.seed_concept, generic])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

/// Generates `n_docs` documents for each spec. Failed cells are reported, not fatal.
pub fn generate_synthetic_dataset(
    gw: &Gateway,
    specs: &[SyntheticSpec],
    options: &GenerateOptions,
    events: &mut Vec<TraceEvent>,
) -> Result<SyntheticDataset> {
    for s in specs {
        s.validate()?;
    }
    let cells: Vec<(&SyntheticSpec, usize)> = specs.iter().flat_map(|s| (0..s.n_docs).map(move |i| (s, i))).collect();
    let results = parallel_map(&cells, gw.options().max_concurrency, |(spec, _)| {
        let mut ev = Vec::new();
        let r = generate_synthetic_doc(gw, spec, options, &mut ev);
        (r, ev)
    });
    let mut out = SyntheticDataset { documents: Vec::new(), failures: Vec::new() };
    for ((spec, index), (r, ev)) in cells.iter().zip(results) {
        events.extend(ev);
        match r {
            Ok(d) => out.documents.push(d),
            Err(e) => out.failures.push(CellFailure { seed_concept: spec.seed_concept.clone(), index: *index, error: e.to_string() }),
        }
    }
    Ok(out)
}
