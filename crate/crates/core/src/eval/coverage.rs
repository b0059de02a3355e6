//! LLM-matched coverage of ground-truth concepts by generated concepts.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::gateway::{
    parse_json_payload, CompletionRequest, ConceptMatch, Gateway, GatewayError, Payload, SchemaId, Stage, TemplateId,
    Tier,
};
use crate::model::{Session, TraceEvent};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMatch {
    pub ground_truth: String,
    /// Zero-based index into the generated list.
    pub item_index: Option<usize>,
    pub item: Option<String>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchWarning {
    pub code: String,
    pub detail: String,
}

/// One row per ground-truth concept, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub coverage: f64,
    pub n_matched: usize,
    pub matches: Vec<CoverageMatch>,
    pub warnings: Vec<MatchWarning>,
}

fn parse_id(raw: &str, n: usize) -> Option<usize> {
    let digits = raw.trim().trim_matches(|c: char| !c.is_ascii_digit());
    let k: usize = digits.parse().ok()?;
    (1..=n).contains(&k).then(|| k - 1)
}

/// Applies the at-most-one rules to raw matcher output. The first entry for a
/// ground-truth concept is kept; when two ground-truth concepts claim the same
/// item, the earlier one in ground-truth order keeps it.
pub fn enforce_matches(ground_truth: &[String], generated: &[String], raw: &[ConceptMatch]) -> MatchResult {
    let mut warnings = Vec::new();
    let mut warn = |code: &str, detail: String| warnings.push(MatchWarning { code: code.into(), detail });
    let mut claimed: BTreeMap<usize, (Option<usize>, String)> = BTreeMap::new();
    for m in raw {
        let Some(gt) = parse_id(&m.concept_id, ground_truth.len()) else {
            warn("unknown-concept", format!("concept_id {:?}", m.concept_id));
            continue;
        };
        if claimed.contains_key(&gt) {
            warn("duplicate-concept", format!("concept_id {:?} listed again", m.concept_id));
            continue;
        }
        let item = match &m.item_id {
            None => None,
            Some(id) => match parse_id(id, generated.len()) {
                Some(k) => Some(k),
                None => {
                    warn("unknown-item", format!("item_id {id:?} for concept_id {:?}", m.concept_id));
                    None
                }
            },
        };
        claimed.insert(gt, (item, m.rationale.clone()));
    }
    let mut used = HashSet::new();
    let mut matches = Vec::with_capacity(ground_truth.len());
    for (gt, name) in ground_truth.iter().enumerate() {
        let (mut item, rationale) = claimed.remove(&gt).unwrap_or((None, String::new()));
        if let Some(k) = item {
            if !used.insert(k) {
                warn("item-reused", format!("item {} already matched; dropped for {name:?}", k + 1));
                item = None;
            }
        }
        matches.push(CoverageMatch {
            ground_truth: name.clone(),
            item_index: item,
            item: item.map(|k| generated[k].clone()),
            rationale: if item.is_some() { rationale } else { String::new() },
        });
    }
    let n_matched = matches.iter().filter(|m| m.item_index.is_some()).count();
    MatchResult {
        coverage: if ground_truth.is_empty() { 0.0 } else { n_matched as f64 / ground_truth.len() as f64 },
        n_matched,
        matches,
        warnings,
    }
}

pub fn render_concept_list(items: &[String], id_key: &str, text_key: &str) -> String {
    let list: Vec<_> = items
        .iter()
        .enumerate()
        .map(|(i, s)| json!({ id_key: (i + 1).to_string(), text_key: s }))
        .collect();
    serde_json::to_string_pretty(&list).expect("string list serializes")
}

/// Coverage of `ground_truth` by `generated`. A reply that fails to parse is
/// retried once; a second failure is an error.
pub fn auto_coverage(
    gw: &Gateway,
    ground_truth: &[String],
    generated: &[String],
    events: &mut Vec<TraceEvent>,
) -> Result<MatchResult> {
    if ground_truth.is_empty() || generated.is_empty() {
        return Err(Error::Invalid("ground truth and generated concept lists must be non-empty".into()));
    }
    let params = BTreeMap::from([
        ("ground_truth_concepts".to_string(), render_concept_list(ground_truth, "concept_id", "concept")),
        ("generated_concepts".to_string(), render_concept_list(generated, "item_id", "text")),
    ]);
    let prompt = gw.render(TemplateId::CoverageMatch, &params)?;
    let req = CompletionRequest::new(Tier::CoverageMatch, Stage::Eval, TemplateId::CoverageMatch, prompt);
    let mut last = None;
    for _ in 0..2 {
        let result = gw.complete(&req);
        events.push(TraceEvent::LlmCall(Box::new(gw.call_record(&req, &result))));
        match parse_json_payload(&result?.text, SchemaId::ConceptMatches) {
            Ok(Payload::ConceptMatches(raw)) => {
                let r = enforce_matches(ground_truth, generated, &raw);
                for w in &r.warnings {
                    events.push(TraceEvent::warning(&format!("coverage-{}", w.code), w.detail.clone()));
                }
                return Ok(r);
            }
            Ok(_) => unreachable!("schema-specific payload"),
            Err(e) => {
                events.push(TraceEvent::warning("coverage-unparseable", e.to_string()));
                last = Some(e);
            }
        }
    }
    Err(Error::Gateway(GatewayError::from(last.expect("two failed attempts"))))
}

/// Active concepts of a session rendered as `name: criteria` for matching.
pub fn session_concept_texts(session: &Session) -> Vec<String> {
    session.active_concepts().map(|c| format!("{}: {}", c.name, c.criteria_prompt)).collect()
}
