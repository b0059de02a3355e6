//! Analyst actions on a session. Each one validates before touching state and
//! records its effects as trace events.

use serde_json::json;

use crate::error::{Error, Result};
use crate::gateway::{parse_json_payload, CompletionRequest, Gateway, Payload, SchemaId, Stage, TemplateId, Tier};
use crate::model::{Concept, ConceptOrigin, Session, Slice, TraceEvent};
use crate::params;
use crate::scoring::rescore_concept;
use crate::slices;

/// Name reserved for the implicit slice holding every document.
pub const ALL_SLICE: &str = "All";

fn active_concept<'a>(session: &'a Session, id: &str) -> Result<&'a Concept> {
    let c = session.concept(id).ok_or_else(|| Error::UnknownConcept(id.to_string()))?;
    if !c.active {
        return Err(Error::ConceptInactive(id.to_string()));
    }
    Ok(c)
}

fn non_empty(field: &str, value: &str) -> Result<String> {
    let v = value.trim();
    if v.is_empty() {
        return Err(Error::Invalid(format!("{field} must not be empty")));
    }
    Ok(v.to_string())
}

fn warn_duplicate_name(session: &mut Session, name: &str, except: Option<&str>) {
    let dup = session
        .active_concepts()
        .any(|c| Some(c.id.as_str()) != except && c.name.eq_ignore_ascii_case(name));
    if dup {
        session.record(TraceEvent::warning("duplicate-concept-name", format!("another active concept is named {name:?}")));
    }
}

/// Adds a user-authored concept and scores it. Returns the new id.
pub fn add_concept(session: &mut Session, gw: &Gateway, name: &str, criteria: &str) -> Result<String> {
    let name = non_empty("name", name)?;
    let criteria = non_empty("criteria", criteria)?;
    let id = session.fresh_concept_id("u", 0);
    warn_duplicate_name(session, &name, None);
    session.record(TraceEvent::ConceptsAdded { concepts: vec![Concept::user_authored(&id, &name, &criteria)] });
    rescore_concept(session, gw, &id)?;
    Ok(id)
}

/// Renames and/or rewrites the criteria of a concept. Only a criteria change
/// triggers rescoring.
pub fn edit_concept(
    session: &mut Session,
    gw: Option<&Gateway>,
    id: &str,
    name: Option<&str>,
    criteria: Option<&str>,
) -> Result<Concept> {
    let before = active_concept(session, id)?.clone();
    let name = name.map(|n| non_empty("name", n)).transpose()?;
    let criteria = criteria.map(|c| non_empty("criteria", c)).transpose()?;
    let mut after = before.clone();
    if let Some(n) = &name {
        after.name = n.clone();
    }
    if let Some(c) = &criteria {
        after.criteria_prompt = c.clone();
    }
    if after == before {
        return Err(Error::Invalid(format!("edit of {id} changes nothing")));
    }
    let rescore = after.criteria_prompt != before.criteria_prompt;
    let gw = match (rescore, gw) {
        (true, None) => return Err(Error::Invalid("a criteria edit needs a gateway for rescoring".into())),
        (_, gw) => gw,
    };
    if after.name != before.name {
        warn_duplicate_name(session, &after.name, Some(id));
    }
    session.record(TraceEvent::ConceptEdited { before, after: after.clone() });
    if let (true, Some(gw)) = (rescore, gw) {
        rescore_concept(session, gw, id)?;
    }
    Ok(after)
}

fn call_patterns(
    session: &mut Session,
    gw: &Gateway,
    template: TemplateId,
    params: std::collections::BTreeMap<String, String>,
) -> Result<Vec<(String, String)>> {
    let mut params = params;
    if let Some(s) = session.config.seed_term() {
        params.insert("seed_term".into(), s.to_string());
    }
    params.insert("n_name_words".into(), session.config.n_name_words.clone());
    let prompt = gw.render(template, &params)?;
    let req = CompletionRequest::new(Tier::Synthesize, Stage::Generation, template, prompt).with_config(&session.config);
    let result = gw.complete(&req);
    session.record(TraceEvent::LlmCall(Box::new(gw.call_record(&req, &result))));
    let parsed = result.map_err(Error::from).and_then(|r| Ok(parse_json_payload(&r.text, SchemaId::Patterns)?));
    let patterns = match parsed {
        Ok(Payload::Patterns(p)) => p,
        Ok(_) => unreachable!("schema-specific payload"),
        Err(e) => {
            session.record(TraceEvent::warning(&format!("{template}-failed"), e.to_string()));
            return Err(e);
        }
    };
    Ok(patterns
        .into_iter()
        .filter(|p| !p.name.trim().is_empty() && !p.prompt.trim().is_empty())
        .map(|p| (p.name, p.prompt))
        .collect())
}

/// Combines two or more active concepts into one. Sources are deactivated.
pub fn merge_concepts(session: &mut Session, gw: &Gateway, ids: &[String]) -> Result<Concept> {
    let mut unique: Vec<String> = Vec::new();
    for id in ids {
        if !unique.contains(id) {
            unique.push(id.clone());
        }
    }
    if unique.len() < 2 {
        return Err(Error::Invalid("merge needs at least two distinct concepts".into()));
    }
    let sources: Vec<Concept> = unique.iter().map(|id| active_concept(session, id).cloned()).collect::<Result<_>>()?;
    let items: Vec<_> = sources.iter().map(|c| json!({"name": c.name, "prompt": c.criteria_prompt})).collect();
    let patterns = call_patterns(
        session,
        gw,
        TemplateId::Merge,
        params! { "concepts_json" => serde_json::to_string(&items).expect("concepts serialize") },
    )?;
    let Some((name, prompt)) = patterns.into_iter().next() else {
        return Err(Error::Pipeline("merge response contained no usable pattern".into()));
    };
    let id = session.fresh_concept_id("m", 0);
    let mut merged = Concept::derived(&id, &name, &prompt, ConceptOrigin::Merged, unique.clone());
    merged.generation = sources.iter().map(|c| c.generation).max().unwrap_or(0);
    for c in &sources {
        for e in &c.representative_example_ids {
            if !merged.representative_example_ids.contains(e) {
                merged.representative_example_ids.push(e.clone());
            }
        }
        for d in &c.representative_doc_ids {
            if !merged.representative_doc_ids.contains(d) {
                merged.representative_doc_ids.push(d.clone());
            }
        }
    }
    session.record(TraceEvent::ConceptsAdded { concepts: vec![merged.clone()] });
    session.record(TraceEvent::ConceptsDeactivated { ids: unique, reason: format!("merged into {id}") });
    rescore_concept(session, gw, &id)?;
    Ok(merged)
}

/// Replaces a concept by at least two more specific subconcepts.
pub fn split_concept(session: &mut Session, gw: &Gateway, id: &str, n_concepts: usize) -> Result<Vec<Concept>> {
    let parent = active_concept(session, id)?.clone();
    if n_concepts < 2 {
        return Err(Error::Invalid("split needs at least two subconcepts".into()));
    }
    let patterns = call_patterns(
        session,
        gw,
        TemplateId::Split,
        params! {
            "concept_name" => parent.name,
            "concept_prompt" => parent.criteria_prompt,
            "n_concepts" => n_concepts,
        },
    )?;
    if patterns.len() < 2 {
        let msg = format!("split of {id} produced {} usable subconcept(s), need at least 2", patterns.len());
        session.record(TraceEvent::warning("split-failed", msg.clone()));
        return Err(Error::Pipeline(msg));
    }
    let children: Vec<Concept> = patterns
        .iter()
        .enumerate()
        .map(|(k, (name, prompt))| {
            let mut c = Concept::derived(
                &session.fresh_concept_id("s", k),
                name,
                prompt,
                ConceptOrigin::Split,
                vec![parent.id.clone()],
            );
            c.generation = parent.generation;
            c
        })
        .collect();
    let child_ids: Vec<String> = children.iter().map(|c| c.id.clone()).collect();
    session.record(TraceEvent::ConceptsAdded { concepts: children.clone() });
    session.record(TraceEvent::ConceptsDeactivated {
        ids: vec![parent.id.clone()],
        reason: format!("split into {}", child_ids.join(", ")),
    });
    for c in &child_ids {
        rescore_concept(session, gw, c)?;
    }
    Ok(children)
}

/// Defines (or redefines) a named slice after parsing and type-checking it.
pub fn define_slice(session: &mut Session, name: &str, predicate: &str) -> Result<Slice> {
    let name = non_empty("slice name", name)?;
    if name == ALL_SLICE {
        return Err(Error::Invalid(format!("slice name {ALL_SLICE:?} is reserved")));
    }
    let predicate = non_empty("predicate", predicate)?;
    slices::compile(&predicate, session)?;
    let slice = Slice { name, predicate };
    session.record(TraceEvent::SliceDefined { slice: slice.clone() });
    Ok(slice)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{GatewayOptions, ScriptEntry, ScriptFile, ScriptedBackend};
    use crate::model::{Document, MetaValue};

    fn session() -> Session {
        let docs = (0..4)
            .map(|i| Document {
                id: format!("d{i}"),
                text: format!("document number {i}"),
                metadata: [("toxicity".to_string(), MetaValue::Number(i as f64 / 4.0))].into_iter().collect(),
            })
            .collect();
        Session::new("s", docs, Default::default())
    }

    fn all_a() -> String {
        let items: Vec<_> = (0..4).map(|i| json!({"example_id": format!("d{i}"), "rationale": "r", "answer": "A"})).collect();
        json!({"pattern_results": items}).to_string()
    }

    fn gateway(extra: Vec<ScriptEntry>) -> Gateway {
        let mut completions = extra;
        completions.push(ScriptEntry {
            template: Some(TemplateId::Score),
            contains: vec!["\"d0\"".into()],
            response: all_a(),
            ..Default::default()
        });
        Gateway::new(
            Arc::new(ScriptedBackend::new(ScriptFile { completions, ..Default::default() })),
            GatewayOptions::default(),
        )
    }

    fn patterns(template: TemplateId, pairs: &[(&str, &str)]) -> ScriptEntry {
        let items: Vec<_> = pairs.iter().map(|(n, p)| json!({"name": n, "prompt": p})).collect();
        ScriptEntry {
            template: Some(template),
            contains: vec!["PATTERN".into()],
            response: json!({ "patterns": items }).to_string(),
            ..Default::default()
        }
    }

    #[test]
    fn add_scores_new_column() {
        let mut s = session();
        let gw = gateway(vec![]);
        let id = add_concept(&mut s, &gw, "Social Distrust", "Does this example display distrust of other people or society?")
            .unwrap();
        assert_eq!(s.concept(&id).unwrap().origin, ConceptOrigin::UserAuthored);
        assert_eq!(s.matrix.column(&id).unwrap().len(), 4);
        assert!(add_concept(&mut s, &gw, "X", "  ").is_err());
    }

    #[test]
    fn name_only_edit_keeps_column() {
        let mut s = session();
        let gw = gateway(vec![]);
        let id = add_concept(&mut s, &gw, "A", "Is it A?").unwrap();
        let trace_len = s.trace.len();
        edit_concept(&mut s, Some(&gw), &id, Some("B"), None).unwrap();
        assert!(!s.trace[trace_len..].iter().any(|e| e.event.kind() == "column_archived"));
        edit_concept(&mut s, Some(&gw), &id, None, Some("Is it B?")).unwrap();
        assert!(s.trace.iter().any(|e| e.event.kind() == "column_archived"));
    }

    #[test]
    fn merge_deactivates_sources() {
        let mut s = session();
        let gw = gateway(vec![patterns(TemplateId::Merge, &[("Combined", "Is it A or B?")])]);
        let a = add_concept(&mut s, &gw, "A", "Is it A?").unwrap();
        let b = add_concept(&mut s, &gw, "B", "Is it B?").unwrap();
        let m = merge_concepts(&mut s, &gw, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(m.subconcept_ids, vec![a.clone(), b.clone()]);
        assert!(!s.concept(&a).unwrap().active && !s.concept(&b).unwrap().active);
        assert!(s.matrix.column(&m.id).is_some());
        assert!(matches!(merge_concepts(&mut s, &gw, std::slice::from_ref(&m.id)), Err(Error::Invalid(_))));
        assert!(matches!(edit_concept(&mut s, Some(&gw), &a, Some("Z"), None), Err(Error::ConceptInactive(_))));
    }

    #[test]
    fn split_needs_two_children() {
        let mut s = session();
        let gw = gateway(vec![patterns(TemplateId::Split, &[("Only One", "Is it one?")])]);
        let a = add_concept(&mut s, &gw, "A", "Is it A?").unwrap();
        let concepts_before = s.concepts.clone();
        assert!(split_concept(&mut s, &gw, &a, 2).is_err());
        assert_eq!(s.concepts, concepts_before);
        assert!(matches!(split_concept(&mut s, &gw, "nope", 2), Err(Error::UnknownConcept(_))));
    }

    #[test]
    fn split_creates_scored_children() {
        let mut s = session();
        let gw = gateway(vec![patterns(TemplateId::Split, &[("Part One", "Is it one?"), ("Part Two", "Is it two?")])]);
        let a = add_concept(&mut s, &gw, "A", "Is it A?").unwrap();
        let kids = split_concept(&mut s, &gw, &a, 2).unwrap();
        assert_eq!(kids.len(), 2);
        assert!(kids.iter().all(|k| k.subconcept_ids == vec![a.clone()] && s.matrix.column(&k.id).is_some()));
        assert!(!s.concept(&a).unwrap().active);
        assert_eq!(s.replay(), s);
    }

    #[test]
    fn slices_are_checked() {
        let mut s = session();
        define_slice(&mut s, "low", "toxicity < 0.25").unwrap();
        assert!(define_slice(&mut s, "typo", "toxicty < 0.25").is_err());
        assert!(define_slice(&mut s, ALL_SLICE, "toxicity < 1").is_err());
        assert_eq!(s.slices.len(), 1);
    }
}
