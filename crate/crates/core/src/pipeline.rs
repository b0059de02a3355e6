//! Concept generation: sample, distill, cluster, synthesize, then loop on
//! documents the current concepts leave uncovered.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::clustering::{default_min_cluster_size, hdbscan, normalize, ClusterError, HdbscanParams};
use crate::error::{Error, Result};
use crate::gateway::{
    parallel_map, parse_json_payload, CompletionRequest, Gateway, GatewayError, Payload, SchemaId, Stage, TemplateId,
    Tier,
};
use crate::model::{
    Bullet, ClusterAssignment, ClusterLabel, ClusterRun, Concept, Document, ScoreMatrix, Session, SessionConfig,
    TraceEvent,
};
use crate::scoring;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub stage: String,
    pub done: usize,
    pub total: usize,
}

pub type ProgressFn<'a> = &'a (dyn Fn(&Progress) + Sync);

fn report(progress: Option<ProgressFn>, stage: &str, done: usize, total: usize) {
    if let Some(f) = progress {
        f(&Progress { stage: stage.to_string(), done, total });
    }
}

/// Uniform sample of `min(cap, n)` ids without replacement, in input order.
pub fn sample_documents(doc_ids: &[String], cap: usize, rng_seed: u64) -> Vec<String> {
    let n = doc_ids.len();
    let cap = cap.max(1);
    if cap >= n {
        return doc_ids.to_vec();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| doc_ids[i].clone()).collect()
}

fn text_example_json(doc_id: &str, text: &str) -> String {
    json!({"example_id": doc_id, "example_text": text}).to_string()
}

fn seed_params(config: &SessionConfig) -> BTreeMap<String, String> {
    let mut p = BTreeMap::new();
    if let Some(s) = config.seed_term() {
        p.insert("seed_term".to_string(), s.to_string());
    }
    p
}

fn call(
    gw: &Gateway,
    tier: Tier,
    template: TemplateId,
    params: &BTreeMap<String, String>,
    schema: SchemaId,
    config: &SessionConfig,
    events: &mut Vec<TraceEvent>,
) -> std::result::Result<Payload, GatewayError> {
    let prompt = gw.render(template, params)?;
    let req = CompletionRequest::new(tier, Stage::Generation, template, prompt).with_config(config);
    let result = gw.complete(&req);
    events.push(TraceEvent::LlmCall(Box::new(gw.call_record(&req, &result))));
    Ok(parse_json_payload(&result?.text, schema)?)
}

/// Extractive quotes from `doc`. Quotes not found verbatim are dropped with a warning.
pub fn distill_filter(
    gw: &Gateway,
    doc: &Document,
    config: &SessionConfig,
    events: &mut Vec<TraceEvent>,
) -> std::result::Result<Vec<String>, GatewayError> {
    let mut params = seed_params(config);
    params.insert("text_example_json".into(), text_example_json(&doc.id, &doc.text));
    if let Some(n) = &config.n_quotes {
        params.insert("n_quotes".into(), n.clone());
    }
    let Payload::RelevantQuotes(raw) = call(gw, Tier::Distill, TemplateId::Filter, &params, SchemaId::RelevantQuotes, config, events)?
    else {
        unreachable!("schema-specific payload")
    };
    let mut quotes = Vec::new();
    for q in raw {
        let t = q.trim();
        if t.is_empty() {
            continue;
        }
        if doc.text.contains(q.as_str()) {
            quotes.push(q);
        } else if doc.text.contains(t) {
            quotes.push(t.to_string());
        } else {
            events.push(TraceEvent::warning("quote-not-verbatim", format!("{}: {t:?}", doc.id)));
        }
    }
    Ok(quotes)
}

/// Bullet summaries of `source`. Empty bullets are dropped.
pub fn distill_summarize(
    gw: &Gateway,
    doc_id: &str,
    source: &str,
    iteration: u32,
    config: &SessionConfig,
    events: &mut Vec<TraceEvent>,
) -> std::result::Result<Vec<Bullet>, GatewayError> {
    let mut params = seed_params(config);
    params.insert("text_example_json".into(), text_example_json(doc_id, source));
    params.insert("n_bullets".into(), config.n_bullets.clone());
    params.insert("n_words".into(), config.n_words.clone());
    let Payload::Bullets(raw) = call(gw, Tier::Distill, TemplateId::Summarize, &params, SchemaId::Bullets, config, events)?
    else {
        unreachable!("schema-specific payload")
    };
    Ok(raw
        .iter()
        .map(|b| b.trim())
        .filter(|b| !b.is_empty())
        .enumerate()
        .map(|(k, text)| Bullet {
            id: format!("b{iteration}-{doc_id}-{k}"),
            doc_id: doc_id.to_string(),
            text: text.to_string(),
            iteration,
        })
        .collect())
}

struct Distilled {
    events: Vec<TraceEvent>,
    bullets: Option<Vec<Bullet>>,
}

fn distill_document(gw: &Gateway, doc: &Document, iteration: u32, config: &SessionConfig) -> Distilled {
    let mut events = Vec::new();
    let failed = |mut events: Vec<TraceEvent>, e: GatewayError| {
        events.push(TraceEvent::warning("distill-failed", format!("{}: {e}", doc.id)));
        Distilled { events, bullets: None }
    };
    let mut source = doc.text.clone();
    if doc.text.chars().count() > config.filter_min_chars {
        match distill_filter(gw, doc, config, &mut events) {
            Ok(quotes) => {
                if !quotes.is_empty() {
                    source = quotes.join("\n");
                }
                events.push(TraceEvent::QuotesExtracted { iteration, doc_id: doc.id.clone(), quotes });
            }
            Err(e) => return failed(events, e),
        }
    } else {
        events.push(TraceEvent::note("filter-skipped", doc.id.clone()));
    }
    match distill_summarize(gw, &doc.id, &source, iteration, config, &mut events) {
        Ok(bullets) => {
            events.push(TraceEvent::BulletsAdded { iteration, bullets: bullets.clone() });
            Distilled { events, bullets: Some(bullets) }
        }
        Err(e) => failed(events, e),
    }
}

fn bullets_json(bullets: &[&Bullet]) -> String {
    let items: Vec<_> = bullets.iter().map(|b| json!({"example_id": b.id, "example_text": b.text})).collect();
    serde_json::to_string(&items).expect("bullets serialize")
}

/// Concepts proposed for one cluster. Cited ids outside the cluster are dropped.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_cluster(
    gw: &Gateway,
    cluster_id: u32,
    bullets: &[&Bullet],
    n_concepts: usize,
    generation: u32,
    config: &SessionConfig,
    events: &mut Vec<TraceEvent>,
) -> std::result::Result<Vec<Concept>, GatewayError> {
    if bullets.is_empty() {
        return Err(GatewayError::Precondition(format!("cluster {cluster_id} is empty")));
    }
    let mut params = seed_params(config);
    params.insert("bullets_json".into(), bullets_json(bullets));
    params.insert("n_concepts".into(), n_concepts.to_string());
    params.insert("n_name_words".into(), config.n_name_words.clone());
    params.insert("n_example_ids".into(), config.n_example_ids.clone());
    let Payload::Patterns(patterns) =
        call(gw, Tier::Synthesize, TemplateId::Synthesize, &params, SchemaId::Patterns, config, events)?
    else {
        unreachable!("schema-specific payload")
    };
    if patterns.is_empty() {
        events.push(TraceEvent::note("barren-cluster", format!("cluster {cluster_id} produced no patterns")));
    }
    let members: HashMap<&str, &str> = bullets.iter().map(|b| (b.id.as_str(), b.doc_id.as_str())).collect();
    let mut out = Vec::new();
    for (k, p) in patterns.into_iter().enumerate() {
        if p.name.trim().is_empty() || p.prompt.trim().is_empty() {
            events.push(TraceEvent::warning("pattern-incomplete", format!("cluster {cluster_id} pattern {k}")));
            continue;
        }
        let mut c = Concept::synthesized(&format!("g{generation}-c{cluster_id}-{k}"), &p.name, &p.prompt, generation);
        c.source_cluster = Some(cluster_id);
        for id in p.example_ids {
            let id = id.trim().to_string();
            match members.get(id.as_str()) {
                Some(doc) => {
                    if !c.representative_example_ids.contains(&id) {
                        c.representative_example_ids.push(id.clone());
                    }
                    if !c.representative_doc_ids.iter().any(|d| d == doc) {
                        c.representative_doc_ids.push(doc.to_string());
                    }
                }
                None => events.push(TraceEvent::warning(
                    "foreign-example-id",
                    format!("{}: {id:?} is not in cluster {cluster_id}", c.id),
                )),
            }
        }
        out.push(c);
    }
    Ok(out)
}

/// Concepts requested per cluster: ⌈cap / #clusters⌉ within [1, 5].
pub fn concepts_per_cluster(max_concepts: usize, n_clusters: usize) -> usize {
    if n_clusters == 0 {
        return 1;
    }
    max_concepts.div_ceil(n_clusters).clamp(1, 5)
}

/// Keeps at most `cap` concepts, preferring larger clusters, then earlier cluster
/// ids. Survivors keep their original relative order.
pub fn select_capped(concepts: Vec<Concept>, cluster_sizes: &HashMap<u32, usize>, cap: usize) -> (Vec<Concept>, Vec<Concept>) {
    if concepts.len() <= cap {
        return (concepts, Vec::new());
    }
    let mut order: Vec<usize> = (0..concepts.len()).collect();
    order.sort_by_key(|&i| {
        let cl = concepts[i].source_cluster.unwrap_or(u32::MAX);
        (std::cmp::Reverse(cluster_sizes.get(&cl).copied().unwrap_or(0)), cl, i)
    });
    let keep: HashSet<usize> = order.into_iter().take(cap).collect();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, c) in concepts.into_iter().enumerate() {
        if keep.contains(&i) {
            kept.push(c);
        } else {
            dropped.push(c);
        }
    }
    (kept, dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub iteration: u32,
    pub input_doc_ids: Vec<String>,
    pub n_bullets: usize,
    pub n_clusters: usize,
    pub concept_ids: Vec<String>,
    /// Set when clustering found no cluster at all.
    pub no_clusters: bool,
}

/// One generation pass over `inputs`, recorded into `session`.
pub fn run_generation(
    session: &mut Session,
    gw: &Gateway,
    inputs: &[String],
    iteration: u32,
    progress: Option<ProgressFn>,
) -> Result<GenerationResult> {
    if inputs.is_empty() {
        return Err(Error::Pipeline("generation needs at least one input document".into()));
    }
    let config = session.config.clone();
    let mut seen = HashSet::new();
    let mut docs: Vec<Document> = Vec::with_capacity(inputs.len());
    for id in inputs {
        if !seen.insert(id.as_str()) {
            continue;
        }
        let doc = session.document(id).ok_or_else(|| Error::Invalid(format!("unknown document {id}")))?;
        docs.push(doc.clone());
    }
    let sample_seed = config.rng_seed.wrapping_add(iteration as u64);
    let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
    let sampled = sample_documents(&ids, config.sample_size, sample_seed);
    let sampled_set: HashSet<&str> = sampled.iter().map(String::as_str).collect();
    docs.retain(|d| sampled_set.contains(d.id.as_str()));
    session.record(TraceEvent::Sampled { iteration, doc_ids: sampled.clone() });

    let total = docs.len();
    let done = AtomicUsize::new(0);
    report(progress, "distill", 0, total);
    let distilled = parallel_map(&docs, gw.options().max_concurrency, |doc| {
        let d = distill_document(gw, doc, iteration, &config);
        report(progress, "distill", done.fetch_add(1, Ordering::SeqCst) + 1, total);
        d
    });
    let mut bullets: Vec<Bullet> = Vec::new();
    let mut failures = 0;
    for d in distilled {
        session.record_all(d.events);
        match d.bullets {
            Some(b) => bullets.extend(b),
            None => failures += 1,
        }
    }
    if failures == docs.len() {
        return Err(Error::Pipeline(format!("every document failed distillation ({failures})")));
    }
    let mut result = GenerationResult {
        iteration,
        input_doc_ids: sampled,
        n_bullets: bullets.len(),
        n_clusters: 0,
        concept_ids: Vec::new(),
        no_clusters: true,
    };

    let mcs = config.min_cluster_size.unwrap_or_else(|| default_min_cluster_size(bullets.len()));
    if bullets.len() < mcs.max(2) {
        session.record(TraceEvent::note(
            "no-clusters",
            format!("{} bullets, fewer than min_cluster_size {mcs}", bullets.len()),
        ));
        return Ok(result);
    }
    report(progress, "embed", 0, 1);
    let texts: Vec<String> = bullets.iter().map(|b| b.text.clone()).collect();
    let embedded = gw.embed(&texts, Stage::Generation);
    if let Err(e) = &embedded {
        session.record(TraceEvent::warning("embed-failed", e.to_string()));
    }
    let embedded = embedded?;
    session.record_all(embedded.calls.into_iter().map(|c| TraceEvent::LlmCall(Box::new(c))));
    report(progress, "embed", 1, 1);
    let bullet_ids: Vec<String> = bullets.iter().map(|b| b.id.clone()).collect();
    let vectors = normalize(&embedded.vectors, &bullet_ids)?;
    if vectors.first().is_some_and(|v| v.len() < 2) {
        return Err(ClusterError::TooFewDimensions(vectors[0].len()).into());
    }
    let params = HdbscanParams {
        min_samples: config.min_samples,
        allow_single_cluster: config.allow_single_cluster,
        ..HdbscanParams::new(mcs)
    };
    let clustering = hdbscan(&vectors, &params)?;
    let assignments: Vec<ClusterAssignment> = bullets
        .iter()
        .zip(clustering.labels.iter().zip(&clustering.strengths))
        .map(|(b, (l, s))| ClusterAssignment { bullet_id: b.id.clone(), cluster_id: *l, strength: *s })
        .collect();
    session.record(TraceEvent::ClustersAssigned { run: ClusterRun { iteration, min_cluster_size: mcs, assignments } });

    let mut clusters: BTreeMap<u32, Vec<&Bullet>> = BTreeMap::new();
    for (b, l) in bullets.iter().zip(&clustering.labels) {
        if let ClusterLabel::Cluster(id) = l {
            clusters.entry(*id).or_default().push(b);
        }
    }
    result.n_clusters = clusters.len();
    if clusters.is_empty() {
        session.record(TraceEvent::note("no-clusters", format!("all {} bullets are noise", bullets.len())));
        return Ok(result);
    }
    result.no_clusters = false;

    let n_concepts =
        config.n_concepts_per_cluster.unwrap_or_else(|| concepts_per_cluster(config.max_concepts, clusters.len()));
    let groups: Vec<(u32, Vec<&Bullet>)> = clusters.into_iter().collect();
    let total = groups.len();
    let done = AtomicUsize::new(0);
    report(progress, "synthesize", 0, total);
    let synthesized = parallel_map(&groups, gw.options().max_concurrency, |(id, members)| {
        let mut events = Vec::new();
        let r = synthesize_cluster(gw, *id, members, n_concepts, iteration, &config, &mut events);
        if let Err(e) = &r {
            events.push(TraceEvent::warning("synthesize-failed", format!("cluster {id}: {e}")));
        }
        report(progress, "synthesize", done.fetch_add(1, Ordering::SeqCst) + 1, total);
        (events, r.unwrap_or_default())
    });
    let mut candidates = Vec::new();
    for (events, concepts) in synthesized {
        session.record_all(events);
        candidates.extend(concepts);
    }
    for c in candidates.iter_mut() {
        if session.concept(&c.id).is_some() {
            c.id = session.fresh_concept_id(&format!("{}-", c.id), 0);
        }
    }
    let sizes: HashMap<u32, usize> = groups.iter().map(|(id, m)| (*id, m.len())).collect();
    let (kept, dropped) = select_capped(candidates, &sizes, config.max_concepts);
    if !dropped.is_empty() {
        let ids: Vec<&str> = dropped.iter().map(|c| c.id.as_str()).collect();
        session.record(TraceEvent::note(
            "concept-cap",
            format!("kept {} of {}; dropped {}", kept.len(), kept.len() + dropped.len(), ids.join(", ")),
        ));
    }
    result.concept_ids = kept.iter().map(|c| c.id.clone()).collect();
    if !kept.is_empty() {
        session.record(TraceEvent::ConceptsAdded { concepts: kept });
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopSelection {
    pub doc_ids: Vec<String>,
    pub generic_concept_ids: Vec<String>,
}

/// Documents not covered by any non-generic concept. A concept is generic when
/// it matches at least `generic_fraction` of all documents.
pub fn loop_select_inputs(matrix: &ScoreMatrix, concept_ids: &[String], generic_fraction: f64) -> LoopSelection {
    let n = matrix.n_docs();
    let mut generic = Vec::new();
    let mut specific: Vec<Vec<bool>> = Vec::new();
    for id in concept_ids {
        let Some(labels) = matrix.labels(id) else { continue };
        let matches = labels.iter().filter(|l| **l).count();
        if n > 0 && matches as f64 >= generic_fraction * n as f64 {
            generic.push(id.clone());
        } else {
            specific.push(labels);
        }
    }
    let doc_ids = (0..n).filter(|i| !specific.iter().any(|l| l[*i])).map(|i| matrix.doc_ids[i].clone()).collect();
    LoopSelection { doc_ids, generic_concept_ids: generic }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductionResult {
    pub generations: Vec<GenerationResult>,
    pub concept_ids: Vec<String>,
}

/// Scores every active concept lacking a column, reporting progress.
pub fn score_pending(session: &mut Session, gw: &Gateway, progress: Option<ProgressFn>) -> Result<usize> {
    let ids: Vec<String> =
        session.active_concepts().filter(|c| !session.matrix.columns.contains_key(&c.id)).map(|c| c.id.clone()).collect();
    report(progress, "score", 0, ids.len());
    for (i, id) in ids.iter().enumerate() {
        scoring::rescore_concept(session, gw, id)?;
        report(progress, "score", i + 1, ids.len());
    }
    Ok(ids.len())
}

/// Runs up to `n_loops` generations, scoring after each. Later generations run
/// on the documents the previous concepts left uncovered.
pub fn run_iterations(
    session: &mut Session,
    gw: &Gateway,
    n_loops: u32,
    progress: Option<ProgressFn>,
) -> Result<InductionResult> {
    if n_loops == 0 {
        return Err(Error::Invalid("n_loops must be at least 1".into()));
    }
    let first = session.last_iteration().map_or(0, |i| i + 1);
    let mut out = InductionResult { generations: Vec::new(), concept_ids: Vec::new() };
    for k in 0..n_loops {
        let iteration = first + k;
        let inputs = if k == 0 {
            session.documents.iter().map(|d| d.id.clone()).collect()
        } else {
            let active: Vec<String> = session.active_concepts().map(|c| c.id.clone()).collect();
            let sel = loop_select_inputs(&session.matrix, &active, session.config.generic_fraction);
            let newly_generic: Vec<String> = sel
                .generic_concept_ids
                .iter()
                .filter(|id| session.concept(id).is_some_and(|c| !c.generic))
                .cloned()
                .collect();
            if !newly_generic.is_empty() {
                session.record(TraceEvent::ConceptsFlaggedGeneric { ids: newly_generic });
            }
            session.record(TraceEvent::LoopSelected {
                iteration,
                doc_ids: sel.doc_ids.clone(),
                generic_concept_ids: sel.generic_concept_ids,
            });
            if sel.doc_ids.is_empty() {
                session.record(TraceEvent::note("loop-stopped", "every document is covered by a specific concept"));
                break;
            }
            sel.doc_ids
        };
        let generation = run_generation(session, gw, &inputs, iteration, progress)?;
        let produced = !generation.concept_ids.is_empty();
        out.concept_ids.extend(generation.concept_ids.iter().cloned());
        out.generations.push(generation);
        score_pending(session, gw, progress)?;
        if !produced && k + 1 < n_loops {
            session.record(TraceEvent::note("loop-stopped", format!("iteration {iteration} produced no concepts")));
            break;
        }
    }
    Ok(out)
}
