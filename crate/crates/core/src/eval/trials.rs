//! Repeated coverage trials and matcher error against manual matches.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::coverage::{auto_coverage, enforce_matches};
use crate::gateway::{parallel_map, ConceptMatch, Gateway};
use crate::model::TraceEvent;
use crate::{Error, Result};

/// Generated concepts from one run of one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialInput {
    pub method: String,
    pub dataset: String,
    pub trial: u32,
    #[serde(default)]
    pub generated: Vec<String>,
    /// Set when the generation run itself failed.
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialsFile {
    /// Ground-truth concepts per dataset.
    pub ground_truth: BTreeMap<String, Vec<String>>,
    pub trials: Vec<TrialInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub method: String,
    pub dataset: String,
    pub trial: u32,
    pub coverage: Option<f64>,
    pub n_matched: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub dataset: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; undefined below two successful trials.
    pub sd: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub rows: Vec<TrialRow>,
    pub summary: Vec<SummaryRow>,
}

pub fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

/// Scores up to `n_trials` runs per (method, dataset) against the dataset's
/// ground truth. A failing trial is reported on its row and left out of the
/// aggregate; it never aborts the batch.
pub fn run_trials(
    gw: &Gateway,
    inputs: &[TrialInput],
    ground_truth: &BTreeMap<String, Vec<String>>,
    n_trials: usize,
    events: &mut Vec<TraceEvent>,
) -> Result<TrialReport> {
    if n_trials == 0 {
        return Err(Error::Invalid("n_trials must be at least 1".into()));
    }
    let mut groups: IndexMap<(String, String), Vec<&TrialInput>> = IndexMap::new();
    for t in inputs {
        groups.entry((t.method.clone(), t.dataset.clone())).or_default().push(t);
    }
    let selected: Vec<&TrialInput> = groups.values().flat_map(|g| g.iter().take(n_trials).copied()).collect();

    let outcomes = parallel_map(&selected, gw.options().max_concurrency, |t| {
        let mut ev = Vec::new();
        let r = if let Some(e) = &t.error {
            Err(format!("generation failed: {e}"))
        } else {
            match ground_truth.get(&t.dataset) {
                None => Err(format!("no ground truth for dataset {:?}", t.dataset)),
                Some(gt) => auto_coverage(gw, gt, &t.generated, &mut ev).map_err(|e| e.to_string()),
            }
        };
        (r, ev)
    });

    let mut rows = Vec::with_capacity(selected.len());
    for (t, (r, ev)) in selected.iter().zip(outcomes) {
        events.extend(ev);
        let (coverage, n_matched, error) = match r {
            Ok(m) => (Some(m.coverage), Some(m.n_matched), None),
            Err(e) => {
                events.push(TraceEvent::warning("trial-failed", format!("{}/{}/{}: {e}", t.method, t.dataset, t.trial)));
                (None, None, Some(e))
            }
        };
        rows.push(TrialRow { method: t.method.clone(), dataset: t.dataset.clone(), trial: t.trial, coverage, n_matched, error });
    }

    let mut summary = Vec::new();
    for ((method, dataset), group) in &groups {
        let mine: Vec<&TrialRow> = rows.iter().filter(|r| &r.method == method && &r.dataset == dataset).collect();
        let ok: Vec<f64> = mine.iter().filter_map(|r| r.coverage).collect();
        let n_failed = mine.len() - ok.len();
        let (mean, sd) = mean_sd(&ok);
        let mut notes = Vec::new();
        if group.len() < n_trials {
            notes.push(format!("only {} of {n_trials} trials supplied", group.len()));
        }
        if n_failed > 0 {
            notes.push(format!("{n_failed} failed; aggregated over {}", ok.len()));
        }
        if sd.is_none() {
            notes.push("sd undefined".to_string());
        }
        summary.push(SummaryRow {
            method: method.clone(),
            dataset: dataset.clone(),
            n_ok: ok.len(),
            n_failed,
            mean,
            sd,
            note: notes.join("; "),
        });
    }
    Ok(TrialReport { rows, summary })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl TrialReport {
    pub fn trials_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "dataset", "trial", "status", "coverage", "error"]).expect("in-memory write");
        for r in &self.rows {
            let status = if r.error.is_some() { "failed" } else { "ok" };
            w.write_record([
                r.method.as_str(),
                &r.dataset,
                &r.trial.to_string(),
                status,
                &opt(r.coverage),
                r.error.as_deref().unwrap_or(""),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "dataset", "n_ok", "n_failed", "mean", "sd", "note"]).expect("in-memory write");
        for s in &self.summary {
            w.write_record([
                s.method.as_str(),
                &s.dataset,
                &s.n_ok.to_string(),
                &s.n_failed.to_string(),
                &opt(s.mean),
                &opt(s.sd),
                &s.note,
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualMatch {
    pub concept_id: String,
    /// Item number, or absent / `NONE` for no match.
    #[serde(default)]
    pub item_id: Option<String>,
}

/// Hand-made matches for one trial, numbered like the matching prompt (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualTrial {
    pub method: String,
    pub dataset: String,
    pub trial: u32,
    pub matches: Vec<ManualMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaePair {
    pub method: String,
    pub dataset: String,
    pub trial: u32,
    pub automated: f64,
    pub manual: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub mae: Option<f64>,
    pub pairs: Vec<MaePair>,
    /// Manual trials with no successful automated counterpart.
    pub unpaired: Vec<String>,
}

/// Mean absolute error between automated coverage and coverage from manual matches.
pub fn matcher_mae(file: &TrialsFile, report: &TrialReport, manual: &[ManualTrial]) -> Result<MaeReport> {
    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    for m in manual {
        let key = format!("{}/{}/{}", m.method, m.dataset, m.trial);
        let gt = file
            .ground_truth
            .get(&m.dataset)
            .ok_or_else(|| Error::Invalid(format!("manual trial {key}: no ground truth for dataset")))?;
        let input = file.trials.iter().find(|t| t.method == m.method && t.dataset == m.dataset && t.trial == m.trial);
        let row = report.rows.iter().find(|r| r.method == m.method && r.dataset == m.dataset && r.trial == m.trial);
        let (Some(input), Some(automated)) = (input, row.and_then(|r| r.coverage)) else {
            unpaired.push(key);
            continue;
        };
        let raw: Vec<ConceptMatch> = m
            .matches
            .iter()
            .map(|x| ConceptMatch {
                concept_id: x.concept_id.clone(),
                item_id: x.item_id.clone().filter(|i| !i.trim().eq_ignore_ascii_case("none")),
                rationale: String::new(),
            })
            .collect();
        let manual_cov = enforce_matches(gt, &input.generated, &raw).coverage;
        pairs.push(MaePair {
            method: m.method.clone(),
            dataset: m.dataset.clone(),
            trial: m.trial,
            automated,
            manual: manual_cov,
            abs_error: (automated - manual_cov).abs(),
        });
    }
    let mae = (!pairs.is_empty()).then(|| pairs.iter().map(|p| p.abs_error).sum::<f64>() / pairs.len() as f64);
    Ok(MaeReport { mae, pairs, unpaired })
}
