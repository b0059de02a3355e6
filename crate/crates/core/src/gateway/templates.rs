//! Prompt templates with `{name}` placeholders; `{{` and `}}` are literal braces.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Filter,
    Summarize,
    Synthesize,
    Score,
    CoverageMatch,
    SyntheticGen,
    Merge,
    Split,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::Filter,
        TemplateId::Summarize,
        TemplateId::Synthesize,
        TemplateId::Score,
        TemplateId::CoverageMatch,
        TemplateId::SyntheticGen,
        TemplateId::Merge,
        TemplateId::Split,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Filter => "filter",
            TemplateId::Summarize => "summarize",
            TemplateId::Synthesize => "synthesize",
            TemplateId::Score => "score",
            TemplateId::CoverageMatch => "coverage_match",
            TemplateId::SyntheticGen => "synthetic_gen",
            TemplateId::Merge => "merge",
            TemplateId::Split => "split",
        }
    }

    pub fn parse(s: &str) -> Option<TemplateId> {
        TemplateId::ALL.into_iter().find(|t| t.as_str() == s)
    }

    pub fn default_body(self) -> &'static str {
        match self {
            TemplateId::Filter => include_str!("../../templates/filter.txt"),
            TemplateId::Summarize => include_str!("../../templates/summarize.txt"),
            TemplateId::Synthesize => include_str!("../../templates/synthesize.txt"),
            TemplateId::Score => include_str!("../../templates/score.txt"),
            TemplateId::CoverageMatch => include_str!("../../templates/coverage_match.txt"),
            TemplateId::SyntheticGen => include_str!("../../templates/synthetic_gen.txt"),
            TemplateId::Merge => include_str!("../../templates/merge.txt"),
            TemplateId::Split => include_str!("../../templates/split.txt"),
        }
    }

    /// Placeholders that render as the empty string when absent.
    fn optional(self) -> &'static [&'static str] {
        match self {
            TemplateId::Filter => &["n_quotes", "seed_phrase"],
            _ => &["seed_phrase"],
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TemplateError {
    #[error("missing placeholder {0}")]
    MissingPlaceholder(String),
    #[error("malformed template {template}: {detail}")]
    Malformed { template: String, detail: String },
    #[error("template override {path}: {detail}")]
    Override { path: String, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot(String),
}

fn parse_body(body: &str) -> Result<Vec<Piece>, String> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                text.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                text.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) if ch.is_alphanumeric() || ch == '_' => name.push(ch),
                        Some(ch) => return Err(format!("unexpected {ch:?} inside placeholder")),
                        None => return Err("unterminated placeholder".into()),
                    }
                }
                if name.is_empty() {
                    return Err("empty placeholder".into());
                }
                if !text.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut text)));
                }
                pieces.push(Piece::Slot(name));
            }
            '}' => return Err("unbalanced '}'".into()),
            _ => text.push(c),
        }
    }
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

/// The seed phrase inserted into prompts: `related to {seed_term}`, or empty.
pub fn seed_phrase(seed_term: Option<&str>) -> String {
    match seed_term.map(str::trim).filter(|s| !s.is_empty()) {
        Some(t) => format!("related to {t}"),
        None => String::new(),
    }
}

/// A set of templates, defaulting to the built-in bodies.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    bodies: HashMap<TemplateId, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            bodies: TemplateId::ALL.iter().map(|t| (*t, t.default_body().to_string())).collect(),
        }
    }
}

impl TemplateSet {
    /// Loads `<dir>/<template_id>.txt` overrides on top of the defaults.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = TemplateSet::default();
        for t in TemplateId::ALL {
            let path = dir.join(format!("{}.txt", t.as_str()));
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Override {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
            parse_body(&body).map_err(|detail| TemplateError::Override { path: path.display().to_string(), detail })?;
            set.bodies.insert(t, body);
        }
        Ok(set)
    }

    pub fn body(&self, id: TemplateId) -> &str {
        &self.bodies[&id]
    }

    /// Renders a template. A `seed_term` param is turned into `seed_phrase`.
    pub fn render(&self, id: TemplateId, params: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let pieces = parse_body(self.body(id))
            .map_err(|detail| TemplateError::Malformed { template: id.to_string(), detail })?;
        let seed = params
            .get("seed_phrase")
            .cloned()
            .unwrap_or_else(|| seed_phrase(params.get("seed_term").map(String::as_str)));
        let mut out = String::new();
        for p in pieces {
            match p {
                Piece::Text(t) => out.push_str(&t),
                Piece::Slot(name) if name == "seed_phrase" => out.push_str(&seed),
                Piece::Slot(name) => match params.get(&name) {
                    Some(v) => out.push_str(v),
                    None if id.optional().contains(&name.as_str()) => {}
                    None => return Err(TemplateError::MissingPlaceholder(name)),
                },
            }
        }
        Ok(out)
    }

    /// Fixed text fragments of a template (everything between placeholders).
    pub fn fixed_fragments(&self, id: TemplateId) -> Vec<String> {
        parse_body(self.body(id))
            .unwrap_or_default()
            .into_iter()
            .filter_map(|p| match p {
                Piece::Text(t) => Some(t),
                Piece::Slot(_) => None,
            })
            .collect()
    }

    pub fn placeholders(&self, id: TemplateId) -> Vec<String> {
        parse_body(self.body(id))
            .unwrap_or_default()
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s),
                Piece::Text(_) => None,
            })
            .collect()
    }
}

/// Renders a built-in template.
pub fn render_prompt(id: TemplateId, params: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    TemplateSet::default().render(id, params)
}

/// Convenience for building parameter maps.
#[macro_export]
macro_rules! params {
    ($($k:expr => $v:expr),* $(,)?) => {{
        #[allow(unused_mut)]
        let mut m = ::std::collections::BTreeMap::<String, String>::new();
        $( m.insert($k.to_string(), $v.to_string()); )*
        m
    }};
}
