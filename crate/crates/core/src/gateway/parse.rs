//! Extraction and validation of JSON payloads from raw model responses.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    RelevantQuotes,
    Bullets,
    Patterns,
    PatternResults,
    ConceptMatches,
    Paragraph,
}

impl SchemaId {
    pub fn parse(s: &str) -> Option<SchemaId> {
        Some(match s {
            "relevant_quotes" => SchemaId::RelevantQuotes,
            "bullets" => SchemaId::Bullets,
            "patterns" => SchemaId::Patterns,
            "pattern_results" => SchemaId::PatternResults,
            "concept_matches" => SchemaId::ConceptMatches,
            "paragraph" => SchemaId::Paragraph,
            _ => return None,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("unparseable response: {message}")]
    Unparseable { message: String, raw: String },
    #[error("schema violation at {key}: {detail}")]
    Schema { key: String, detail: String, raw: String },
}

impl ParseError {
    pub fn raw(&self) -> &str {
        match self {
            ParseError::Unparseable { raw, .. } | ParseError::Schema { raw, .. } => raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub name: String,
    pub prompt: String,
    #[serde(default)]
    pub example_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternResult {
    pub example_id: String,
    pub rationale: String,
    /// Answer as written by the model; validated by the scoring module.
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptMatch {
    pub concept_id: String,
    /// `None` when the model answered NONE.
    pub item_id: Option<String>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParagraph {
    pub paragraph: String,
    pub seed_topic_sentences: Vec<String>,
    /// True when the model returned the seed sentences as one string.
    pub seed_sentences_as_text: bool,
}

/// Typed result of [`parse_json_payload`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schema", rename_all = "snake_case")]
pub enum Payload {
    RelevantQuotes(Vec<String>),
    Bullets(Vec<String>),
    Patterns(Vec<Pattern>),
    PatternResults(Vec<PatternResult>),
    ConceptMatches(Vec<ConceptMatch>),
    Paragraph(SyntheticParagraph),
}

/// Locates the JSON object inside a model response: strips markdown fences
/// and leading/trailing prose, then tolerates trailing commas (the prompt
/// formats themselves show them).
pub fn extract_json(raw: &str) -> Result<Value, ParseError> {
    let unparseable = |message: String| ParseError::Unparseable { message, raw: raw.to_string() };
    let mut body = raw.trim();
    if let Some(start) = body.find("```") {
        let after = &body[start + 3..];
        let after = after.strip_prefix("json").or_else(|| after.strip_prefix("JSON")).unwrap_or(after);
        body = match after.find("```") {
            Some(end) => &after[..end],
            None => after,
        };
    }
    let open = body.find('{').ok_or_else(|| unparseable("no JSON object found".into()))?;
    let close = body.rfind('}').ok_or_else(|| unparseable("no closing brace found".into()))?;
    if close < open {
        return Err(unparseable("no JSON object found".into()));
    }
    let candidate = &body[open..=close];
    match serde_json::from_str::<Value>(candidate) {
        Ok(v) => Ok(v),
        Err(first) => serde_json::from_str::<Value>(&strip_trailing_commas(candidate))
            .map_err(|_| unparseable(first.to_string())),
    }
}

/// Removes commas that directly precede `}` or `]`, outside string literals.
fn strip_trailing_commas(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut in_str = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_str {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        if c == '"' {
            in_str = true;
            out.push(c);
            continue;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|ch| !ch.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

struct Checker<'a> {
    raw: &'a str,
}

impl Checker<'_> {
    fn err(&self, key: &str, detail: impl Into<String>) -> ParseError {
        ParseError::Schema { key: key.to_string(), detail: detail.into(), raw: self.raw.to_string() }
    }

    fn field<'v>(&self, obj: &'v Value, key: &str) -> Result<&'v Value, ParseError> {
        obj.get(key).ok_or_else(|| self.err(key, "missing"))
    }

    fn array<'v>(&self, obj: &'v Value, key: &str) -> Result<&'v Vec<Value>, ParseError> {
        self.field(obj, key)?.as_array().ok_or_else(|| self.err(key, "expected a list"))
    }

    fn string(&self, obj: &Value, key: &str) -> Result<String, ParseError> {
        scalar_string(self.field(obj, key)?).ok_or_else(|| self.err(key, "expected a string"))
    }

    fn string_list(&self, obj: &Value, key: &str) -> Result<Vec<String>, ParseError> {
        self.array(obj, key)?
            .iter()
            .map(|v| scalar_string(v).ok_or_else(|| self.err(key, "expected a list of strings")))
            .collect()
    }
}

/// Strings pass through; numbers are accepted where ids are expected.
fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

pub fn parse_json_payload(raw: &str, schema: SchemaId) -> Result<Payload, ParseError> {
    let v = extract_json(raw)?;
    let ck = Checker { raw };
    if !v.is_object() {
        return Err(ck.err("$", "expected a JSON object"));
    }
    Ok(match schema {
        SchemaId::RelevantQuotes => Payload::RelevantQuotes(ck.string_list(&v, "relevant_quotes")?),
        SchemaId::Bullets => Payload::Bullets(ck.string_list(&v, "bullets")?),
        SchemaId::Patterns => {
            let items = ck.array(&v, "patterns")?;
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                let example_ids = match item.get("example_ids") {
                    None | Some(Value::Null) => Vec::new(),
                    Some(_) => ck.string_list(item, "example_ids")?,
                };
                out.push(Pattern { name: ck.string(item, "name")?, prompt: ck.string(item, "prompt")?, example_ids });
            }
            Payload::Patterns(out)
        }
        SchemaId::PatternResults => {
            let items = ck.array(&v, "pattern_results")?;
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.push(PatternResult {
                    example_id: ck.string(item, "example_id")?,
                    rationale: match item.get("rationale") {
                        None | Some(Value::Null) => String::new(),
                        Some(_) => ck.string(item, "rationale")?,
                    },
                    answer: ck.string(item, "answer")?,
                });
            }
            Payload::PatternResults(out)
        }
        SchemaId::ConceptMatches => {
            let items = ck.array(&v, "concept_matches")?;
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                let item_id = match item.get("item_id") {
                    None | Some(Value::Null) => None,
                    Some(_) => {
                        let s = ck.string(item, "item_id")?;
                        let t = s.trim();
                        if t.is_empty() || t.eq_ignore_ascii_case("none") {
                            None
                        } else {
                            Some(t.to_string())
                        }
                    }
                };
                out.push(ConceptMatch {
                    concept_id: ck.string(item, "concept_id")?.trim().to_string(),
                    item_id,
                    rationale: match item.get("rationale") {
                        None | Some(Value::Null) => String::new(),
                        Some(_) => ck.string(item, "rationale")?,
                    },
                });
            }
            Payload::ConceptMatches(out)
        }
        SchemaId::Paragraph => {
            let paragraph = ck.string(&v, "paragraph")?;
            let (seed_topic_sentences, as_text) = match ck.field(&v, "seed_topic_sentences")? {
                Value::String(s) => (vec![s.clone()], true),
                Value::Array(_) => (ck.string_list(&v, "seed_topic_sentences")?, false),
                _ => return Err(ck.err("seed_topic_sentences", "expected a string or a list of strings")),
            };
            Payload::Paragraph(SyntheticParagraph { paragraph, seed_topic_sentences, seed_sentences_as_text: as_text })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_bullets() {
        let p = parse_json_payload(r#"{"bullets": ["a", "b"]}"#, SchemaId::Bullets).unwrap();
        assert_eq!(p, Payload::Bullets(vec!["a".into(), "b".into()]));
    }

    #[test]
    fn fenced_quotes() {
        let raw = "Sure! Here you go:\n```json\n{\"relevant_quotes\": [\"q\"]}\n```\nHope that helps.";
        let p = parse_json_payload(raw, SchemaId::RelevantQuotes).unwrap();
        assert_eq!(p, Payload::RelevantQuotes(vec!["q".into()]));
    }

    #[test]
    fn pattern_missing_prompt_names_key() {
        let err = parse_json_payload(r#"{"patterns": [{"name": "X"}]}"#, SchemaId::Patterns).unwrap_err();
        match err {
            ParseError::Schema { key, .. } => assert_eq!(key, "prompt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trailing_commas_from_prompt_format_are_tolerated() {
        let raw = r#"{"pattern_results": [{"example_id": "1", "rationale": "r, ok", "answer": "A",},]}"#;
        let p = parse_json_payload(raw, SchemaId::PatternResults).unwrap();
        match p {
            Payload::PatternResults(r) => {
                assert_eq!(r[0].answer, "A");
                assert_eq!(r[0].rationale, "r, ok");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn garbage_is_unparseable_and_keeps_raw() {
        let err = parse_json_payload("I cannot help with that.", SchemaId::Bullets).unwrap_err();
        assert!(matches!(err, ParseError::Unparseable { .. }));
        assert_eq!(err.raw(), "I cannot help with that.");
    }

    #[test]
    fn mistyped_key_is_schema_error() {
        let err = parse_json_payload(r#"{"bullets": "a"}"#, SchemaId::Bullets).unwrap_err();
        assert!(matches!(err, ParseError::Schema { ref key, .. } if key == "bullets"));
    }

    #[test]
    fn concept_matches_none_and_numeric_ids() {
        let raw = r#"{"concept_matches": [{"concept_id": 1, "item_id": "NONE", "rationale": "x"},
                      {"concept_id": "2", "item_id": 3, "rationale": "y"}]}"#;
        match parse_json_payload(raw, SchemaId::ConceptMatches).unwrap() {
            Payload::ConceptMatches(m) => {
                assert_eq!(m[0].item_id, None);
                assert_eq!(m[0].concept_id, "1");
                assert_eq!(m[1].item_id.as_deref(), Some("3"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn paragraph_accepts_string_or_list() {
        let a = parse_json_payload(r#"{"paragraph": "A. B.", "seed_topic_sentences": "B."}"#, SchemaId::Paragraph).unwrap();
        let b = parse_json_payload(r#"{"paragraph": "A. B.", "seed_topic_sentences": ["B."]}"#, SchemaId::Paragraph).unwrap();
        match (a, b) {
            (Payload::Paragraph(a), Payload::Paragraph(b)) => {
                assert!(a.seed_sentences_as_text);
                assert!(!b.seed_sentences_as_text);
                assert_eq!(a.seed_topic_sentences, b.seed_topic_sentences);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_extraction() {
        let raw = r#"prefix {"bullets": ["a {b}", "c,]"]} suffix"#;
        assert_eq!(
            parse_json_payload(raw, SchemaId::Bullets).unwrap(),
            Payload::Bullets(vec!["a {b}".into(), "c,]".into()])
        );
    }
}
