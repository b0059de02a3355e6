//! Dataset ingest from CSV or JSON-lines into session documents.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{Document, MetaKind, MetaValue};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("unsupported dataset format {0:?}; use .csv or .jsonl")]
    Format(String),
    #[error("column {name:?} not found; available columns: {}", .available.join(", "))]
    MissingColumn { name: String, available: Vec<String> },
    #[error("malformed {format} at row {row}: {detail}")]
    Malformed { format: &'static str, row: usize, detail: String },
    #[error("duplicate document id {id:?} at rows {first} and {second}")]
    DuplicateId { id: String, first: usize, second: usize },
    #[error("dataset has no usable rows ({rejected} rejected)")]
    Empty { rejected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Format, IngestError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        match ext.as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            other => Err(IngestError::Format(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub text_col: String,
    /// Row index (0-based) is the id when unset.
    pub id_col: Option<String>,
}

impl IngestOptions {
    pub fn new(text_col: impl Into<String>) -> Self {
        IngestOptions { text_col: text_col.into(), id_col: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 0-based data row (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    #[serde(skip)]
    pub documents: Vec<Document>,
    pub accepted: usize,
    pub rejected: Vec<RejectedRow>,
    pub columns: IndexMap<String, MetaKind>,
}

/// One parsed row before typing: cells keyed by column.
type RawRow = IndexMap<String, Value>;

pub fn ingest_path(path: &Path, opts: &IngestOptions) -> Result<IngestReport, IngestError> {
    let format = Format::from_path(path)?;
    let file = std::fs::File::open(path).map_err(|source| IngestError::Read { path: path.display().to_string(), source })?;
    ingest_reader(file, format, opts)
}

pub fn ingest_reader(reader: impl Read, format: Format, opts: &IngestOptions) -> Result<IngestReport, IngestError> {
    let (columns, rows) = match format {
        Format::Csv => read_csv(reader)?,
        Format::Jsonl => read_jsonl(reader)?,
    };
    for name in std::iter::once(&opts.text_col).chain(opts.id_col.as_ref()) {
        if !columns.contains(name) {
            return Err(IngestError::MissingColumn { name: name.clone(), available: columns.clone() });
        }
    }
    build(columns, rows, format, opts)
}

fn read_csv(reader: impl Read) -> Result<(Vec<String>, Vec<RawRow>), IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| IngestError::Malformed { format: "CSV", row: 0, detail: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::Malformed { format: "CSV", row: i, detail: e.to_string() })?;
        rows.push(headers.iter().cloned().zip(rec.iter().map(|c| Value::String(c.to_string()))).collect());
    }
    Ok((headers, rows))
}

fn read_jsonl(reader: impl Read) -> Result<(Vec<String>, Vec<RawRow>), IngestError> {
    let mut columns: IndexMap<String, ()> = IndexMap::new();
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| IngestError::Malformed { format: "JSON-lines", row: i, detail: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line)
            .map_err(|e| IngestError::Malformed { format: "JSON-lines", row: rows.len(), detail: e.to_string() })?;
        let Value::Object(obj) = v else {
            return Err(IngestError::Malformed { format: "JSON-lines", row: rows.len(), detail: "line is not a JSON object".into() });
        };
        for k in obj.keys() {
            columns.insert(k.clone(), ());
        }
        rows.push(obj.into_iter().collect());
    }
    Ok((columns.into_keys().collect(), rows))
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn infer_text(values: &[&str]) -> MetaKind {
    if values.is_empty() {
        return MetaKind::Text;
    }
    if values.iter().all(|v| v.eq_ignore_ascii_case("true") || v.eq_ignore_ascii_case("false")) {
        MetaKind::Bool
    } else if values.iter().all(|v| v.trim().parse::<f64>().is_ok_and(f64::is_finite)) {
        MetaKind::Number
    } else {
        MetaKind::Text
    }
}

fn build(columns: Vec<String>, rows: Vec<RawRow>, format: Format, opts: &IngestOptions) -> Result<IngestReport, IngestError> {
    let meta_cols: Vec<&String> =
        columns.iter().filter(|c| **c != opts.text_col && Some(*c) != opts.id_col.as_ref()).collect();

    let mut rejected = Vec::new();
    let mut keep: Vec<(usize, &RawRow)> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let text = row.get(&opts.text_col).and_then(scalar_string).unwrap_or_default();
        if text.trim().is_empty() {
            rejected.push(RejectedRow { row: i, reason: format!("empty text in column {:?}", opts.text_col) });
            continue;
        }
        if let Some(c) = meta_cols.iter().find(|c| matches!(row.get(**c), Some(Value::Array(_) | Value::Object(_)))) {
            rejected.push(RejectedRow { row: i, reason: format!("nested value in column {c:?}") });
            continue;
        }
        if let Some(idc) = &opts.id_col {
            if row.get(idc).and_then(scalar_string).is_none_or(|s| s.trim().is_empty()) {
                rejected.push(RejectedRow { row: i, reason: format!("missing id in column {idc:?}") });
                continue;
            }
        }
        keep.push((i, row));
    }

    // Column kinds: JSON types when consistent, inferred from text for CSV.
    let mut kinds: IndexMap<String, MetaKind> = IndexMap::new();
    for c in &meta_cols {
        let present: Vec<&Value> = keep.iter().filter_map(|(_, r)| r.get(*c)).filter(|v| !is_blank(v)).collect();
        let kind = match format {
            Format::Csv => infer_text(&present.iter().filter_map(|v| v.as_str()).collect::<Vec<_>>()),
            Format::Jsonl => {
                let mut ks = present.iter().map(|v| match v {
                    Value::Bool(_) => MetaKind::Bool,
                    Value::Number(_) => MetaKind::Number,
                    _ => MetaKind::Text,
                });
                match ks.next() {
                    Some(first) if ks.all(|k| k == first) => first,
                    _ => MetaKind::Text,
                }
            }
        };
        kinds.insert((*c).clone(), kind);
    }

    let mut seen: IndexMap<String, usize> = IndexMap::new();
    let mut documents = Vec::with_capacity(keep.len());
    for (i, row) in keep {
        let id = match &opts.id_col {
            Some(c) => scalar_string(&row[c]).unwrap_or_default().trim().to_string(),
            None => i.to_string(),
        };
        if let Some(first) = seen.insert(id.clone(), i) {
            return Err(IngestError::DuplicateId { id, first, second: i });
        }
        let mut metadata = IndexMap::new();
        for (c, kind) in &kinds {
            let Some(v) = row.get(c).filter(|v| !is_blank(v)) else { continue };
            metadata.insert(c.clone(), typed(v, *kind));
        }
        let text = scalar_string(&row[&opts.text_col]).unwrap_or_default();
        documents.push(Document { id, text, metadata });
    }
    if documents.is_empty() {
        return Err(IngestError::Empty { rejected: rejected.len() });
    }
    Ok(IngestReport { accepted: documents.len(), documents, rejected, columns: kinds })
}

fn is_blank(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::String(s) => s.trim().is_empty(),
        _ => false,
    }
}

fn typed(v: &Value, kind: MetaKind) -> MetaValue {
    match (kind, v) {
        (MetaKind::Bool, Value::Bool(b)) => MetaValue::Bool(*b),
        (MetaKind::Bool, Value::String(s)) => MetaValue::Bool(s.eq_ignore_ascii_case("true")),
        (MetaKind::Number, Value::Number(n)) => MetaValue::Number(n.as_f64().unwrap_or(f64::NAN)),
        (MetaKind::Number, Value::String(s)) => MetaValue::Number(s.trim().parse().unwrap_or(f64::NAN)),
        (_, other) => MetaValue::Text(scalar_string(other).unwrap_or_default()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(src: &str, opts: &IngestOptions) -> Result<IngestReport, IngestError> {
        ingest_reader(src.as_bytes(), Format::Csv, opts)
    }

    #[test]
    fn csv_types_are_inferred() {
        let r = csv("text,score,party,flag\nhello,0.5,D,true\nworld,2,R,false\n", &IngestOptions::new("text")).unwrap();
        assert_eq!(r.accepted, 2);
        assert_eq!(r.documents[0].id, "0");
        assert_eq!(r.columns["score"], MetaKind::Number);
        assert_eq!(r.columns["party"], MetaKind::Text);
        assert_eq!(r.columns["flag"], MetaKind::Bool);
        assert_eq!(r.documents[1].metadata["score"], MetaValue::Number(2.0));
    }

    #[test]
    fn missing_column_lists_available() {
        let err = csv("text,a\nx,1\n", &IngestOptions::new("body")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("body") && msg.contains("text, a"), "{msg}");
    }

    #[test]
    fn empty_text_row_rejected_others_kept() {
        let r = csv("text,a\nx,1\n  ,2\ny,3\n", &IngestOptions::new("text")).unwrap();
        assert_eq!(r.accepted, 2);
        assert_eq!(r.rejected, vec![RejectedRow { row: 1, reason: "empty text in column \"text\"".into() }]);
        assert_eq!(r.documents[1].id, "2");
    }

    #[test]
    fn duplicate_ids_fail() {
        let opts = IngestOptions { text_col: "text".into(), id_col: Some("id".into()) };
        assert!(matches!(csv("id,text\na,x\na,y\n", &opts), Err(IngestError::DuplicateId { .. })));
    }

    #[test]
    fn empty_dataset_fails() {
        assert!(matches!(csv("text\n", &IngestOptions::new("text")), Err(IngestError::Empty { .. })));
    }

    #[test]
    fn jsonl_matches_csv() {
        let opts = IngestOptions { text_col: "text".into(), id_col: Some("id".into()) };
        let j = ingest_reader(
            "{\"id\":\"a\",\"text\":\"hello\",\"score\":0.5,\"flag\":true}\n\n{\"id\":\"b\",\"text\":\"world\",\"score\":2,\"flag\":false}\n"
                .as_bytes(),
            Format::Jsonl,
            &opts,
        )
        .unwrap();
        let c = csv("id,text,score,flag\na,hello,0.5,true\nb,world,2,false\n", &opts).unwrap();
        assert_eq!(j.documents, c.documents);
    }

    #[test]
    fn nested_values_rejected() {
        let r = ingest_reader(
            "{\"text\":\"a\",\"m\":{\"x\":1}}\n{\"text\":\"b\",\"m\":3}\n".as_bytes(),
            Format::Jsonl,
            &IngestOptions::new("text"),
        )
        .unwrap();
        assert_eq!(r.accepted, 1);
        assert!(r.rejected[0].reason.contains("nested"));
    }
}
