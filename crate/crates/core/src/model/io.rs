use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::Session;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum SessionIoError {
    #[error("session decode error at byte {offset} (line {line}, column {column}), field `{field}`: {message}")]
    Decode { offset: usize, line: usize, column: usize, field: String, message: String },

    #[error("session schema version mismatch: file has {found:?}, this build reads {expected:?}")]
    VersionMismatch { found: String, expected: String },

    #[error("session encode error: {0}")]
    Encode(#[from] serde_json::Error),

    #[error("session file {path}: {source}")]
    File { path: String, source: std::io::Error },
}

/// Serializes `session` as pretty-printed UTF-8 JSON into `out`.
pub fn save_session<W: Write>(session: &Session, mut out: W) -> Result<(), SessionIoError> {
    serde_json::to_writer_pretty(&mut out, session)?;
    out.write_all(b"\n").map_err(serde_json::Error::io)?;
    Ok(())
}

/// Copy of `session` with wall-clock fields (creation time, trace timestamps,
/// call durations) zeroed, for comparing runs.
pub fn canonical_session(session: &Session) -> Session {
    let mut s = session.clone();
    let epoch = chrono::DateTime::<chrono::Utc>::UNIX_EPOCH;
    s.created_at = epoch;
    for u in &mut s.usage {
        u.wall_time_ms = 0;
    }
    for e in &mut s.trace {
        e.timestamp = epoch;
        if let super::TraceEvent::LlmCall(c) = &mut e.event {
            if let Some(u) = c.usage.as_mut() {
                u.wall_time_ms = 0;
            }
        }
    }
    s
}

pub fn canonical_session_json(session: &Session) -> String {
    let mut buf = Vec::new();
    save_session(&canonical_session(session), &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

pub fn load_session(bytes: &[u8]) -> Result<Session, SessionIoError> {
    #[derive(Deserialize)]
    struct Header {
        schema_version: Option<String>,
    }
    // Version is checked first so that a newer file fails with an explicit
    // mismatch rather than a confusing field error.
    if let Ok(h) = serde_json::from_slice::<Header>(bytes) {
        match h.schema_version {
            Some(v) if v != SCHEMA_VERSION => {
                return Err(SessionIoError::VersionMismatch { found: v, expected: SCHEMA_VERSION.into() })
            }
            _ => {}
        }
    }
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize::<_, Session>(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        SessionIoError::Decode {
            offset: byte_offset(bytes, inner.line(), inner.column()),
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })
}

pub fn save_session_file(session: &Session, path: &Path) -> Result<(), SessionIoError> {
    let file_err = |source| SessionIoError::File { path: path.display().to_string(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(file_err)?;
    }
    // write to a sibling then rename, so readers never see a half-written file
    let tmp = path.with_extension("json.tmp");
    let mut buf = Vec::new();
    save_session(session, &mut buf)?;
    fs::write(&tmp, &buf).map_err(file_err)?;
    fs::rename(&tmp, path).map_err(file_err)
}

pub fn load_session_file(path: &Path) -> Result<Session, SessionIoError> {
    let bytes = fs::read(path).map_err(|source| SessionIoError::File { path: path.display().to_string(), source })?;
    load_session(&bytes)
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = bytes
        .split(|b| *b == b'\n')
        .take(line - 1)
        .map(|l| l.len() + 1)
        .sum();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Document, SessionConfig};

    fn tiny() -> Session {
        Session::new(
            "s1",
            vec![Document { id: "d1".into(), text: "hello world".into(), metadata: Default::default() }],
            SessionConfig::default(),
        )
    }

    #[test]
    fn roundtrip_preserves_version_tag() {
        let s = tiny();
        let mut buf = Vec::new();
        save_session(&s, &mut buf).unwrap();
        let back = load_session(&buf).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.schema_version, SCHEMA_VERSION);
    }

    #[test]
    fn truncated_stream_is_a_decode_error() {
        let mut buf = Vec::new();
        save_session(&tiny(), &mut buf).unwrap();
        let cut = &buf[..buf.len() / 2];
        match load_session(cut) {
            Err(SessionIoError::Decode { offset, .. }) => assert!(offset <= cut.len()),
            other => panic!("expected decode error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_field_type_names_the_field() {
        let mut v: serde_json::Value = serde_json::to_value(tiny()).unwrap();
        v["documents"][0]["text"] = serde_json::json!(42);
        let bytes = serde_json::to_vec(&v).unwrap();
        match load_session(&bytes) {
            Err(SessionIoError::Decode { field, .. }) => assert_eq!(field, "documents[0].text"),
            other => panic!("expected decode error, got {other:?}"),
        }
    }

    #[test]
    fn future_version_is_rejected_explicitly() {
        let mut v: serde_json::Value = serde_json::to_value(tiny()).unwrap();
        v["schema_version"] = serde_json::json!("2");
        let bytes = serde_json::to_vec(&v).unwrap();
        assert!(matches!(load_session(&bytes), Err(SessionIoError::VersionMismatch { .. })));
    }

    #[test]
    fn byte_offset_counts_lines() {
        let b = b"ab\ncd\nef";
        assert_eq!(byte_offset(b, 1, 1), 0);
        assert_eq!(byte_offset(b, 2, 2), 4);
        assert_eq!(byte_offset(b, 3, 1), 6);
    }
}
