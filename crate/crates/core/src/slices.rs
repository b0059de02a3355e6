//! Slice predicates: boolean filters over metadata columns and concept scores.
//!
//! ```text
//! expr       := and_expr ("or" and_expr)*
//! and_expr   := unary ("and" unary)*
//! unary      := "not" unary | "(" expr ")" | comparison
//! comparison := operand op literal
//! operand    := IDENT | column("name") | concept("name")
//! op         := < | <= | > | >= | == | !=
//! literal    := NUMBER | "string" | true | false
//! ```
//!
//! A concept operand evaluates to the document's score for that concept.
//! Comparisons against a missing value are false.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{MetaKind, MetaValue, Session};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredicateError {
    #[error("parse error at {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unknown column {name:?}{}", suggest(.suggestions))]
    UnknownColumn { name: String, suggestions: Vec<String> },
    #[error("unknown concept {name:?}{}", suggest(.suggestions))]
    UnknownConcept { name: String, suggestions: Vec<String> },
    #[error("type error at {position}: {message}")]
    Type { position: usize, message: String },
}

fn suggest(s: &[String]) -> String {
    if s.is_empty() {
        String::new()
    } else {
        format!("; did you mean {}?", s.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "))
    }
}

/// Names close to `name`, best first.
pub fn near_misses<'a>(name: &str, candidates: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut scored: Vec<(f64, &str)> = candidates
        .into_iter()
        .map(|c| (strsim::normalized_damerau_levenshtein(&name.to_lowercase(), &c.to_lowercase()), c))
        .filter(|(s, _)| *s >= 0.6)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.dedup_by(|a, b| a.1 == b.1);
    scored.into_iter().map(|(_, c)| c.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    fn as_str(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Operand {
    Column(String),
    Concept(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Literal {
    Number(f64),
    Text(String),
    Bool(bool),
}

impl Literal {
    fn kind(&self) -> MetaKind {
        match self {
            Literal::Number(_) => MetaKind::Number,
            Literal::Text(_) => MetaKind::Text,
            Literal::Bool(_) => MetaKind::Bool,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Expr {
    Cmp { operand: Operand, op: CmpOp, literal: Literal, position: usize },
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Cmp { operand, op, literal, .. } => {
                match operand {
                    Operand::Column(c) => write!(f, "column({c:?})")?,
                    Operand::Concept(c) => write!(f, "concept({c:?})")?,
                }
                write!(f, " {} ", op.as_str())?;
                match literal {
                    Literal::Number(n) => write!(f, "{n}"),
                    Literal::Text(s) => write!(f, "{s:?}"),
                    Literal::Bool(b) => write!(f, "{b}"),
                }
            }
            Expr::Not(e) => write!(f, "not ({e})"),
            Expr::And(a, b) => write!(f, "({a}) and ({b})"),
            Expr::Or(a, b) => write!(f, "({a}) or ({b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    Op(CmpOp),
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, PredicateError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |position: usize, message: String| PredicateError::Parse { position, message };
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        match c {
            '(' => {
                out.push((Tok::LParen, pos));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, pos));
                i += 1;
            }
            '<' | '>' | '=' | '!' => {
                let next = chars.get(i + 1).map(|x| x.1);
                let (op, width) = match (c, next) {
                    ('<', Some('=')) => (CmpOp::Le, 2),
                    ('<', _) => (CmpOp::Lt, 1),
                    ('>', Some('=')) => (CmpOp::Ge, 2),
                    ('>', _) => (CmpOp::Gt, 1),
                    ('=', Some('=')) => (CmpOp::Eq, 2),
                    ('!', Some('=')) => (CmpOp::Ne, 2),
                    _ => return Err(err(pos, format!("unexpected {c:?}; comparison operators are < <= > >= == !="))),
                };
                out.push((Tok::Op(op), pos));
                i += width;
            }
            '"' | '\'' => {
                let quote = c;
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err(pos, "unterminated string".into())),
                        Some((_, '\\')) => {
                            if let Some((_, e)) = chars.get(i + 1) {
                                s.push(*e);
                            }
                            i += 2;
                        }
                        Some((_, ch)) if *ch == quote => {
                            i += 1;
                            break;
                        }
                        Some((_, ch)) => {
                            s.push(*ch);
                            i += 1;
                        }
                    }
                }
                out.push((Tok::Str(s), pos));
            }
            c if c.is_ascii_digit() || c == '-' || c == '.' => {
                let start = i;
                i += 1;
                while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || matches!(chars[i].1, '.' | '+' | '-')) {
                    // Allow exponent signs only right after e/E.
                    if matches!(chars[i].1, '+' | '-') && !matches!(chars[i - 1].1, 'e' | 'E') {
                        break;
                    }
                    i += 1;
                }
                let text: String = chars[start..i].iter().map(|x| x.1).collect();
                let n: f64 = text.parse().map_err(|_| err(pos, format!("bad number {text:?}")))?;
                out.push((Tok::Num(n), pos));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_alphanumeric() || matches!(chars[i].1, '_' | '.')) {
                    i += 1;
                }
                out.push((Tok::Ident(chars[start..i].iter().map(|x| x.1).collect()), pos));
            }
            other => return Err(err(pos, format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.0)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.1)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, PredicateError> {
        Err(PredicateError::Parse { position: self.pos(), message: message.into() })
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn expr(&mut self) -> Result<Expr, PredicateError> {
        let mut left = self.and_expr()?;
        while self.keyword("or") {
            self.at += 1;
            let right = self.and_expr()?;
            left = Expr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, PredicateError> {
        let mut left = self.unary()?;
        while self.keyword("and") {
            self.at += 1;
            let right = self.unary()?;
            left = Expr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr, PredicateError> {
        if self.keyword("not") {
            self.at += 1;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        if self.peek() == Some(&Tok::LParen) {
            self.at += 1;
            let e = self.expr()?;
            if self.peek() != Some(&Tok::RParen) {
                return self.fail("expected ')'");
            }
            self.at += 1;
            return Ok(e);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, PredicateError> {
        let position = self.pos();
        let operand = match self.peek().cloned() {
            Some(Tok::Ident(name)) => {
                self.at += 1;
                let lower = name.to_ascii_lowercase();
                if (lower == "concept" || lower == "column") && self.peek() == Some(&Tok::LParen) {
                    self.at += 1;
                    let Some(Tok::Str(arg)) = self.peek().cloned() else {
                        return self.fail(format!("{lower}(...) takes a quoted name"));
                    };
                    self.at += 1;
                    if self.peek() != Some(&Tok::RParen) {
                        return self.fail("expected ')'");
                    }
                    self.at += 1;
                    if lower == "concept" {
                        Operand::Concept(arg)
                    } else {
                        Operand::Column(arg)
                    }
                } else if matches!(lower.as_str(), "and" | "or" | "not" | "true" | "false") {
                    self.at -= 1;
                    return self.fail(format!("expected a column or concept, found {name:?}"));
                } else {
                    Operand::Column(name)
                }
            }
            Some(_) => return self.fail("expected a column or concept"),
            None => return self.fail("unexpected end of predicate"),
        };
        let Some(Tok::Op(op)) = self.peek().cloned() else {
            return self.fail("expected a comparison operator");
        };
        self.at += 1;
        let literal = match self.peek().cloned() {
            Some(Tok::Num(n)) => Literal::Number(n),
            Some(Tok::Str(s)) => Literal::Text(s),
            Some(Tok::Ident(s)) if s.eq_ignore_ascii_case("true") => Literal::Bool(true),
            Some(Tok::Ident(s)) if s.eq_ignore_ascii_case("false") => Literal::Bool(false),
            _ => return self.fail("expected a number, quoted string, true or false"),
        };
        self.at += 1;
        Ok(Expr::Cmp { operand, op, literal, position })
    }
}

pub fn parse(src: &str) -> Result<Expr, PredicateError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, at: 0, end: src.len() };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return p.fail("unexpected trailing input");
    }
    Ok(e)
}

/// Type of every metadata column present in the session, in first-seen order.
pub fn column_kinds(session: &Session) -> indexmap::IndexMap<String, MetaKind> {
    let mut out = indexmap::IndexMap::new();
    for d in &session.documents {
        for (k, v) in &d.metadata {
            out.entry(k.clone()).or_insert(v.kind());
        }
    }
    out
}

/// Finds a concept by name (case-insensitive, active first) or by id.
pub fn resolve_concept<'a>(session: &'a Session, name: &str) -> Option<&'a crate::model::Concept> {
    let by_name = |active: bool| {
        session.concepts.iter().find(|c| c.active == active && c.name.eq_ignore_ascii_case(name.trim()))
    };
    by_name(true).or_else(|| by_name(false)).or_else(|| session.concept(name))
}

fn check(e: &Expr, session: &Session, kinds: &indexmap::IndexMap<String, MetaKind>) -> Result<(), PredicateError> {
    match e {
        Expr::Not(x) => check(x, session, kinds),
        Expr::And(a, b) | Expr::Or(a, b) => {
            check(a, session, kinds)?;
            check(b, session, kinds)
        }
        Expr::Cmp { operand, op, literal, position } => {
            let kind = match operand {
                Operand::Column(name) => *kinds.get(name).ok_or_else(|| PredicateError::UnknownColumn {
                    name: name.clone(),
                    suggestions: near_misses(name, kinds.keys().map(String::as_str)),
                })?,
                Operand::Concept(name) => {
                    resolve_concept(session, name).ok_or_else(|| PredicateError::UnknownConcept {
                        name: name.clone(),
                        suggestions: near_misses(name, session.concepts.iter().map(|c| c.name.as_str())),
                    })?;
                    MetaKind::Number
                }
            };
            if kind != literal.kind() {
                return Err(PredicateError::Type {
                    position: *position,
                    message: format!("cannot compare {kind:?} value with {:?} literal", literal.kind()).to_lowercase(),
                });
            }
            if kind == MetaKind::Bool && op.is_ordering() {
                return Err(PredicateError::Type {
                    position: *position,
                    message: format!("operator {} is not defined for booleans", op.as_str()),
                });
            }
            Ok(())
        }
    }
}

/// Parses and type-checks a predicate against the session.
pub fn compile(src: &str, session: &Session) -> Result<Expr, PredicateError> {
    let e = parse(src)?;
    check(&e, session, &column_kinds(session))?;
    Ok(e)
}

fn compare(value: &MetaValue, op: CmpOp, lit: &Literal) -> bool {
    match (value, lit) {
        (MetaValue::Number(a), Literal::Number(b)) => a.partial_cmp(b).is_some_and(|o| op.holds(o)),
        (MetaValue::Text(a), Literal::Text(b)) => op.holds(a.as_str().cmp(b.as_str())),
        (MetaValue::Bool(a), Literal::Bool(b)) => op.holds(a.cmp(b)),
        _ => false,
    }
}

fn eval_doc(e: &Expr, session: &Session, doc_index: usize) -> bool {
    match e {
        Expr::Not(x) => !eval_doc(x, session, doc_index),
        Expr::And(a, b) => eval_doc(a, session, doc_index) && eval_doc(b, session, doc_index),
        Expr::Or(a, b) => eval_doc(a, session, doc_index) || eval_doc(b, session, doc_index),
        Expr::Cmp { operand, op, literal, .. } => {
            let doc = &session.documents[doc_index];
            let value = match operand {
                Operand::Column(c) => doc.metadata.get(c).cloned(),
                Operand::Concept(name) => resolve_concept(session, name)
                    .and_then(|c| session.matrix.column(&c.id))
                    .and_then(|col| col.iter().find(|x| x.doc_id == doc.id))
                    .map(|x| MetaValue::Number(x.score)),
            };
            value.is_some_and(|v| compare(&v, *op, literal))
        }
    }
}

/// One flag per document, in session document order.
pub fn evaluate(e: &Expr, session: &Session) -> Vec<bool> {
    (0..session.documents.len()).map(|i| eval_doc(e, session, i)).collect()
}

/// Ids of the documents a predicate selects.
pub fn select(src: &str, session: &Session) -> Result<Vec<String>, PredicateError> {
    let e = compile(src, session)?;
    Ok(evaluate(&e, session)
        .into_iter()
        .zip(&session.documents)
        .filter(|(keep, _)| *keep)
        .map(|(_, d)| d.id.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Answer, Concept, Document, ScoreEntry, SessionConfig, TraceEvent};
    use indexmap::IndexMap;

    fn session() -> Session {
        let docs = (0..6)
            .map(|i| {
                let mut metadata = IndexMap::new();
                metadata.insert("toxicity".to_string(), MetaValue::Number(i as f64 * 0.1));
                metadata.insert("party".to_string(), MetaValue::Text(if i % 2 == 0 { "D" } else { "R" }.into()));
                metadata.insert("flagged".to_string(), MetaValue::Bool(i < 2));
                Document { id: format!("d{i}"), text: format!("doc {i}"), metadata }
            })
            .collect();
        let mut s = Session::new("s", docs, SessionConfig::default());
        let c = Concept::synthesized("c1", "Advocacy", "Does the text advocate for a policy?", 0);
        s.record(TraceEvent::ConceptsAdded { concepts: vec![c] });
        let entries = (0..6)
            .map(|i| {
                let a = if i < 3 { Answer::A } else { Answer::E };
                ScoreEntry::new(&format!("d{i}"), "c1", a, String::new(), 1.0)
            })
            .collect();
        s.record(TraceEvent::ScoresWritten { concept_id: "c1".into(), entries });
        s
    }

    #[test]
    fn numeric_comparison() {
        assert_eq!(select("toxicity < 0.25", &session()).unwrap(), vec!["d0", "d1", "d2"]);
    }

    #[test]
    fn concept_conjunction() {
        let got = select(r#"concept("Advocacy") == 1 and party == "D""#, &session()).unwrap();
        assert_eq!(got, vec!["d0", "d2"]);
    }

    #[test]
    fn typo_lists_near_misses() {
        let err = select("toxicty < 0.25", &session()).unwrap_err();
        match &err {
            PredicateError::UnknownColumn { suggestions, .. } => assert_eq!(suggestions, &vec!["toxicity".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("toxicity"));
    }

    #[test]
    fn parse_error_carries_position() {
        let err = parse("toxicity < ").unwrap_err();
        assert_eq!(err, PredicateError::Parse { position: 11, message: "expected a number, quoted string, true or false".into() });
        assert!(matches!(parse("a == 1 )"), Err(PredicateError::Parse { position: 7, .. })));
        assert!(matches!(parse("a =< 1"), Err(PredicateError::Parse { position: 2, .. })));
    }

    #[test]
    fn type_errors() {
        assert!(matches!(compile("party < 3", &session()), Err(PredicateError::Type { .. })));
        assert!(matches!(compile("flagged > true", &session()), Err(PredicateError::Type { .. })));
        assert!(matches!(compile(r#"concept("Advocasy") > 0.5"#, &session()), Err(PredicateError::UnknownConcept { .. })));
    }

    #[test]
    fn connectives_and_precedence() {
        let s = session();
        assert_eq!(select("not flagged == true", &s).unwrap(), vec!["d2", "d3", "d4", "d5"]);
        assert_eq!(select("flagged == true or toxicity >= 0.5 and party == \"R\"", &s).unwrap(), vec!["d0", "d1", "d5"]);
        assert_eq!(select("(flagged == true or toxicity >= 0.5) and party == \"R\"", &s).unwrap(), vec!["d1", "d5"]);
        assert_eq!(select("column(\"party\") != 'D'", &s).unwrap(), vec!["d1", "d3", "d5"]);
    }
}
