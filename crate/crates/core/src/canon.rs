//! Canonical text helpers shared by snapshots, bundles, and golden tests.

use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::model::{EntityId, Record, RecordKind};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One record revision as a single JSON line with lexicographic keys:
/// `{"body":{..},"id":"site/local","kind":"..","rev":N}`.
pub fn record_line(kind: RecordKind, id: &EntityId, rev: u64, body: &str) -> String {
    let body_value: serde_json::Value =
        serde_json::from_str(body).expect("stored bodies are valid canonical JSON");
    serde_json::json!({
        "body": body_value,
        "id": id.to_string(),
        "kind": kind.as_str(),
        "rev": rev,
    })
    .to_string()
}

pub struct ParsedLine {
    pub kind: RecordKind,
    pub id: EntityId,
    pub rev: u64,
    pub body: String,
    pub record: Record,
}

pub fn parse_record_line(line: &str) -> Result<ParsedLine, Error> {
    let value: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| Error::MalformedBundle(format!("bad record line: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::MalformedBundle("record line is not an object".to_string()))?;
    let kind_token = obj
        .get("kind")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::MalformedBundle("record line missing kind".to_string()))?;
    let kind = RecordKind::parse(kind_token)
        .map_err(|_| Error::MalformedBundle(format!("unknown kind `{kind_token}`")))?;
    let id: EntityId = obj
        .get("id")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::MalformedBundle("record line missing id".to_string()))?
        .parse()
        .map_err(|e: Error| Error::MalformedBundle(e.to_string()))?;
    let rev = obj
        .get("rev")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::MalformedBundle("record line missing rev".to_string()))?;
    if rev == 0 {
        return Err(Error::MalformedBundle("rev must be >= 1".to_string()));
    }
    let body_value = obj
        .get("body")
        .cloned()
        .ok_or_else(|| Error::MalformedBundle("record line missing body".to_string()))?;
    let body = body_value.to_string();
    let record = Record::from_body_value(kind, body_value)
        .map_err(|e| Error::MalformedBundle(format!("bad {kind} body: {e}")))?;
    if record.id() != &id {
        return Err(Error::MalformedBundle(format!(
            "envelope id {id} does not match body id {}",
            record.id()
        )));
    }
    Ok(ParsedLine {
        kind,
        id,
        rev,
        body,
        record,
    })
}

/// Quote a string for the minimal-ANSI SQL export: single quotes doubled.
pub fn sql_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        if c == '\'' {
            out.push('\'');
        }
        out.push(c);
    }
    out.push('\'');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_line_key_order() {
        let id: EntityId = "berkeley/t-1".parse().unwrap();
        let line = record_line(RecordKind::TypeNode, &id, 1, r#"{"z":1,"a":2}"#);
        assert!(line.starts_with(r#"{"body":{"a":2,"z":1},"id":"berkeley/t-1","kind":"type_node","rev":1}"#));
    }

    #[test]
    fn sql_quoting() {
        assert_eq!(sql_quote("it's"), "'it''s'");
        assert_eq!(sql_quote(""), "''");
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            sha256_hex(b"hello\n"),
            "5891b5b522d5df086d0ff0b110fbd9d21bb4fc7163af34d08286a2e846f6be03"
        );
    }
}
