//! Bulk ingest: a header line, then canonical record lines and/or shorthand
//! `add`/`link` directives. Records commit one at a time; bad lines are
//! reported with their line numbers and the rest continue.

use std::path::Path;

use clap::Parser;

use bigsur_core::model::{Record, RecordKind};
use bigsur_core::{Error, Result};

use crate::app::App;
use crate::cli::{Cli, Command};

const HEADER: &str = "BIGSUR-INGEST v1";

#[derive(Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub accepted: u64,
    /// (line number, error code, message)
    pub rejected: Vec<(usize, String, String)>,
}

pub fn ingest_file(app: &App, path: &Path) -> Result<IngestReport> {
    let text = std::fs::read_to_string(path)?;
    ingest_text(app, &text)
}

pub fn ingest_text(app: &App, text: &str) -> Result<IngestReport> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim_end() == HEADER => {}
        Some((_, first)) => {
            return Err(Error::MalformedHeader(format!(
                "expected `{HEADER}`, found `{first}`"
            )))
        }
        None => return Err(Error::MalformedHeader("empty file".to_string())),
    }

    let mut report = IngestReport::default();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let outcome = if line.starts_with('{') {
            ingest_record_line(app, line)
        } else {
            ingest_directive(app, line)
        };
        match outcome {
            Ok(()) => report.accepted += 1,
            Err(e) => report
                .rejected
                .push((line_no, e.code().to_string(), e.to_string())),
        }
    }
    Ok(report)
}

/// `{"kind":"type_node","body":{..}}`: a full canonical record.
fn ingest_record_line(app: &App, line: &str) -> Result<()> {
    let value: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| Error::MalformedBundle(format!("bad record line: {e}")))?;
    let kind_token = value
        .get("kind")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::MalformedBundle("record line missing kind".to_string()))?;
    let kind = RecordKind::parse(kind_token)?;
    let body = value
        .get("body")
        .cloned()
        .ok_or_else(|| Error::MalformedBundle("record line missing body".to_string()))?;
    let record = Record::from_body_value(kind, body)?;
    app.catalog()?.register_record(record)?;
    Ok(())
}

/// An `add ...` or `link ...` line using the exact CLI argument grammar.
fn ingest_directive(app: &App, line: &str) -> Result<()> {
    let tokens = split_directive(line)?;
    if !matches!(tokens.first().map(String::as_str), Some("add") | Some("link")) {
        return Err(Error::MalformedBundle(format!(
            "only add/link directives are allowed, found `{}`",
            tokens.first().cloned().unwrap_or_default()
        )));
    }
    let mut argv = vec!["bigsur".to_string()];
    argv.extend(tokens);
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| Error::MalformedBundle(format!("bad directive: {}", concise(&e))))?;
    match cli.command {
        cmd @ (Command::Add { .. } | Command::Link { .. }) => {
            crate::cli::execute(app, cmd)?;
            Ok(())
        }
        _ => Err(Error::MalformedBundle(
            "only add/link directives are allowed".to_string(),
        )),
    }
}

fn concise(e: &clap::Error) -> String {
    e.to_string().lines().next().unwrap_or_default().to_string()
}

/// Split a directive line on whitespace, honoring double quotes.
fn split_directive(line: &str) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut any = false;
    for c in line.chars() {
        match c {
            '"' => {
                in_quotes = !in_quotes;
                any = true;
            }
            c if c.is_whitespace() && !in_quotes => {
                if any {
                    tokens.push(std::mem::take(&mut current));
                    any = false;
                }
            }
            c => {
                current.push(c);
                any = true;
            }
        }
    }
    if in_quotes {
        return Err(Error::MalformedBundle("unterminated quote".to_string()));
    }
    if any {
        tokens.push(current);
    }
    Ok(tokens)
}
