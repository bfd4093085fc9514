//! Durable, transactional record storage. Every write appends a revision;
//! superseded revisions are retained forever. The on-disk form is an
//! append-only log replayed at open, which also yields the global sequence
//! numbers federation cursors are built on.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use crate::canon::{parse_record_line, sha256_hex, sql_quote};
use crate::error::{Error, Result};
use crate::model::{now_rfc3339, EntityId, Record, RecordKind, Revision, validate_record};

const LOG_HEADER: &str = "BIGSUR-LOG v1";
const SNAPSHOT_HEADER: &str = "BIGSUR-SNAPSHOT v1";

pub type Clock = Arc<dyn Fn() -> String + Send + Sync>;

/// One stored revision of a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredRecord {
    pub id: EntityId,
    pub kind: RecordKind,
    pub revision: Revision,
    /// Canonical record serialization (compact JSON, lexicographic keys).
    pub body: String,
    pub superseded: bool,
    /// Global store sequence, assigned at write time. Monotone.
    pub seq: u64,
    pub stored_at: String,
}

impl StoredRecord {
    pub fn record(&self) -> Result<Record> {
        Record::from_canonical_json(self.kind, &self.body)
    }
}

/// Revisions of one record arriving from an import: (rev, canonical body).
pub type MergeGroup = (RecordKind, EntityId, Vec<(u64, String)>);

/// Outcome of merging one remote revision line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergeOutcome {
    Added,
    Updated,
    Skipped,
    Rejected(String),
}

#[derive(Default)]
struct StoreState {
    records: BTreeMap<(RecordKind, EntityId), Vec<StoredRecord>>,
    next_seq: u64,
}

impl StoreState {
    fn new() -> Self {
        StoreState {
            records: BTreeMap::new(),
            next_seq: 1,
        }
    }
}

/// The record store. One per site; `site` is the local origin used for write
/// authority checks.
pub struct Store {
    site: String,
    state: RwLock<StoreState>,
    log: Mutex<Option<File>>,
    log_path: Option<PathBuf>,
    clock: Clock,
}

impl Store {
    /// Volatile store, used by tests and the two-site harness.
    pub fn in_memory(site: impl Into<String>) -> Store {
        Store {
            site: site.into(),
            state: RwLock::new(StoreState::new()),
            log: Mutex::new(None),
            log_path: None,
            clock: Arc::new(now_rfc3339),
        }
    }

    /// Open (or create) the store log under `dir` and replay it.
    pub fn open(dir: &Path, site: impl Into<String>) -> Result<Store> {
        let path = dir.join("store.log");
        let mut state = StoreState::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let mut lines = reader.lines();
            match lines.next() {
                Some(Ok(h)) if h == LOG_HEADER => {}
                _ => return Err(Error::CorruptSnapshot("store log header missing".into())),
            }
            for line in lines {
                let line = line?;
                if line.is_empty() {
                    continue;
                }
                let stored = parse_stored_line(&line)?;
                state.next_seq = state.next_seq.max(stored.seq + 1);
                state
                    .records
                    .entry((stored.kind, stored.id.clone()))
                    .or_default()
                    .push(stored);
            }
            for revisions in state.records.values_mut() {
                revisions.sort_by_key(|r| r.revision.rev);
                mark_superseded(revisions);
            }
        } else {
            let mut f = File::create(&path)?;
            writeln!(f, "{LOG_HEADER}")?;
        }
        let file = OpenOptions::new().append(true).open(&path)?;
        Ok(Store {
            site: site.into(),
            state: RwLock::new(state),
            log: Mutex::new(Some(file)),
            log_path: Some(path),
            clock: Arc::new(now_rfc3339),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Store {
        self.clock = clock;
        self
    }

    pub fn site(&self) -> &str {
        &self.site
    }

    /// Persist a new revision. `expected_rev` enables optimistic concurrency:
    /// it must equal the current max revision (0 for a new record).
    pub fn put(&self, record: &Record, expected_rev: Option<u64>) -> Result<Revision> {
        self.put_batch(std::slice::from_ref(record), &[expected_rev])
            .map(|mut revs| revs.pop().expect("one revision per record"))
    }

    /// Persist several records in one atomic step. All validation and
    /// revision checks happen before anything is written; readers never
    /// observe a partial batch.
    pub fn put_batch(&self, records: &[Record], expected_revs: &[Option<u64>]) -> Result<Vec<Revision>> {
        assert_eq!(records.len(), expected_revs.len());
        for record in records {
            let violations = validate_record(record);
            if !violations.is_empty() {
                return Err(Error::ValidationFailed {
                    id: record.id().to_string(),
                    violations,
                });
            }
            if record.id().site() != self.site {
                return Err(Error::NotOriginSite {
                    id: record.id().to_string(),
                    origin: record.id().site().to_string(),
                    local: self.site.clone(),
                });
            }
        }

        let mut state = self.state.write().expect("store lock poisoned");
        // Check every expected_rev before mutating anything.
        for (record, expected) in records.iter().zip(expected_revs) {
            let key = (record.kind(), record.id().clone());
            let current = state.records.get(&key).map(|v| v.len() as u64).unwrap_or(0);
            if let Some(expected) = expected {
                if *expected != current {
                    return Err(Error::StaleRevision {
                        id: record.id().to_string(),
                        expected: *expected,
                        actual: current,
                    });
                }
            }
        }

        let mut out = Vec::with_capacity(records.len());
        let mut log_lines = Vec::with_capacity(records.len());
        for record in records {
            let key = (record.kind(), record.id().clone());
            let revisions = state.records.entry(key).or_default();
            let rev = revisions.len() as u64 + 1;
            if let Some(last) = revisions.last_mut() {
                last.superseded = true;
            }
            let stored = StoredRecord {
                id: record.id().clone(),
                kind: record.kind(),
                revision: Revision::new(rev, record.id().site()),
                body: record.to_canonical_json(),
                superseded: false,
                seq: state.next_seq,
                stored_at: (self.clock)(),
            };
            state.next_seq += 1;
            log_lines.push(stored_line(&stored));
            out.push(stored.revision.clone());
            state
                .records
                .get_mut(&(record.kind(), record.id().clone()))
                .expect("just inserted")
                .push(stored);
        }
        self.append_log(&log_lines)?;
        Ok(out)
    }

    /// Merge imported revisions, all groups under one write lock (imports are
    /// exclusive with writers). Within each group, lines must arrive sorted
    /// by rev. Local-origin records accept only wholly-unknown additions (the
    /// replica-restore path); nothing an import carries can change them.
    pub fn merge_remote(
        &self,
        groups: &[MergeGroup],
    ) -> Result<Vec<Vec<(u64, MergeOutcome)>>> {
        let mut state = self.state.write().expect("store lock poisoned");
        let mut log_lines = Vec::new();
        let mut results = Vec::with_capacity(groups.len());
        for (kind, id, lines) in groups {
            let key = (*kind, id.clone());
            let known_before = state.records.contains_key(&key);
            let local_origin = id.site() == self.site;
            let mut out = Vec::with_capacity(lines.len());
            for (rev, body) in lines {
                let current: u64 = state.records.get(&key).map(|v| v.len() as u64).unwrap_or(0);
                let outcome = if *rev <= current {
                    let existing = &state.records[&key][(*rev - 1) as usize];
                    if existing.body == *body {
                        MergeOutcome::Skipped
                    } else {
                        MergeOutcome::Rejected(format!("rev {rev} conflicts with stored revision"))
                    }
                } else if local_origin && known_before {
                    MergeOutcome::Rejected(format!(
                        "rev {rev} would change a record owned by this site"
                    ))
                } else if *rev != current + 1 {
                    MergeOutcome::Rejected(format!("rev {rev} leaves a gap after {current}"))
                } else {
                    let seq = state.next_seq;
                    state.next_seq += 1;
                    let stored = StoredRecord {
                        id: id.clone(),
                        kind: *kind,
                        revision: Revision::new(*rev, id.site()),
                        body: body.clone(),
                        superseded: false,
                        seq,
                        stored_at: (self.clock)(),
                    };
                    log_lines.push(stored_line(&stored));
                    let revisions = state.records.entry(key.clone()).or_default();
                    if let Some(last) = revisions.last_mut() {
                        last.superseded = true;
                    }
                    revisions.push(stored);
                    if known_before {
                        MergeOutcome::Updated
                    } else {
                        MergeOutcome::Added
                    }
                };
                out.push((*rev, outcome));
            }
            results.push(out);
        }
        self.append_log(&log_lines)?;
        Ok(results)
    }

    /// Latest revision, or an exact historical one when `rev` is given.
    pub fn get(&self, kind: RecordKind, id: &EntityId, rev: Option<u64>) -> Result<StoredRecord> {
        let state = self.state.read().expect("store lock poisoned");
        let revisions = state
            .records
            .get(&(kind, id.clone()))
            .ok_or_else(|| Error::NotFound {
                kind: kind.to_string(),
                id: id.to_string(),
            })?;
        match rev {
            None => Ok(revisions.last().expect("revision lists are non-empty").clone()),
            Some(r) => revisions
                .iter()
                .find(|s| s.revision.rev == r)
                .cloned()
                .ok_or_else(|| Error::NotFound {
                    kind: kind.to_string(),
                    id: format!("{id}@{r}"),
                }),
        }
    }

    pub fn exists(&self, kind: RecordKind, id: &EntityId) -> bool {
        let state = self.state.read().expect("store lock poisoned");
        state.records.contains_key(&(kind, id.clone()))
    }

    /// Latest revisions of one kind, ordered by id.
    pub fn scan(&self, kind: RecordKind) -> Vec<StoredRecord> {
        self.scan_where(kind, |_| true)
    }

    /// Latest revisions of one kind matching a predicate, ordered by id.
    pub fn scan_where(
        &self,
        kind: RecordKind,
        filter: impl Fn(&StoredRecord) -> bool,
    ) -> Vec<StoredRecord> {
        let state = self.state.read().expect("store lock poisoned");
        state
            .records
            .range((kind, min_id())..)
            .take_while(|((k, _), _)| *k == kind)
            .map(|(_, revisions)| revisions.last().expect("non-empty"))
            .filter(|stored| filter(stored))
            .cloned()
            .collect()
    }

    /// Latest revisions across all kinds, ordered by (kind, id).
    pub fn scan_all(&self) -> Vec<StoredRecord> {
        let state = self.state.read().expect("store lock poisoned");
        state
            .records
            .values()
            .map(|revisions| revisions.last().expect("non-empty").clone())
            .collect()
    }

    /// Every revision, ordered by (kind, id, rev).
    pub fn all_revisions(&self) -> Vec<StoredRecord> {
        let state = self.state.read().expect("store lock poisoned");
        state.records.values().flatten().cloned().collect()
    }

    /// Every revision in write order (ascending seq).
    pub fn all_revisions_by_seq(&self) -> Vec<StoredRecord> {
        let mut all = self.all_revisions();
        all.sort_by_key(|r| r.seq);
        all
    }

    pub fn max_seq(&self) -> u64 {
        let state = self.state.read().expect("store lock poisoned");
        state.next_seq - 1
    }

    /// Count of retained revisions (equals the count of successful writes).
    pub fn revision_count(&self) -> u64 {
        let state = self.state.read().expect("store lock poisoned");
        state.records.values().map(|v| v.len() as u64).sum()
    }

    /// Generate the next free local id for `kind` with the conventional
    /// prefix. Deterministic given store state.
    pub fn next_local_id(&self, kind: RecordKind) -> EntityId {
        let prefix = id_prefix(kind);
        let state = self.state.read().expect("store lock poisoned");
        let local_count = state
            .records
            .range((kind, min_id())..)
            .take_while(|((k, _), _)| *k == kind)
            .filter(|((_, id), _)| id.site() == self.site)
            .count() as u64;
        let mut n = local_count + 1;
        loop {
            let candidate = EntityId::new(&self.site, format!("{prefix}-{n}"))
                .expect("generated ids are well-formed");
            if !state.records.contains_key(&(kind, candidate.clone())) {
                return candidate;
            }
            n += 1;
        }
    }

    // ---- snapshot / restore ----

    /// Full store serialization: header, one line per revision in write
    /// order, trailing SHA-256 of all prior bytes.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = String::new();
        out.push_str(SNAPSHOT_HEADER);
        out.push('\n');
        for stored in self.all_revisions_by_seq() {
            out.push_str(&stored_line(&stored));
            out.push('\n');
        }
        let seal = sha256_hex(out.as_bytes());
        out.push_str(&seal);
        out.push('\n');
        out.into_bytes()
    }

    /// Replace store contents from `snapshot()` output.
    pub fn restore(&self, bytes: &[u8]) -> Result<()> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::CorruptSnapshot("snapshot is not UTF-8".into()))?;
        let body_end = text
            .trim_end_matches('\n')
            .rfind('\n')
            .ok_or_else(|| Error::CorruptSnapshot("snapshot too short".into()))?;
        let (body, seal_line) = text.split_at(body_end + 1);
        let expected = seal_line.trim_end();
        let computed = sha256_hex(body.as_bytes());
        if expected != computed {
            return Err(Error::CorruptSnapshot(format!(
                "checksum mismatch: stored {expected}, computed {computed}"
            )));
        }
        let mut lines = body.lines();
        match lines.next() {
            Some(h) if h == SNAPSHOT_HEADER => {}
            _ => return Err(Error::CorruptSnapshot("bad snapshot header".into())),
        }
        let mut state = StoreState::new();
        for line in lines {
            let stored = parse_stored_line(line)
                .map_err(|e| Error::CorruptSnapshot(format!("bad snapshot line: {e}")))?;
            state.next_seq = state.next_seq.max(stored.seq + 1);
            state
                .records
                .entry((stored.kind, stored.id.clone()))
                .or_default()
                .push(stored);
        }
        for revisions in state.records.values_mut() {
            revisions.sort_by_key(|r| r.revision.rev);
            mark_superseded(revisions);
        }
        let mut guard = self.state.write().expect("store lock poisoned");
        *guard = state;
        drop(guard);
        self.rewrite_log()
    }

    // ---- SQL export ----

    /// Relational export: one current table and one `_history` table per
    /// kind, plus (unless `schema_only`) exactly one INSERT per revision:
    /// the latest into the current table, superseded ones into history.
    pub fn export_sql(&self, schema_only: bool) -> String {
        let mut out = String::new();
        for kind in RecordKind::ALL {
            let columns = sql_columns(kind);
            for (table, pk) in [
                (kind.as_str().to_string(), "PRIMARY KEY (id_site, id_local)"),
                (format!("{}_history", kind.as_str()), "PRIMARY KEY (id_site, id_local, rev)"),
            ] {
                out.push_str(&format!("CREATE TABLE {table} (\n"));
                out.push_str("  id_site VARCHAR,\n  id_local VARCHAR,\n  rev INTEGER,\n  origin VARCHAR,\n");
                for (name, ty) in &columns {
                    out.push_str(&format!("  {name} {ty},\n"));
                }
                out.push_str(&format!("  {pk}\n);\n"));
            }
        }
        if schema_only {
            return out;
        }
        for stored in self.all_revisions() {
            let table = if stored.superseded {
                format!("{}_history", stored.kind.as_str())
            } else {
                stored.kind.as_str().to_string()
            };
            let columns = sql_columns(stored.kind);
            let record = stored.record().expect("stored bodies decode");
            let mut names = vec!["id_site", "id_local", "rev", "origin"]
                .into_iter()
                .map(String::from)
                .collect::<Vec<_>>();
            names.extend(columns.iter().map(|(n, _)| n.clone()));
            let mut values = vec![
                sql_quote(stored.id.site()),
                sql_quote(stored.id.local()),
                stored.revision.rev.to_string(),
                sql_quote(&stored.revision.origin),
            ];
            values.extend(sql_values(&record));
            out.push_str(&format!(
                "INSERT INTO {table} ({}) VALUES ({});\n",
                names.join(", "),
                values.join(", ")
            ));
        }
        out
    }

    // ---- internals ----

    fn append_log(&self, lines: &[String]) -> Result<()> {
        let mut guard = self.log.lock().expect("log lock poisoned");
        if let Some(file) = guard.as_mut() {
            for line in lines {
                writeln!(file, "{line}")?;
            }
            file.flush()?;
        }
        Ok(())
    }

    fn rewrite_log(&self) -> Result<()> {
        let Some(path) = &self.log_path else {
            return Ok(());
        };
        let mut guard = self.log.lock().expect("log lock poisoned");
        let mut file = File::create(path)?;
        writeln!(file, "{LOG_HEADER}")?;
        for stored in self.all_revisions_by_seq() {
            writeln!(file, "{}", stored_line(&stored))?;
        }
        file.flush()?;
        *guard = Some(OpenOptions::new().append(true).open(path)?);
        Ok(())
    }
}

fn min_id() -> EntityId {
    EntityId::new("0", "0").expect("static id")
}

fn mark_superseded(revisions: &mut [StoredRecord]) {
    let last = revisions.len();
    for (i, r) in revisions.iter_mut().enumerate() {
        r.superseded = i + 1 != last;
    }
}

fn stored_line(stored: &StoredRecord) -> String {
    let body: serde_json::Value =
        serde_json::from_str(&stored.body).expect("stored bodies are valid JSON");
    serde_json::json!({
        "body": body,
        "id": stored.id.to_string(),
        "kind": stored.kind.as_str(),
        "rev": stored.revision.rev,
        "seq": stored.seq,
        "stored_at": stored.stored_at,
    })
    .to_string()
}

fn parse_stored_line(line: &str) -> Result<StoredRecord> {
    let parsed = parse_record_line(line)?;
    let value: serde_json::Value = serde_json::from_str(line).expect("parsed above");
    let seq = value
        .get("seq")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptSnapshot("line missing seq".into()))?;
    let stored_at = value
        .get("stored_at")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();
    Ok(StoredRecord {
        revision: Revision::new(parsed.rev, parsed.id.site()),
        id: parsed.id,
        kind: parsed.kind,
        body: parsed.body,
        superseded: false,
        seq,
        stored_at,
    })
}

fn id_prefix(kind: RecordKind) -> &'static str {
    match kind {
        RecordKind::Collection => "coll",
        RecordKind::DataObject => "obj",
        RecordKind::Document => "doc",
        RecordKind::Function => "fn",
        RecordKind::ProcessRun => "run",
        RecordKind::Researcher => "res",
        RecordKind::Responsibility => "resp",
        RecordKind::Site => "site",
        RecordKind::Tool => "tool",
        RecordKind::TypeAssociation => "assoc",
        RecordKind::TypeNode => "type",
    }
}

fn sql_columns(kind: RecordKind) -> Vec<(String, &'static str)> {
    let cols: &[(&str, &str)] = match kind {
        RecordKind::Collection => &[("name", "VARCHAR"), ("members", "TEXT"), ("subcollections", "TEXT")],
        RecordKind::DataObject => &[
            ("name", "VARCHAR"),
            ("location_site", "VARCHAR"),
            ("location_uri", "VARCHAR"),
            ("types", "TEXT"),
            ("created_by", "VARCHAR"),
            ("entered_by", "VARCHAR"),
            ("created_at", "VARCHAR"),
        ],
        RecordKind::Document => &[
            ("title", "VARCHAR"),
            ("uri", "VARCHAR"),
            ("about_types", "TEXT"),
            ("authors", "TEXT"),
        ],
        RecordKind::Function => &[
            ("name", "VARCHAR"),
            ("input_types", "TEXT"),
            ("output_types", "TEXT"),
            ("is_converter", "BOOLEAN"),
            ("tool", "VARCHAR"),
            ("enabled", "BOOLEAN"),
        ],
        RecordKind::ProcessRun => &[
            ("function", "VARCHAR"),
            ("inputs", "TEXT"),
            ("outputs", "TEXT"),
            ("host", "VARCHAR"),
            ("site", "VARCHAR"),
            ("parameters", "TEXT"),
            ("started", "VARCHAR"),
            ("ended", "VARCHAR"),
            ("status", "VARCHAR"),
        ],
        RecordKind::Researcher => &[("name", "VARCHAR"), ("contact", "VARCHAR"), ("affiliation", "VARCHAR")],
        RecordKind::Responsibility => &[("entity", "VARCHAR"), ("researcher", "VARCHAR"), ("role", "VARCHAR")],
        RecordKind::Site => &[
            ("name", "VARCHAR"),
            ("contact", "VARCHAR"),
            ("endpoint", "VARCHAR"),
            ("systems", "TEXT"),
        ],
        RecordKind::Tool => &[
            ("name", "VARCHAR"),
            ("version", "VARCHAR"),
            ("handles_types", "TEXT"),
            ("favorite_of", "TEXT"),
        ],
        RecordKind::TypeAssociation => &[("subject", "VARCHAR"), ("object", "VARCHAR"), ("relation", "VARCHAR")],
        RecordKind::TypeNode => &[
            ("name", "VARCHAR"),
            ("kind", "VARCHAR"),
            ("parents", "TEXT"),
            ("annotations", "TEXT"),
        ],
    };
    cols.iter().map(|(n, t)| (n.to_string(), *t)).collect()
}

fn json_text<T: serde::Serialize>(value: &T) -> String {
    sql_quote(&serde_json::to_value(value).expect("serializable").to_string())
}

fn opt_id(value: &Option<EntityId>) -> String {
    match value {
        Some(id) => sql_quote(&id.to_string()),
        None => "NULL".to_string(),
    }
}

fn opt_str(value: &Option<String>) -> String {
    match value {
        Some(s) => sql_quote(s),
        None => "NULL".to_string(),
    }
}

fn sql_values(record: &Record) -> Vec<String> {
    match record {
        Record::Collection(c) => vec![
            sql_quote(&c.name),
            json_text(&c.members),
            json_text(&c.subcollections),
        ],
        Record::DataObject(o) => vec![
            sql_quote(&o.name),
            sql_quote(&o.location.site.to_string()),
            sql_quote(&o.location.uri),
            json_text(&o.types),
            opt_id(&o.created_by),
            opt_id(&o.entered_by),
            sql_quote(&o.created_at),
        ],
        Record::Document(d) => vec![
            sql_quote(&d.title),
            sql_quote(&d.uri),
            json_text(&d.about_types),
            json_text(&d.authors),
        ],
        Record::Function(f) => vec![
            sql_quote(&f.name),
            json_text(&f.input_types),
            json_text(&f.output_types),
            if f.is_converter { "TRUE" } else { "FALSE" }.to_string(),
            opt_id(&f.tool),
            if f.enabled { "TRUE" } else { "FALSE" }.to_string(),
        ],
        Record::ProcessRun(r) => vec![
            sql_quote(&r.function.to_string()),
            json_text(&r.inputs),
            json_text(&r.outputs),
            sql_quote(&r.host),
            sql_quote(&r.site.to_string()),
            json_text(&r.parameters),
            sql_quote(&r.started),
            sql_quote(&r.ended),
            sql_quote(&r.status.to_string()),
        ],
        Record::Researcher(r) => vec![
            sql_quote(&r.name),
            sql_quote(&r.contact),
            sql_quote(&r.affiliation.to_string()),
        ],
        Record::Responsibility(r) => vec![
            sql_quote(&r.entity.to_string()),
            sql_quote(&r.researcher.to_string()),
            sql_quote(&r.role),
        ],
        Record::Site(s) => vec![
            sql_quote(&s.name),
            sql_quote(&s.contact),
            opt_str(&s.endpoint),
            json_text(&s.systems),
        ],
        Record::Tool(t) => vec![
            sql_quote(&t.name),
            sql_quote(&t.version),
            json_text(&t.handles_types),
            json_text(&t.favorite_of),
        ],
        Record::TypeAssociation(a) => vec![
            sql_quote(&a.subject.to_string()),
            sql_quote(&a.object.to_string()),
            sql_quote(&a.relation.to_string()),
        ],
        Record::TypeNode(t) => vec![
            sql_quote(&t.name),
            sql_quote(&t.kind.to_string()),
            json_text(&t.parents),
            json_text(&t.annotations),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TypeKind, TypeNode};
    use std::collections::{BTreeMap, BTreeSet};

    fn type_node(local: &str, name: &str) -> Record {
        Record::TypeNode(TypeNode {
            id: EntityId::new("berkeley", local).unwrap(),
            name: name.to_string(),
            kind: TypeKind::Storage,
            parents: BTreeSet::new(),
            annotations: BTreeMap::new(),
        })
    }

    #[test]
    fn first_put_gets_rev_one() {
        let store = Store::in_memory("berkeley");
        let rev = store.put(&type_node("t-1", "GIF"), Some(0)).unwrap();
        assert_eq!(rev.rev, 1);
        assert_eq!(rev.origin, "berkeley");
    }

    #[test]
    fn update_retains_history() {
        let store = Store::in_memory("berkeley");
        store.put(&type_node("t-1", "GIF"), Some(0)).unwrap();
        let rev = store.put(&type_node("t-1", "GIF87a"), Some(1)).unwrap();
        assert_eq!(rev.rev, 2);
        let id = EntityId::new("berkeley", "t-1").unwrap();
        let old = store.get(RecordKind::TypeNode, &id, Some(1)).unwrap();
        assert!(old.superseded);
        let latest = store.get(RecordKind::TypeNode, &id, None).unwrap();
        assert_eq!(latest.revision.rev, 2);
        assert!(!latest.superseded);
    }

    #[test]
    fn stale_revision_is_rejected() {
        let store = Store::in_memory("berkeley");
        store.put(&type_node("t-1", "GIF"), Some(0)).unwrap();
        store.put(&type_node("t-1", "GIF87a"), Some(1)).unwrap();
        let err = store.put(&type_node("t-1", "GIF89a"), Some(1)).unwrap_err();
        assert_eq!(err.code(), "StaleRevision");
    }

    #[test]
    fn foreign_origin_put_is_rejected() {
        let store = Store::in_memory("berkeley");
        let foreign = Record::TypeNode(TypeNode {
            id: EntityId::new("scripps", "t-1").unwrap(),
            name: "NetCDF".to_string(),
            kind: TypeKind::Storage,
            parents: BTreeSet::new(),
            annotations: BTreeMap::new(),
        });
        assert_eq!(store.put(&foreign, Some(0)).unwrap_err().code(), "NotOriginSite");
    }

    #[test]
    fn get_unknown_is_not_found() {
        let store = Store::in_memory("berkeley");
        let id = EntityId::new("berkeley", "missing").unwrap();
        assert_eq!(
            store.get(RecordKind::TypeNode, &id, None).unwrap_err().code(),
            "NotFound"
        );
    }

    #[test]
    fn scan_is_ordered_and_latest_only() {
        let store = Store::in_memory("berkeley");
        store.put(&type_node("t-2", "PNG"), Some(0)).unwrap();
        store.put(&type_node("t-1", "GIF"), Some(0)).unwrap();
        store.put(&type_node("t-1", "GIF89a"), Some(1)).unwrap();
        let scanned = store.scan(RecordKind::TypeNode);
        assert_eq!(scanned.len(), 2);
        assert_eq!(scanned[0].id.local(), "t-1");
        assert_eq!(scanned[0].revision.rev, 2);
        assert_eq!(scanned[1].id.local(), "t-2");
        assert!(store.scan(RecordKind::Site).is_empty());
    }

    #[test]
    fn snapshot_round_trip_preserves_export() {
        let store = Store::in_memory("berkeley");
        store.put(&type_node("t-1", "GIF"), Some(0)).unwrap();
        store.put(&type_node("t-1", "GIF89a"), Some(1)).unwrap();
        let before = store.export_sql(false);
        let snap = store.snapshot();
        let other = Store::in_memory("berkeley");
        other.restore(&snap).unwrap();
        assert_eq!(other.export_sql(false), before);
        assert_eq!(other.revision_count(), 2);
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let store = Store::in_memory("berkeley");
        store.put(&type_node("t-1", "GIF"), Some(0)).unwrap();
        let snap = store.snapshot();
        let truncated = &snap[..snap.len() - 10];
        let other = Store::in_memory("berkeley");
        assert_eq!(other.restore(truncated).unwrap_err().code(), "CorruptSnapshot");
    }

    #[test]
    fn empty_snapshot_round_trips() {
        let store = Store::in_memory("berkeley");
        let snap = store.snapshot();
        let other = Store::in_memory("berkeley");
        other.restore(&snap).unwrap();
        assert!(other.scan_all().is_empty());
    }

    #[test]
    fn export_has_one_insert_per_revision() {
        let store = Store::in_memory("berkeley");
        store.put(&type_node("t-1", "GIF"), Some(0)).unwrap();
        store.put(&type_node("t-1", "GIF89a"), Some(1)).unwrap();
        store.put(&type_node("t-2", "PNG"), Some(0)).unwrap();
        let sql = store.export_sql(false);
        let inserts = sql.lines().filter(|l| l.starts_with("INSERT INTO")).count();
        assert_eq!(inserts as u64, store.revision_count());
        assert_eq!(sql, store.export_sql(false));
    }

    #[test]
    fn generated_ids_are_fresh() {
        let store = Store::in_memory("berkeley");
        assert_eq!(store.next_local_id(RecordKind::TypeNode).local(), "type-1");
        store.put(&type_node("type-1", "GIF"), Some(0)).unwrap();
        assert_eq!(store.next_local_id(RecordKind::TypeNode).local(), "type-2");
    }

    #[test]
    fn reopen_replays_log() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = Store::open(dir.path(), "berkeley").unwrap();
            store.put(&type_node("t-1", "GIF"), Some(0)).unwrap();
            store.put(&type_node("t-1", "GIF89a"), Some(1)).unwrap();
        }
        let store = Store::open(dir.path(), "berkeley").unwrap();
        assert_eq!(store.revision_count(), 2);
        let id = EntityId::new("berkeley", "t-1").unwrap();
        assert_eq!(store.get(RecordKind::TypeNode, &id, None).unwrap().revision.rev, 2);
        assert_eq!(store.max_seq(), 2);
    }
}
