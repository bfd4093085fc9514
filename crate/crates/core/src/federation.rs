//! Publishing metadata between sites as deterministic, hash-sealed bundles.
//! Only metadata travels; data objects stay where they are as URIs. Each site
//! is the sole authority over the records it originates: imports merge by
//! origin revision, never overwrite local records, and are idempotent.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::canon::{parse_record_line, record_line, sha256_hex};
use crate::error::{Error, Result};
use crate::model::{EntityId, Record, RecordKind};
use crate::store::{MergeGroup, MergeOutcome, Store, StoredRecord};

const EPOCH: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    All,
    ByKind(RecordKind),
    SinceCursor(u64),
}

impl Selection {
    fn describe(&self) -> String {
        match self {
            Selection::All => "all".to_string(),
            Selection::ByKind(k) => format!("kind={k}"),
            Selection::SinceCursor(c) => format!("since={c}"),
        }
    }
}

/// A sealed bundle, already serialized. `text` is the wire format; the seal
/// and cursor are retained for bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bundle {
    pub text: String,
    pub seal: String,
    pub record_count: u64,
    /// Highest store sequence included (0 when empty).
    pub cursor: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub id: EntityId,
    pub target_site: EntityId,
    pub selection: String,
    pub bundle_seal: String,
    pub cursor: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub added: u64,
    pub updated: u64,
    pub skipped: u64,
    pub rejected: u64,
    pub reasons: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Record(StoredRecord),
    /// Known only by id; unpublished as far as this site can tell.
    Stub(EntityId),
}

/// Network delivery is pluggable; the CLI wires in an HTTP push, tests use
/// files or nothing.
pub trait Transport: Send + Sync {
    fn push(&self, endpoint: &str, bundle: &str) -> Result<()>;
}

pub struct Federation {
    store: Arc<Store>,
    publications: Mutex<Vec<PublicationRecord>>,
    log_path: Option<PathBuf>,
    import_lock: Mutex<()>,
}

impl Federation {
    pub fn in_memory(store: Arc<Store>) -> Federation {
        Federation {
            store,
            publications: Mutex::new(Vec::new()),
            log_path: None,
            import_lock: Mutex::new(()),
        }
    }

    /// Open with publication bookkeeping persisted under `dir`.
    pub fn open(dir: &Path, store: Arc<Store>) -> Result<Federation> {
        let path = dir.join("publications.log");
        let mut publications = Vec::new();
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                if line.is_empty() {
                    continue;
                }
                let record: PublicationRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::CorruptSnapshot(format!("bad publication line: {e}")))?;
                publications.push(record);
            }
        }
        Ok(Federation {
            store,
            publications: Mutex::new(publications),
            log_path: Some(path),
            import_lock: Mutex::new(()),
        })
    }

    pub fn publications(&self) -> Vec<PublicationRecord> {
        self.publications.lock().expect("publications lock").clone()
    }

    /// Highest cursor already published to `target`.
    pub fn cursor_for(&self, target: &EntityId) -> u64 {
        self.publications
            .lock()
            .expect("publications lock")
            .iter()
            .filter(|p| &p.target_site == target)
            .map(|p| p.cursor)
            .max()
            .unwrap_or(0)
    }

    /// Deterministic bundle of local-origin records (all revisions) matching
    /// the selection. Byte-identical for identical state and selection.
    pub fn export_bundle(&self, selection: &Selection) -> Bundle {
        let origin = self.store.site().to_string();
        let mut revisions: Vec<StoredRecord> = self
            .store
            .all_revisions()
            .into_iter()
            .filter(|r| r.id.site() == origin)
            .filter(|r| match selection {
                Selection::All => true,
                Selection::ByKind(kind) => r.kind == *kind,
                Selection::SinceCursor(cursor) => r.seq > *cursor,
            })
            .collect();
        revisions.sort_by(|a, b| {
            (a.kind, &a.id, a.revision.rev).cmp(&(b.kind, &b.id, b.revision.rev))
        });

        // `created` must be a pure function of content so exports stay
        // byte-stable: the newest timestamp carried by any included record.
        let created = revisions
            .iter()
            .filter_map(|r| r.record().ok())
            .filter_map(|record| match record {
                Record::DataObject(o) => Some(o.created_at),
                Record::ProcessRun(r) => Some(r.ended.max(r.started)),
                _ => None,
            })
            .max()
            .unwrap_or_else(|| EPOCH.to_string());

        let mut text = format!(
            "{{\"bigsur_bundle\":1,\"origin\":{},\"created\":{}}}\n",
            serde_json::Value::String(origin),
            serde_json::Value::String(created),
        );
        let cursor = revisions.iter().map(|r| r.seq).max().unwrap_or(0);
        for r in &revisions {
            text.push_str(&record_line(r.kind, &r.id, r.revision.rev, &r.body));
            text.push('\n');
        }
        let seal = sha256_hex(text.as_bytes());
        text.push_str(&format!(
            "{{\"seal\":{},\"count\":{}}}\n",
            serde_json::Value::String(seal.clone()),
            revisions.len()
        ));
        Bundle {
            text,
            seal,
            record_count: revisions.len() as u64,
            cursor,
        }
    }

    /// Merge a bundle. The seal is verified before anything is written;
    /// re-importing the same bundle reports everything skipped.
    pub fn import_bundle(&self, text: &str) -> Result<ImportReport> {
        let _guard = self.import_lock.lock().expect("import lock");

        let stripped = text.strip_suffix('\n').ok_or_else(|| {
            Error::MalformedBundle("bundle must end with a newline".to_string())
        })?;
        let (body, seal_line) = match stripped.rfind('\n') {
            Some(idx) => (&text[..idx + 1], &stripped[idx + 1..]),
            None => return Err(Error::MalformedBundle("bundle too short".to_string())),
        };

        let trailer: serde_json::Value = serde_json::from_str(seal_line)
            .map_err(|e| Error::MalformedBundle(format!("bad seal line: {e}")))?;
        let expected_seal = trailer
            .get("seal")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::MalformedBundle("missing seal".to_string()))?;
        let count = trailer
            .get("count")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::MalformedBundle("missing count".to_string()))?;
        let computed = sha256_hex(body.as_bytes());
        if computed != expected_seal {
            return Err(Error::SealMismatch {
                expected: expected_seal.to_string(),
                computed,
            });
        }

        let mut lines = body.lines();
        let header: serde_json::Value = serde_json::from_str(lines.next().unwrap_or_default())
            .map_err(|e| Error::MalformedBundle(format!("bad header: {e}")))?;
        if header.get("bigsur_bundle").and_then(|v| v.as_u64()) != Some(1) {
            return Err(Error::MalformedBundle("not a bigsur bundle".to_string()));
        }
        let origin = header
            .get("origin")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::MalformedBundle("header missing origin".to_string()))?
            .to_string();

        let mut parsed = Vec::new();
        for line in lines {
            let record = parse_record_line(line)?;
            if record.id.site() != origin {
                return Err(Error::MalformedBundle(format!(
                    "record {} does not originate at bundle origin `{origin}`",
                    record.id
                )));
            }
            parsed.push(record);
        }
        if parsed.len() as u64 != count {
            return Err(Error::MalformedBundle(format!(
                "trailer count {count} does not match {} record lines",
                parsed.len()
            )));
        }
        let sorted = parsed.windows(2).all(|w| {
            (w[0].kind, &w[0].id, w[0].rev) < (w[1].kind, &w[1].id, w[1].rev)
        });
        if !sorted {
            return Err(Error::MalformedBundle(
                "records are not sorted by (kind, id, rev)".to_string(),
            ));
        }

        // group consecutive lines per record
        let mut groups: Vec<MergeGroup> = Vec::new();
        for line in parsed {
            match groups.last_mut() {
                Some((kind, id, lines)) if *kind == line.kind && *id == line.id => {
                    lines.push((line.rev, line.body));
                }
                _ => groups.push((line.kind, line.id, vec![(line.rev, line.body)])),
            }
        }

        let outcomes = self.store.merge_remote(&groups)?;
        let mut report = ImportReport::default();
        for ((kind, id, _), group_outcomes) in groups.iter().zip(outcomes) {
            for (rev, outcome) in group_outcomes {
                match outcome {
                    MergeOutcome::Added => report.added += 1,
                    MergeOutcome::Updated => report.updated += 1,
                    MergeOutcome::Skipped => report.skipped += 1,
                    MergeOutcome::Rejected(reason) => {
                        report.rejected += 1;
                        report.reasons.push((format!("{kind} {id}@{rev}"), reason));
                    }
                }
            }
        }
        Ok(report)
    }

    /// Export and deliver a bundle to a registered site, then record the
    /// publication with an advanced cursor. With no explicit selection, the
    /// export is incremental from the last cursor for that target.
    pub fn publish(
        &self,
        target: &crate::model::Site,
        selection: Option<Selection>,
        out_path: Option<&Path>,
        transport: Option<&dyn Transport>,
    ) -> Result<PublicationRecord> {
        let selection =
            selection.unwrap_or_else(|| Selection::SinceCursor(self.cursor_for(&target.id)));
        let bundle = self.export_bundle(&selection);

        match (out_path, &target.endpoint) {
            (Some(path), _) => {
                std::fs::write(path, bundle.text.as_bytes()).map_err(|e| {
                    Error::TargetUnreachable {
                        target: target.name.clone(),
                        reason: e.to_string(),
                    }
                })?;
            }
            (None, Some(endpoint)) => {
                let transport = transport.ok_or_else(|| Error::TargetUnreachable {
                    target: target.name.clone(),
                    reason: "no transport configured".to_string(),
                })?;
                transport
                    .push(endpoint, &bundle.text)
                    .map_err(|e| Error::TargetUnreachable {
                        target: target.name.clone(),
                        reason: e.to_string(),
                    })?;
            }
            (None, None) => return Err(Error::NoEndpoint(target.name.clone())),
        }

        let mut publications = self.publications.lock().expect("publications lock");
        let record = PublicationRecord {
            id: EntityId::new(self.store.site(), format!("pub-{}", publications.len() + 1))?,
            target_site: target.id.clone(),
            selection: selection.describe(),
            bundle_seal: bundle.seal.clone(),
            cursor: bundle.cursor.max(self.cursor_for_locked(&publications, &target.id)),
        };
        if let Some(path) = &self.log_path {
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(file, "{}", serde_json::to_string(&record).expect("serializes"))?;
            file.flush()?;
        }
        publications.push(record.clone());
        Ok(record)
    }

    fn cursor_for_locked(&self, publications: &[PublicationRecord], target: &EntityId) -> u64 {
        publications
            .iter()
            .filter(|p| &p.target_site == target)
            .map(|p| p.cursor)
            .max()
            .unwrap_or(0)
    }

    /// Local resolution only: a record if we hold it (any kind), a stub
    /// otherwise. Never a network call; stubs resolve via import.
    pub fn resolve_remote(&self, id: &EntityId) -> Resolution {
        for kind in RecordKind::ALL {
            if let Ok(stored) = self.store.get(kind, id, None) {
                return Resolution::Record(stored);
            }
        }
        Resolution::Stub(id.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::model::TypeKind;

    fn site(token: &str) -> (Arc<Store>, Catalog, Federation) {
        let store = Arc::new(Store::in_memory(token));
        let catalog = Catalog::new(store.clone());
        let federation = Federation::in_memory(store.clone());
        (store, catalog, federation)
    }

    #[test]
    fn empty_bundle_is_valid_and_stable() {
        let (_s, _c, fed) = site("berkeley");
        let a = fed.export_bundle(&Selection::All);
        let b = fed.export_bundle(&Selection::All);
        assert_eq!(a.text, b.text);
        assert_eq!(a.record_count, 0);
        assert!(a.text.starts_with("{\"bigsur_bundle\":1,\"origin\":\"berkeley\",\"created\":\"1970-01-01T00:00:00Z\"}\n"));
        // a fresh site can import an empty bundle
        let (_s2, _c2, fed2) = site("scripps");
        let report = fed2.import_bundle(&a.text).unwrap();
        assert_eq!(report, ImportReport::default());
    }

    #[test]
    fn import_then_reimport_skips_everything() {
        let (_s, c, fed) = site("berkeley");
        c.register_type(None, "GIF", TypeKind::Storage, &[]).unwrap();
        c.register_type(None, "PNG", TypeKind::Storage, &[]).unwrap();
        let bundle = fed.export_bundle(&Selection::All);

        let (s2, _c2, fed2) = site("scripps");
        let first = fed2.import_bundle(&bundle.text).unwrap();
        assert_eq!(first.added, 2);
        assert_eq!(first.rejected, 0);
        let again = fed2.import_bundle(&bundle.text).unwrap();
        assert_eq!(again.added, 0);
        assert_eq!(again.updated, 0);
        assert_eq!(again.skipped, 2);
        assert_eq!(s2.revision_count(), 2);
    }

    #[test]
    fn tampered_bundle_is_rejected_without_writes() {
        let (_s, c, fed) = site("berkeley");
        c.register_type(None, "GIF", TypeKind::Storage, &[]).unwrap();
        let bundle = fed.export_bundle(&Selection::All);
        let tampered = bundle.text.replace("GIF", "PNG");
        let (s2, _c2, fed2) = site("scripps");
        assert_eq!(
            fed2.import_bundle(&tampered).unwrap_err().code(),
            "SealMismatch"
        );
        assert_eq!(s2.revision_count(), 0);
    }

    #[test]
    fn imports_cannot_touch_local_records() {
        // build a bundle "from" scripps describing a record
        let (_s1, c1, fed1) = site("scripps");
        c1.register_type(Some("scripps/type-1".parse().unwrap()), "NetCDF", TypeKind::Storage, &[])
            .unwrap();
        let bundle = fed1.export_bundle(&Selection::All);

        // scripps's own store already has a different revision 1
        let (s2, c2, _fed) = site("scripps");
        c2.register_type(Some("scripps/type-1".parse().unwrap()), "HDF5", TypeKind::Storage, &[])
            .unwrap();
        let fed2 = Federation::in_memory(s2.clone());
        let report = fed2.import_bundle(&bundle.text).unwrap();
        assert_eq!(report.rejected, 1);
        assert_eq!(report.added + report.updated, 0);
        // the local record is unchanged
        let stored = s2
            .get(RecordKind::TypeNode, &"scripps/type-1".parse().unwrap(), None)
            .unwrap();
        assert!(stored.body.contains("HDF5"));
    }

    #[test]
    fn updates_flow_from_origin_with_history() {
        let (_s1, c1, fed1) = site("berkeley");
        c1.register_type(Some("berkeley/type-1".parse().unwrap()), "GIF", TypeKind::Storage, &[])
            .unwrap();
        let v1 = fed1.export_bundle(&Selection::All);

        let (s2, _c2, fed2) = site("scripps");
        fed2.import_bundle(&v1.text).unwrap();

        // origin revises the record, publishes again
        c1.annotate_type("GIF", "note", "bitmap").unwrap();
        let v2 = fed1.export_bundle(&Selection::All);
        let report = fed2.import_bundle(&v2.text).unwrap();
        assert_eq!(report.updated, 1);
        assert_eq!(report.skipped, 1);
        let latest = s2
            .get(RecordKind::TypeNode, &"berkeley/type-1".parse().unwrap(), None)
            .unwrap();
        assert_eq!(latest.revision.rev, 2);
        let old = s2
            .get(RecordKind::TypeNode, &"berkeley/type-1".parse().unwrap(), Some(1))
            .unwrap();
        assert!(old.superseded);
    }

    #[test]
    fn since_cursor_exports_only_new_records() {
        let (s, c, fed) = site("berkeley");
        c.register_type(None, "GIF", TypeKind::Storage, &[]).unwrap();
        let cursor = s.max_seq();
        c.register_type(None, "PNG", TypeKind::Storage, &[]).unwrap();
        c.register_type(None, "TIFF", TypeKind::Storage, &[]).unwrap();
        c.register_type(None, "BMP", TypeKind::Storage, &[]).unwrap();
        let bundle = fed.export_bundle(&Selection::SinceCursor(cursor));
        assert_eq!(bundle.record_count, 3);
    }

    #[test]
    fn publish_to_file_advances_cursor() {
        let dir = tempfile::tempdir().unwrap();
        let (_s, c, fed) = site("berkeley");
        let target = c
            .register_site(Some("berkeley/site-s".parse().unwrap()), "Scripps", "", None, vec![])
            .unwrap();
        c.register_type(None, "GIF", TypeKind::Storage, &[]).unwrap();
        let path = dir.path().join("drop.bundle");
        let record = fed.publish(&target, None, Some(&path), None).unwrap();
        assert!(path.exists());
        assert!(record.cursor > 0);
        assert_eq!(fed.cursor_for(&target.id), record.cursor);

        // nothing new: next incremental publish carries zero records
        let record2 = fed.publish(&target, None, Some(&path), None).unwrap();
        assert_eq!(record2.cursor, record.cursor);
    }

    #[test]
    fn publish_without_endpoint_or_path_fails() {
        let (_s, c, fed) = site("berkeley");
        let target = c
            .register_site(Some("berkeley/site-s".parse().unwrap()), "Scripps", "", None, vec![])
            .unwrap();
        assert_eq!(
            fed.publish(&target, None, None, None).unwrap_err().code(),
            "NoEndpoint"
        );
    }

    #[test]
    fn unreachable_target_does_not_advance_cursor() {
        struct FailingTransport;
        impl Transport for FailingTransport {
            fn push(&self, _endpoint: &str, _bundle: &str) -> Result<()> {
                Err(Error::Io(std::io::Error::other("connection refused")))
            }
        }
        let (_s, c, fed) = site("berkeley");
        let target = c
            .register_site(
                Some("berkeley/site-s".parse().unwrap()),
                "Scripps",
                "",
                Some("http://127.0.0.1:1/bundles".to_string()),
                vec![],
            )
            .unwrap();
        c.register_type(None, "GIF", TypeKind::Storage, &[]).unwrap();
        let err = fed
            .publish(&target, None, None, Some(&FailingTransport))
            .unwrap_err();
        assert_eq!(err.code(), "TargetUnreachable");
        assert_eq!(fed.cursor_for(&target.id), 0);
        assert!(fed.publications().is_empty());
    }

    #[test]
    fn resolve_remote_before_and_after_import() {
        let (_s1, c1, fed1) = site("berkeley");
        c1.register_type(Some("berkeley/type-1".parse().unwrap()), "GIF", TypeKind::Storage, &[])
            .unwrap();
        let bundle = fed1.export_bundle(&Selection::All);

        let (_s2, _c2, fed2) = site("scripps");
        let id: EntityId = "berkeley/type-1".parse().unwrap();
        assert_eq!(fed2.resolve_remote(&id), Resolution::Stub(id.clone()));
        fed2.import_bundle(&bundle.text).unwrap();
        assert!(matches!(fed2.resolve_remote(&id), Resolution::Record(_)));
    }
}
