//! Shared domain types: identifiers, the record kinds, record-local
//! validation, and the four-way metadata classification.
//!
//! Validation here covers what a single record can prove about itself.
//! Referential rules (parents exist, affiliation resolves, DAGs stay acyclic)
//! need the full catalog and live in [`crate::catalog`].

mod ids;
mod records;

pub use ids::{is_rfc3339, now_rfc3339, EntityId, Revision};
pub use records::{
    AssociationRelation, Collection, DataObject, Document, FunctionDescriptor, ObjectLocation,
    ProcessRun, Researcher, Responsibility, RunStatus, Site, ToolDescriptor, TypeAssociation,
    TypeKind, TypeNode,
};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// All record kinds, ordered by their kind token so `(kind, id)` orderings
/// match the serialized form everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RecordKind {
    #[serde(rename = "collection")]
    Collection,
    #[serde(rename = "data_object")]
    DataObject,
    #[serde(rename = "document")]
    Document,
    #[serde(rename = "function")]
    Function,
    #[serde(rename = "process_run")]
    ProcessRun,
    #[serde(rename = "researcher")]
    Researcher,
    #[serde(rename = "responsibility")]
    Responsibility,
    #[serde(rename = "site")]
    Site,
    #[serde(rename = "tool")]
    Tool,
    #[serde(rename = "type_association")]
    TypeAssociation,
    #[serde(rename = "type_node")]
    TypeNode,
}

impl RecordKind {
    pub const ALL: [RecordKind; 11] = [
        RecordKind::Collection,
        RecordKind::DataObject,
        RecordKind::Document,
        RecordKind::Function,
        RecordKind::ProcessRun,
        RecordKind::Researcher,
        RecordKind::Responsibility,
        RecordKind::Site,
        RecordKind::Tool,
        RecordKind::TypeAssociation,
        RecordKind::TypeNode,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RecordKind::Collection => "collection",
            RecordKind::DataObject => "data_object",
            RecordKind::Document => "document",
            RecordKind::Function => "function",
            RecordKind::ProcessRun => "process_run",
            RecordKind::Researcher => "researcher",
            RecordKind::Responsibility => "responsibility",
            RecordKind::Site => "site",
            RecordKind::Tool => "tool",
            RecordKind::TypeAssociation => "type_association",
            RecordKind::TypeNode => "type_node",
        }
    }

    pub fn parse(token: &str) -> Result<Self, Error> {
        RecordKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == token)
            .ok_or_else(|| Error::UnknownKind(token.to_string()))
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four-way classification of metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "static")]
    Static,
    #[serde(rename = "thematic")]
    Thematic,
    #[serde(rename = "object-level")]
    ObjectLevel,
    #[serde(rename = "systemic")]
    Systemic,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Static => write!(f, "static"),
            Category::Thematic => write!(f, "thematic"),
            Category::ObjectLevel => write!(f, "object-level"),
            Category::Systemic => write!(f, "systemic"),
        }
    }
}

/// One invariant violation. `rule` is a stable token suitable for tests;
/// `detail` is free text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: &'static str,
    pub detail: String,
}

impl Violation {
    fn new(rule: &'static str, detail: impl Into<String>) -> Self {
        Violation {
            rule,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.detail)
    }
}

/// Any model record. Store payloads, bundles, and the ingest format all carry
/// these behind a `(kind, body)` envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Site(Site),
    Researcher(Researcher),
    TypeNode(TypeNode),
    TypeAssociation(TypeAssociation),
    DataObject(DataObject),
    Collection(Collection),
    Function(FunctionDescriptor),
    Tool(ToolDescriptor),
    Document(Document),
    Responsibility(Responsibility),
    ProcessRun(ProcessRun),
}

impl Record {
    pub fn kind(&self) -> RecordKind {
        match self {
            Record::Site(_) => RecordKind::Site,
            Record::Researcher(_) => RecordKind::Researcher,
            Record::TypeNode(_) => RecordKind::TypeNode,
            Record::TypeAssociation(_) => RecordKind::TypeAssociation,
            Record::DataObject(_) => RecordKind::DataObject,
            Record::Collection(_) => RecordKind::Collection,
            Record::Function(_) => RecordKind::Function,
            Record::Tool(_) => RecordKind::Tool,
            Record::Document(_) => RecordKind::Document,
            Record::Responsibility(_) => RecordKind::Responsibility,
            Record::ProcessRun(_) => RecordKind::ProcessRun,
        }
    }

    pub fn id(&self) -> &EntityId {
        match self {
            Record::Site(r) => &r.id,
            Record::Researcher(r) => &r.id,
            Record::TypeNode(r) => &r.id,
            Record::TypeAssociation(r) => &r.id,
            Record::DataObject(r) => &r.id,
            Record::Collection(r) => &r.id,
            Record::Function(r) => &r.id,
            Record::Tool(r) => &r.id,
            Record::Document(r) => &r.id,
            Record::Responsibility(r) => &r.id,
            Record::ProcessRun(r) => &r.id,
        }
    }

    /// Display name for result rows: the record's human-facing label.
    pub fn display_name(&self) -> String {
        match self {
            Record::Site(r) => r.name.clone(),
            Record::Researcher(r) => r.name.clone(),
            Record::TypeNode(r) => r.name.clone(),
            Record::TypeAssociation(r) => format!("{} {} {}", r.subject, r.relation, r.object),
            Record::DataObject(r) => r.name.clone(),
            Record::Collection(r) => r.name.clone(),
            Record::Function(r) => r.name.clone(),
            Record::Tool(r) => format!("{} {}", r.name, r.version),
            Record::Document(r) => r.title.clone(),
            Record::Responsibility(r) => format!("{} {} {}", r.researcher, r.role, r.entity),
            Record::ProcessRun(r) => format!("run of {}", r.function),
        }
    }

    pub fn to_body_value(&self) -> serde_json::Value {
        // serde_json maps are BTree-backed, so keys come out lexicographic.
        match self {
            Record::Site(r) => serde_json::to_value(r),
            Record::Researcher(r) => serde_json::to_value(r),
            Record::TypeNode(r) => serde_json::to_value(r),
            Record::TypeAssociation(r) => serde_json::to_value(r),
            Record::DataObject(r) => serde_json::to_value(r),
            Record::Collection(r) => serde_json::to_value(r),
            Record::Function(r) => serde_json::to_value(r),
            Record::Tool(r) => serde_json::to_value(r),
            Record::Document(r) => serde_json::to_value(r),
            Record::Responsibility(r) => serde_json::to_value(r),
            Record::ProcessRun(r) => serde_json::to_value(r),
        }
        .expect("record serialization cannot fail")
    }

    /// Canonical serialization: compact JSON with lexicographic key order.
    pub fn to_canonical_json(&self) -> String {
        self.to_body_value().to_string()
    }

    pub fn from_body_value(kind: RecordKind, body: serde_json::Value) -> Result<Record, Error> {
        fn de<T: serde::de::DeserializeOwned>(
            v: serde_json::Value,
            wrap: fn(T) -> Record,
        ) -> Result<Record, Error> {
            serde_json::from_value(v)
                .map(wrap)
                .map_err(|e| Error::MalformedId("<body>".to_string(), e.to_string()))
        }
        match kind {
            RecordKind::Site => de(body, Record::Site),
            RecordKind::Researcher => de(body, Record::Researcher),
            RecordKind::TypeNode => de(body, Record::TypeNode),
            RecordKind::TypeAssociation => de(body, Record::TypeAssociation),
            RecordKind::DataObject => de(body, Record::DataObject),
            RecordKind::Collection => de(body, Record::Collection),
            RecordKind::Function => de(body, Record::Function),
            RecordKind::Tool => de(body, Record::Tool),
            RecordKind::Document => de(body, Record::Document),
            RecordKind::Responsibility => de(body, Record::Responsibility),
            RecordKind::ProcessRun => de(body, Record::ProcessRun),
        }
    }

    pub fn from_canonical_json(kind: RecordKind, body: &str) -> Result<Record, Error> {
        let value: serde_json::Value = serde_json::from_str(body)
            .map_err(|e| Error::MalformedId("<body>".to_string(), e.to_string()))?;
        Record::from_body_value(kind, value)
    }
}

/// Every record-local invariant violation, empty when valid. Pure.
pub fn validate_record(record: &Record) -> Vec<Violation> {
    let mut out = Vec::new();
    match record {
        Record::Site(_) | Record::Researcher(_) => {}
        Record::TypeNode(t) => {
            if t.name.is_empty() {
                out.push(Violation::new("name non-empty", "type name is empty"));
            }
            if t.parents.contains(&t.id) {
                out.push(Violation::new("self-parent", format!("{} lists itself as parent", t.id)));
            }
        }
        Record::TypeAssociation(a) => {
            if a.subject == a.object {
                out.push(Violation::new(
                    "self-association",
                    format!("{} associated with itself", a.subject),
                ));
            }
        }
        Record::DataObject(o) => {
            if o.types.is_empty() {
                out.push(Violation::new("types non-empty", format!("{} has no types", o.id)));
            }
            match (&o.created_by, &o.entered_by) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => out.push(Violation::new(
                    "provenance origin",
                    "exactly one of created_by / entered_by must be set",
                )),
            }
            if !is_rfc3339(&o.created_at) {
                out.push(Violation::new(
                    "timestamp format",
                    format!("created_at {:?} is not RFC 3339", o.created_at),
                ));
            }
        }
        Record::Collection(c) => {
            if c.subcollections.contains(&c.id) {
                out.push(Violation::new(
                    "self-subcollection",
                    format!("{} contains itself", c.id),
                ));
            }
        }
        Record::Function(f) => {
            if f.is_converter
                && !(f.input_types.len() == 1
                    && f.output_types.len() == 1
                    && f.input_types[0] != f.output_types[0])
            {
                out.push(Violation::new(
                    "converter arity",
                    "converter needs exactly one input and one output type, differing",
                ));
            }
        }
        Record::Tool(_) => {}
        Record::Document(d) => {
            if d.uri.is_empty() {
                out.push(Violation::new("uri non-empty", format!("{} has empty uri", d.id)));
            }
        }
        Record::Responsibility(_) => {}
        Record::ProcessRun(r) => {
            let inputs: BTreeSet<_> = r.inputs.iter().collect();
            if let Some(dup) = r.outputs.iter().find(|o| inputs.contains(o)) {
                out.push(Violation::new(
                    "input-output overlap",
                    format!("{dup} appears in both inputs and outputs"),
                ));
            }
            for (field, ts) in [("started", &r.started), ("ended", &r.ended)] {
                if !is_rfc3339(ts) {
                    out.push(Violation::new(
                        "timestamp format",
                        format!("{field} {ts:?} is not RFC 3339"),
                    ));
                }
            }
        }
    }
    out
}

/// Classify a record into the four metadata categories. Total and
/// deterministic over every kind.
pub fn classify_record(record: &Record) -> Category {
    classify_kind(record.kind())
}

pub fn classify_kind(kind: RecordKind) -> Category {
    match kind {
        RecordKind::Site | RecordKind::Researcher => Category::Static,
        RecordKind::Collection | RecordKind::Document => Category::Thematic,
        RecordKind::DataObject | RecordKind::ProcessRun => Category::ObjectLevel,
        RecordKind::TypeNode
        | RecordKind::TypeAssociation
        | RecordKind::Function
        | RecordKind::Tool
        | RecordKind::Responsibility => Category::Systemic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn id(s: &str) -> EntityId {
        s.parse().unwrap()
    }

    pub(crate) fn sample_site() -> Site {
        Site {
            id: id("berkeley/site-berkeley"),
            name: "UC Berkeley".to_string(),
            contact: "ops@berkeley".to_string(),
            endpoint: None,
            systems: vec!["quake".to_string()],
        }
    }

    #[test]
    fn site_without_endpoint_is_valid() {
        assert!(validate_record(&Record::Site(sample_site())).is_empty());
    }

    #[test]
    fn object_with_no_types_is_rejected() {
        let o = DataObject {
            id: id("berkeley/obj-1"),
            name: "photo".to_string(),
            location: ObjectLocation {
                site: id("berkeley/site-berkeley"),
                uri: "file:///photo".to_string(),
            },
            types: BTreeSet::new(),
            created_by: None,
            entered_by: Some(id("berkeley/r-1")),
            created_at: "2024-05-01T12:00:00Z".to_string(),
        };
        let v = validate_record(&Record::DataObject(o));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "types non-empty");
    }

    #[test]
    fn converter_with_two_inputs_is_rejected() {
        let f = FunctionDescriptor {
            id: id("berkeley/fn-1"),
            name: "bad".to_string(),
            input_types: vec![id("berkeley/t-1"), id("berkeley/t-2")],
            output_types: vec![id("berkeley/t-3")],
            is_converter: true,
            tool: None,
            enabled: true,
        };
        let v = validate_record(&Record::Function(f));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "converter arity");
    }

    #[test]
    fn classification_matches_contract() {
        let researcher = Record::Researcher(Researcher {
            id: id("berkeley/r-1"),
            name: "R".to_string(),
            contact: String::new(),
            affiliation: id("berkeley/site-berkeley"),
        });
        assert_eq!(classify_record(&researcher), Category::Static);

        let run = Record::ProcessRun(ProcessRun {
            id: id("berkeley/run-1"),
            function: id("berkeley/fn-1"),
            inputs: vec![],
            outputs: vec![],
            host: "quake".to_string(),
            site: id("berkeley/site-berkeley"),
            parameters: BTreeMap::new(),
            started: "2024-05-01T12:00:00Z".to_string(),
            ended: "2024-05-01T12:05:00Z".to_string(),
            status: RunStatus::Succeeded,
        });
        assert_eq!(classify_record(&run), Category::ObjectLevel);

        let assoc = Record::TypeAssociation(TypeAssociation {
            id: id("berkeley/assoc-1"),
            subject: id("berkeley/t-1"),
            object: id("berkeley/t-2"),
            relation: AssociationRelation::RepresentedAs,
        });
        assert_eq!(classify_record(&assoc), Category::Systemic);
    }

    #[test]
    fn canonical_json_round_trips() {
        let rec = Record::Site(sample_site());
        let json = rec.to_canonical_json();
        let back = Record::from_canonical_json(RecordKind::Site, &json).unwrap();
        assert_eq!(back, rec);
        // keys come out sorted
        assert!(json.starts_with("{\"contact\""));
    }
}
