//! Registration surface: how the system is taught. Everything is an explicit
//! entry; no inference, no format sniffing. Referential rules (refs exist,
//! DAGs stay acyclic, uniqueness) are enforced here on top of the record-local
//! validation the store already applies.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{
    now_rfc3339, AssociationRelation, Collection, DataObject, Document, EntityId,
    FunctionDescriptor, ObjectLocation, ProcessRun, Record, RecordKind, Researcher,
    Responsibility, RunStatus, Site, ToolDescriptor, TypeAssociation, TypeKind, TypeNode,
};
use crate::store::{Clock, Store};
use crate::view::CatalogView;

/// Provenance origin for a registered object: derived by a run, or entered by
/// hand. Exactly one.
#[derive(Debug, Clone)]
pub enum Provenance {
    Run(EntityId),
    Researcher(EntityId),
}

#[derive(Debug, Clone)]
pub struct ObjectSpec {
    pub id: Option<EntityId>,
    pub name: String,
    pub site: String,
    pub uri: String,
    pub types: Vec<String>,
    pub provenance: Provenance,
    pub created_at: Option<String>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct OutputSpec {
    #[serde(default)]
    pub id: Option<EntityId>,
    pub name: String,
    pub uri: String,
    pub types: Vec<String>,
    #[serde(default)]
    pub site: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub id: Option<EntityId>,
    pub function: String,
    pub inputs: Vec<EntityId>,
    pub outputs: Vec<OutputSpec>,
    pub host: String,
    pub site: String,
    pub parameters: BTreeMap<String, String>,
    pub started: String,
    pub ended: String,
    pub status: RunStatus,
}

pub struct Catalog {
    store: Arc<Store>,
    clock: Clock,
}

impl Catalog {
    pub fn new(store: Arc<Store>) -> Catalog {
        Catalog {
            store,
            clock: Arc::new(now_rfc3339),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Catalog {
        self.clock = clock;
        self
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    fn now(&self) -> String {
        (self.clock)()
    }

    // ---- reference resolution (names or ids accepted) ----

    fn decode<T>(stored: crate::store::StoredRecord, pick: fn(Record) -> Option<T>) -> Option<T> {
        stored.record().ok().and_then(pick)
    }

    fn resolve<T: Clone>(
        &self,
        kind: RecordKind,
        reference: &str,
        pick: fn(Record) -> Option<T>,
        name_of: fn(&T) -> &str,
    ) -> Option<T> {
        if let Ok(id) = reference.parse::<EntityId>() {
            if let Ok(stored) = self.store.get(kind, &id, None) {
                return Self::decode(stored, pick);
            }
        }
        let matches: Vec<T> = self
            .store
            .scan(kind)
            .into_iter()
            .filter_map(|s| Self::decode(s, pick))
            .filter(|t| name_of(t) == reference)
            .collect();
        if matches.len() == 1 {
            return matches.into_iter().next();
        }
        None
    }

    pub fn resolve_type(&self, reference: &str) -> Result<TypeNode> {
        self.resolve(
            RecordKind::TypeNode,
            reference,
            |r| match r {
                Record::TypeNode(t) => Some(t),
                _ => None,
            },
            |t| &t.name,
        )
        .ok_or_else(|| Error::UnknownType(reference.to_string()))
    }

    pub fn resolve_site(&self, reference: &str) -> Result<Site> {
        self.resolve(
            RecordKind::Site,
            reference,
            |r| match r {
                Record::Site(s) => Some(s),
                _ => None,
            },
            |s| &s.name,
        )
        .ok_or_else(|| Error::UnknownSite(reference.to_string()))
    }

    pub fn resolve_researcher(&self, reference: &str) -> Result<Researcher> {
        self.resolve(
            RecordKind::Researcher,
            reference,
            |r| match r {
                Record::Researcher(x) => Some(x),
                _ => None,
            },
            |x| &x.name,
        )
        .ok_or_else(|| Error::NotFound {
            kind: "researcher".to_string(),
            id: reference.to_string(),
        })
    }

    pub fn resolve_tool(&self, reference: &str) -> Result<ToolDescriptor> {
        self.resolve(
            RecordKind::Tool,
            reference,
            |r| match r {
                Record::Tool(t) => Some(t),
                _ => None,
            },
            |t| &t.name,
        )
        .ok_or_else(|| Error::NotFound {
            kind: "tool".to_string(),
            id: reference.to_string(),
        })
    }

    pub fn resolve_function(&self, reference: &str) -> Result<FunctionDescriptor> {
        self.resolve(
            RecordKind::Function,
            reference,
            |r| match r {
                Record::Function(f) => Some(f),
                _ => None,
            },
            |f| &f.name,
        )
        .ok_or_else(|| Error::UnknownFunction(reference.to_string()))
    }

    // ---- shared write path ----

    /// Natural-key uniqueness: no OTHER record of this kind may match the
    /// key. Same id means a revision update and is allowed through.
    fn check_unique(
        &self,
        kind: RecordKind,
        candidate: &EntityId,
        what: &str,
        key: &str,
        matches: impl Fn(Record) -> Option<EntityId>,
    ) -> Result<()> {
        for stored in self.store.scan(kind) {
            if let Some(existing) = stored.record().ok().and_then(&matches) {
                if &existing != candidate {
                    return Err(Error::Duplicate(format!(
                        "{what} {key} already registered as {existing}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Persist a record. A record whose id already exists becomes a new
    /// revision; re-registering an identical body is a duplicate.
    fn upsert(&self, record: Record) -> Result<Record> {
        let kind = record.kind();
        match self.store.get(kind, record.id(), None) {
            Ok(current) => {
                if current.body == record.to_canonical_json() {
                    return Err(Error::Duplicate(format!(
                        "{} {} already registered with identical content",
                        kind,
                        record.id()
                    )));
                }
                self.store.put(&record, Some(current.revision.rev))?;
            }
            Err(_) => {
                self.store.put(&record, Some(0))?;
            }
        }
        Ok(record)
    }

    // ---- type registry ----

    /// Register (or re-describe) a type. Registering an existing
    /// `(name, kind)` with a different parent set replaces the parents in a
    /// new revision; the DAG invariant is checked before anything is written.
    pub fn register_type(
        &self,
        id: Option<EntityId>,
        name: &str,
        kind: TypeKind,
        parent_refs: &[String],
    ) -> Result<TypeNode> {
        let mut parents = BTreeSet::new();
        for reference in parent_refs {
            let parent = self.resolve_type(reference)?;
            if parent.kind != kind {
                return Err(Error::KindMismatch {
                    parent: parent.name.clone(),
                    parent_kind: parent.kind.to_string(),
                    expected: kind.to_string(),
                });
            }
            parents.insert(parent.id);
        }

        let view = CatalogView::load_kinds(&self.store, &[RecordKind::TypeNode]);
        let existing = view
            .types
            .values()
            .find(|t| t.name == name && t.kind == kind)
            .cloned();
        let node = match existing {
            Some(mut node) => {
                if node.parents == parents {
                    return Err(Error::DuplicateType {
                        name: name.to_string(),
                        kind: kind.to_string(),
                    });
                }
                node.parents = parents;
                node
            }
            None => TypeNode {
                id: id.unwrap_or_else(|| self.store.next_local_id(RecordKind::TypeNode)),
                name: name.to_string(),
                kind,
                parents,
                annotations: BTreeMap::new(),
            },
        };

        // Cycle check over the would-be graph: the node must not be an
        // ancestor of any of its parents.
        let mut edges: BTreeMap<&EntityId, &BTreeSet<EntityId>> =
            view.types.values().map(|t| (&t.id, &t.parents)).collect();
        edges.insert(&node.id, &node.parents);
        if reaches(&edges, &node.parents, &node.id) {
            return Err(Error::CycleRejected(format!(
                "type {} would become its own ancestor",
                node.name
            )));
        }

        self.upsert(Record::TypeNode(node.clone()))?;
        Ok(node)
    }

    pub fn annotate_type(&self, reference: &str, key: &str, value: &str) -> Result<TypeNode> {
        let mut node = self.resolve_type(reference)?;
        node.annotations.insert(key.to_string(), value.to_string());
        self.upsert(Record::TypeNode(node.clone()))?;
        Ok(node)
    }

    /// Record an explicit association between two types. Not a subtype edge.
    pub fn associate_types(
        &self,
        subject_ref: &str,
        object_ref: &str,
        relation: AssociationRelation,
    ) -> Result<TypeAssociation> {
        let subject = self.resolve_type(subject_ref)?;
        let object = self.resolve_type(object_ref)?;
        if subject.id == object.id {
            return Err(Error::SelfAssociation(subject.id.to_string()));
        }
        if relation == AssociationRelation::RepresentedAs
            && !(subject.kind == TypeKind::Semantic && object.kind == TypeKind::Storage)
        {
            return Err(Error::RelationConstraint(format!(
                "represented-as links a semantic type to a storage type, got {} -> {}",
                subject.kind, object.kind
            )));
        }
        let view = CatalogView::load_kinds(&self.store, &[RecordKind::TypeAssociation]);
        if view.associations.values().any(|a| {
            a.subject == subject.id && a.object == object.id && a.relation == relation
        }) {
            return Err(Error::Duplicate(format!(
                "association {} {} {}",
                subject.name, relation, object.name
            )));
        }
        let assoc = TypeAssociation {
            id: self.store.next_local_id(RecordKind::TypeAssociation),
            subject: subject.id,
            object: object.id,
            relation,
        };
        self.upsert(Record::TypeAssociation(assoc.clone()))?;
        Ok(assoc)
    }

    // ---- descriptors ----

    pub fn register_site(
        &self,
        id: Option<EntityId>,
        name: &str,
        contact: &str,
        endpoint: Option<String>,
        systems: Vec<String>,
    ) -> Result<Site> {
        let id = id.unwrap_or_else(|| self.store.next_local_id(RecordKind::Site));
        self.check_unique(RecordKind::Site, &id, "site", name, |r| match r {
            Record::Site(s) if s.name == name => Some(s.id),
            _ => None,
        })?;
        let site = Site {
            id,
            name: name.to_string(),
            contact: contact.to_string(),
            endpoint,
            systems,
        };
        self.upsert(Record::Site(site.clone()))?;
        Ok(site)
    }

    pub fn register_researcher(
        &self,
        id: Option<EntityId>,
        name: &str,
        contact: &str,
        affiliation_ref: &str,
    ) -> Result<Researcher> {
        let affiliation = self.resolve_site(affiliation_ref)?;
        let id = id.unwrap_or_else(|| self.store.next_local_id(RecordKind::Researcher));
        self.check_unique(RecordKind::Researcher, &id, "researcher", name, |r| match r {
            Record::Researcher(x) if x.name == name => Some(x.id),
            _ => None,
        })?;
        let researcher = Researcher {
            id,
            name: name.to_string(),
            contact: contact.to_string(),
            affiliation: affiliation.id,
        };
        self.upsert(Record::Researcher(researcher.clone()))?;
        Ok(researcher)
    }

    pub fn register_tool(
        &self,
        id: Option<EntityId>,
        name: &str,
        version: &str,
        handles_refs: &[String],
    ) -> Result<ToolDescriptor> {
        let mut handles = BTreeSet::new();
        for reference in handles_refs {
            handles.insert(self.resolve_type(reference)?.id);
        }
        let id = id.unwrap_or_else(|| self.store.next_local_id(RecordKind::Tool));
        self.check_unique(RecordKind::Tool, &id, "tool", &format!("({name}, {version})"), |r| {
            match r {
                Record::Tool(t) if t.name == name && t.version == version => Some(t.id),
                _ => None,
            }
        })?;
        let tool = ToolDescriptor {
            id,
            name: name.to_string(),
            version: version.to_string(),
            handles_types: handles,
            favorite_of: BTreeSet::new(),
        };
        self.upsert(Record::Tool(tool.clone()))?;
        Ok(tool)
    }

    pub fn register_document(
        &self,
        id: Option<EntityId>,
        title: &str,
        uri: &str,
        about_refs: &[String],
        author_refs: &[String],
    ) -> Result<Document> {
        let mut about = BTreeSet::new();
        for reference in about_refs {
            about.insert(self.resolve_type(reference)?.id);
        }
        let mut authors = BTreeSet::new();
        for reference in author_refs {
            authors.insert(self.resolve_researcher(reference)?.id);
        }
        let id = id.unwrap_or_else(|| self.store.next_local_id(RecordKind::Document));
        self.check_unique(RecordKind::Document, &id, "document", title, |r| match r {
            Record::Document(d) if d.title == title && d.uri == uri => Some(d.id),
            _ => None,
        })?;
        let doc = Document {
            id,
            title: title.to_string(),
            uri: uri.to_string(),
            about_types: about,
            authors,
        };
        self.upsert(Record::Document(doc.clone()))?;
        Ok(doc)
    }

    /// Register or re-describe a collection. Membership edges are validated
    /// against the collection DAG before writing.
    pub fn register_collection(
        &self,
        id: Option<EntityId>,
        name: &str,
        member_refs: &[String],
        subcollection_refs: &[String],
    ) -> Result<Collection> {
        let view = CatalogView::load_kinds(&self.store, &[RecordKind::Collection]);
        let mut members = BTreeSet::new();
        for reference in member_refs {
            let id: EntityId = reference
                .parse()
                .map_err(|_| Error::NotFound {
                    kind: "data_object".to_string(),
                    id: reference.clone(),
                })?;
            if !self.store.exists(RecordKind::DataObject, &id) {
                return Err(Error::NotFound {
                    kind: "data_object".to_string(),
                    id: reference.clone(),
                });
            }
            members.insert(id);
        }
        let mut subcollections = BTreeSet::new();
        for reference in subcollection_refs {
            let sub = view
                .collections
                .values()
                .find(|c| c.name == reference.as_str() || c.id.to_string() == *reference)
                .ok_or_else(|| Error::NotFound {
                    kind: "collection".to_string(),
                    id: reference.clone(),
                })?;
            subcollections.insert(sub.id.clone());
        }

        let existing = id.as_ref().and_then(|i| view.collections.get(i).cloned());
        if let Some(other) = view
            .collections
            .values()
            .find(|c| c.name == name && Some(&c.id) != id.as_ref())
        {
            return Err(Error::Duplicate(format!(
                "collection `{name}` already registered as {}",
                other.id
            )));
        }
        let collection = match existing {
            Some(mut c) => {
                c.name = name.to_string();
                c.members = members;
                c.subcollections = subcollections;
                c
            }
            None => Collection {
                id: id.unwrap_or_else(|| self.store.next_local_id(RecordKind::Collection)),
                name: name.to_string(),
                members,
                subcollections,
            },
        };

        let mut edges: BTreeMap<&EntityId, &BTreeSet<EntityId>> = view
            .collections
            .values()
            .map(|c| (&c.id, &c.subcollections))
            .collect();
        edges.insert(&collection.id, &collection.subcollections);
        if reaches(&edges, &collection.subcollections, &collection.id) {
            return Err(Error::CycleRejected(format!(
                "collection {} would contain itself",
                collection.name
            )));
        }

        self.upsert(Record::Collection(collection.clone()))?;
        Ok(collection)
    }

    pub fn mark_favorite(&self, tool_ref: &str, researcher_ref: &str) -> Result<ToolDescriptor> {
        let mut tool = self.resolve_tool(tool_ref)?;
        let researcher = self.resolve_researcher(researcher_ref)?;
        if tool.favorite_of.contains(&researcher.id) {
            return Ok(tool); // idempotent, no new revision
        }
        tool.favorite_of.insert(researcher.id);
        self.upsert(Record::Tool(tool.clone()))?;
        Ok(tool)
    }

    pub fn register_function(
        &self,
        id: Option<EntityId>,
        name: &str,
        input_refs: &[String],
        output_refs: &[String],
        is_converter: bool,
        tool_ref: Option<&str>,
    ) -> Result<FunctionDescriptor> {
        let inputs: Vec<EntityId> = input_refs
            .iter()
            .map(|r| self.resolve_type(r).map(|t| t.id))
            .collect::<Result<_>>()?;
        let outputs: Vec<EntityId> = output_refs
            .iter()
            .map(|r| self.resolve_type(r).map(|t| t.id))
            .collect::<Result<_>>()?;
        if is_converter && !(inputs.len() == 1 && outputs.len() == 1 && inputs[0] != outputs[0]) {
            return Err(Error::ConverterArity);
        }
        let tool = match tool_ref {
            Some(r) => Some(self.resolve_tool(r)?.id),
            None => None,
        };
        let id = id.unwrap_or_else(|| self.store.next_local_id(RecordKind::Function));
        self.check_unique(RecordKind::Function, &id, "function", name, |r| match r {
            Record::Function(f)
                if f.name == name && f.input_types == inputs && f.output_types == outputs =>
            {
                Some(f.id)
            }
            _ => None,
        })?;
        let function = FunctionDescriptor {
            id,
            name: name.to_string(),
            input_types: inputs,
            output_types: outputs,
            is_converter,
            tool,
            enabled: true,
        };
        self.upsert(Record::Function(function.clone()))?;
        Ok(function)
    }

    pub fn set_function_enabled(&self, function_ref: &str, enabled: bool) -> Result<FunctionDescriptor> {
        let mut function = self.resolve_function(function_ref)?;
        if function.enabled == enabled {
            return Ok(function);
        }
        function.enabled = enabled;
        self.upsert(Record::Function(function.clone()))?;
        Ok(function)
    }

    pub fn assign_responsibility(
        &self,
        entity_ref: &str,
        researcher_ref: &str,
        role: &str,
    ) -> Result<Responsibility> {
        let entity: EntityId = entity_ref.parse().map_err(|_| Error::NotFound {
            kind: "entity".to_string(),
            id: entity_ref.to_string(),
        })?;
        if !self.entity_exists(&entity) {
            return Err(Error::NotFound {
                kind: "entity".to_string(),
                id: entity_ref.to_string(),
            });
        }
        let researcher = self.resolve_researcher(researcher_ref)?;
        let view = CatalogView::load_kinds(&self.store, &[RecordKind::Responsibility]);
        if view
            .responsibilities
            .values()
            .any(|r| r.entity == entity && r.researcher == researcher.id && r.role == role)
        {
            return Err(Error::Duplicate(format!(
                "responsibility ({entity}, {}, {role})",
                researcher.id
            )));
        }
        let resp = Responsibility {
            id: self.store.next_local_id(RecordKind::Responsibility),
            entity,
            researcher: researcher.id,
            role: role.to_string(),
        };
        self.upsert(Record::Responsibility(resp.clone()))?;
        Ok(resp)
    }

    // ---- objects and runs ----

    pub fn register_object(&self, spec: ObjectSpec) -> Result<DataObject> {
        if spec.types.is_empty() {
            return Err(Error::EmptyTypes);
        }
        let site = self.resolve_site(&spec.site)?;
        let mut types = BTreeSet::new();
        for reference in &spec.types {
            types.insert(self.resolve_type(reference)?.id);
        }
        let (created_by, entered_by) = match &spec.provenance {
            Provenance::Run(run) => {
                if run.site() == self.store.site()
                    && !self.store.exists(RecordKind::ProcessRun, run)
                {
                    return Err(Error::NotFound {
                        kind: "process_run".to_string(),
                        id: run.to_string(),
                    });
                }
                (Some(run.clone()), None)
            }
            Provenance::Researcher(r) => {
                let researcher = self.resolve_researcher(&r.to_string())?;
                (None, Some(researcher.id))
            }
        };
        let id = spec
            .id
            .unwrap_or_else(|| self.store.next_local_id(RecordKind::DataObject));
        // one metadata record per (site, uri)
        let (key_site, key_uri) = (site.id.clone(), spec.uri.clone());
        self.check_unique(
            RecordKind::DataObject,
            &id,
            "object",
            &format!("at {key_site} uri {key_uri}"),
            |r| match r {
                Record::DataObject(o)
                    if o.location.site == key_site && o.location.uri == key_uri =>
                {
                    Some(o.id)
                }
                _ => None,
            },
        )?;
        let object = DataObject {
            id,
            name: spec.name,
            location: ObjectLocation {
                site: site.id,
                uri: spec.uri,
            },
            types,
            created_by,
            entered_by,
            created_at: spec.created_at.unwrap_or_else(|| self.now()),
        };
        self.upsert(Record::DataObject(object.clone()))?;
        Ok(object)
    }

    /// Register a fully-formed canonical record, enforcing the same
    /// referential rules as the typed operations. This is the entry point for
    /// bulk ingest and the service's record endpoint.
    pub fn register_record(&self, record: Record) -> Result<Record> {
        let view = CatalogView::load(&self.store);
        match &record {
            Record::Site(s) => {
                if let Some(other) = view
                    .sites
                    .values()
                    .find(|x| x.name == s.name && x.id != s.id)
                {
                    return Err(Error::Duplicate(format!(
                        "site `{}` already registered as {}",
                        s.name, other.id
                    )));
                }
            }
            Record::Researcher(r) => {
                if !view.sites.contains_key(&r.affiliation) {
                    return Err(Error::UnknownSite(r.affiliation.to_string()));
                }
                if let Some(other) = view
                    .researchers
                    .values()
                    .find(|x| x.name == r.name && x.id != r.id)
                {
                    return Err(Error::Duplicate(format!(
                        "researcher `{}` already registered as {}",
                        r.name, other.id
                    )));
                }
            }
            Record::TypeNode(t) => {
                for parent in &t.parents {
                    let p = view
                        .types
                        .get(parent)
                        .ok_or_else(|| Error::UnknownType(parent.to_string()))?;
                    if p.kind != t.kind {
                        return Err(Error::KindMismatch {
                            parent: p.name.clone(),
                            parent_kind: p.kind.to_string(),
                            expected: t.kind.to_string(),
                        });
                    }
                }
                if view
                    .types
                    .values()
                    .any(|x| x.name == t.name && x.kind == t.kind && x.id != t.id)
                {
                    return Err(Error::DuplicateType {
                        name: t.name.clone(),
                        kind: t.kind.to_string(),
                    });
                }
                let mut edges: BTreeMap<&EntityId, &BTreeSet<EntityId>> =
                    view.types.values().map(|x| (&x.id, &x.parents)).collect();
                edges.insert(&t.id, &t.parents);
                if reaches(&edges, &t.parents, &t.id) {
                    return Err(Error::CycleRejected(format!(
                        "type {} would become its own ancestor",
                        t.name
                    )));
                }
            }
            Record::TypeAssociation(a) => {
                if a.subject == a.object {
                    return Err(Error::SelfAssociation(a.subject.to_string()));
                }
                let subject = view
                    .types
                    .get(&a.subject)
                    .ok_or_else(|| Error::UnknownType(a.subject.to_string()))?;
                let object = view
                    .types
                    .get(&a.object)
                    .ok_or_else(|| Error::UnknownType(a.object.to_string()))?;
                if a.relation == AssociationRelation::RepresentedAs
                    && !(subject.kind == TypeKind::Semantic && object.kind == TypeKind::Storage)
                {
                    return Err(Error::RelationConstraint(format!(
                        "represented-as links a semantic type to a storage type, got {} -> {}",
                        subject.kind, object.kind
                    )));
                }
                if view.associations.values().any(|x| {
                    x.id != a.id
                        && x.subject == a.subject
                        && x.object == a.object
                        && x.relation == a.relation
                }) {
                    return Err(Error::Duplicate(format!(
                        "association {} {} {}",
                        subject.name, a.relation, object.name
                    )));
                }
            }
            Record::DataObject(o) => {
                if o.types.is_empty() {
                    return Err(Error::EmptyTypes);
                }
                if !view.sites.contains_key(&o.location.site) {
                    return Err(Error::UnknownSite(o.location.site.to_string()));
                }
                for ty in &o.types {
                    if !view.types.contains_key(ty) {
                        return Err(Error::UnknownType(ty.to_string()));
                    }
                }
                if let Some(run_id) = &o.created_by {
                    if let Some(run) = view.runs.get(run_id) {
                        if !run.outputs.contains(&o.id) {
                            return Err(Error::ValidationFailed {
                                id: o.id.to_string(),
                                violations: vec![crate::model::Violation {
                                    rule: "created_by",
                                    detail: format!("{run_id} does not list {} as output", o.id),
                                }],
                            });
                        }
                    } else if run_id.site() == self.store.site() {
                        return Err(Error::NotFound {
                            kind: "process_run".to_string(),
                            id: run_id.to_string(),
                        });
                    }
                }
                if let Some(researcher) = &o.entered_by {
                    if researcher.site() == self.store.site()
                        && !view.researchers.contains_key(researcher)
                    {
                        return Err(Error::NotFound {
                            kind: "researcher".to_string(),
                            id: researcher.to_string(),
                        });
                    }
                }
                if let Some(other) = view.objects.values().find(|x| {
                    x.location == o.location && x.id != o.id
                }) {
                    return Err(Error::Duplicate(format!(
                        "object at {} uri {} already registered as {}",
                        o.location.site, o.location.uri, other.id
                    )));
                }
            }
            Record::Collection(c) => {
                for member in &c.members {
                    if !view.objects.contains_key(member) {
                        return Err(Error::NotFound {
                            kind: "data_object".to_string(),
                            id: member.to_string(),
                        });
                    }
                }
                for sub in &c.subcollections {
                    if !view.collections.contains_key(sub) {
                        return Err(Error::NotFound {
                            kind: "collection".to_string(),
                            id: sub.to_string(),
                        });
                    }
                }
                if let Some(other) = view
                    .collections
                    .values()
                    .find(|x| x.name == c.name && x.id != c.id)
                {
                    return Err(Error::Duplicate(format!(
                        "collection `{}` already registered as {}",
                        c.name, other.id
                    )));
                }
                let mut edges: BTreeMap<&EntityId, &BTreeSet<EntityId>> = view
                    .collections
                    .values()
                    .map(|x| (&x.id, &x.subcollections))
                    .collect();
                edges.insert(&c.id, &c.subcollections);
                if reaches(&edges, &c.subcollections, &c.id) {
                    return Err(Error::CycleRejected(format!(
                        "collection {} would contain itself",
                        c.name
                    )));
                }
            }
            Record::Function(f) => {
                for ty in f.input_types.iter().chain(&f.output_types) {
                    if !view.types.contains_key(ty) {
                        return Err(Error::UnknownType(ty.to_string()));
                    }
                }
                if f.is_converter
                    && !(f.input_types.len() == 1
                        && f.output_types.len() == 1
                        && f.input_types[0] != f.output_types[0])
                {
                    return Err(Error::ConverterArity);
                }
                if let Some(tool) = &f.tool {
                    if !view.tools.contains_key(tool) {
                        return Err(Error::NotFound {
                            kind: "tool".to_string(),
                            id: tool.to_string(),
                        });
                    }
                }
                if let Some(other) = view.functions.values().find(|x| {
                    x.name == f.name
                        && x.input_types == f.input_types
                        && x.output_types == f.output_types
                        && x.id != f.id
                }) {
                    return Err(Error::Duplicate(format!(
                        "function `{}` already registered as {}",
                        f.name, other.id
                    )));
                }
            }
            Record::Tool(t) => {
                for ty in &t.handles_types {
                    if !view.types.contains_key(ty) {
                        return Err(Error::UnknownType(ty.to_string()));
                    }
                }
                if view
                    .tools
                    .values()
                    .any(|x| x.name == t.name && x.version == t.version && x.id != t.id)
                {
                    return Err(Error::Duplicate(format!("tool ({}, {})", t.name, t.version)));
                }
            }
            Record::Document(d) => {
                for ty in &d.about_types {
                    if !view.types.contains_key(ty) {
                        return Err(Error::UnknownType(ty.to_string()));
                    }
                }
                for author in &d.authors {
                    if !view.researchers.contains_key(author) {
                        return Err(Error::NotFound {
                            kind: "researcher".to_string(),
                            id: author.to_string(),
                        });
                    }
                }
                if let Some(other) = view
                    .documents
                    .values()
                    .find(|x| x.title == d.title && x.uri == d.uri && x.id != d.id)
                {
                    return Err(Error::Duplicate(format!(
                        "document `{}` already registered as {}",
                        d.title, other.id
                    )));
                }
            }
            Record::Responsibility(r) => {
                if view.any_record(&r.entity).is_none() {
                    return Err(Error::NotFound {
                        kind: "entity".to_string(),
                        id: r.entity.to_string(),
                    });
                }
                if !view.researchers.contains_key(&r.researcher) {
                    return Err(Error::NotFound {
                        kind: "researcher".to_string(),
                        id: r.researcher.to_string(),
                    });
                }
                if view.responsibilities.values().any(|x| {
                    x.id != r.id
                        && x.entity == r.entity
                        && x.researcher == r.researcher
                        && x.role == r.role
                }) {
                    return Err(Error::Duplicate(format!(
                        "responsibility ({}, {}, {})",
                        r.entity, r.researcher, r.role
                    )));
                }
            }
            Record::ProcessRun(run) => {
                if !view.functions.contains_key(&run.function) {
                    return Err(Error::UnknownFunction(run.function.to_string()));
                }
                for input in &run.inputs {
                    if input.site() == self.store.site() && !view.objects.contains_key(input) {
                        return Err(Error::NotFound {
                            kind: "data_object".to_string(),
                            id: input.to_string(),
                        });
                    }
                }
                let inputs: BTreeSet<&EntityId> = run.inputs.iter().collect();
                if let Some(overlap) = run.outputs.iter().find(|o| inputs.contains(o)) {
                    return Err(Error::InputOutputOverlap(overlap.to_string()));
                }
                for output in &run.outputs {
                    if let Some(existing) = view.objects.get(output) {
                        if existing.created_by.as_ref() != Some(&run.id) {
                            return Err(Error::Duplicate(format!(
                                "output object {output} already exists with other provenance"
                            )));
                        }
                    }
                }
                for input in &run.inputs {
                    let upstream = object_ancestors(&view, input);
                    if let Some(bad) = run.outputs.iter().find(|o| upstream.contains(*o)) {
                        return Err(Error::CycleRejected(format!(
                            "output {bad} is an ancestor of input {input}"
                        )));
                    }
                }
            }
        }
        self.upsert(record)
    }

    /// Record an executed run and its freshly produced outputs atomically.
    /// Inputs at this site must exist; inputs with a foreign site token are
    /// remote references, resolved later by federation.
    pub fn record_run(&self, spec: RunSpec) -> Result<(ProcessRun, Vec<DataObject>)> {
        let function = self.resolve_function(&spec.function)?;
        let site = self.resolve_site(&spec.site)?;

        for input in &spec.inputs {
            if input.site() == self.store.site()
                && !self.store.exists(RecordKind::DataObject, input)
            {
                return Err(Error::NotFound {
                    kind: "data_object".to_string(),
                    id: input.to_string(),
                });
            }
        }

        let run_id = spec
            .id
            .unwrap_or_else(|| self.store.next_local_id(RecordKind::ProcessRun));

        // Resolve output ids up front so overlap and cycle checks can run
        // before anything is written.
        let mut output_ids = Vec::with_capacity(spec.outputs.len());
        {
            let mut n = 0u64;
            for out in &spec.outputs {
                let id = match &out.id {
                    Some(id) => id.clone(),
                    None => loop {
                        n += 1;
                        let candidate =
                            EntityId::new(self.store.site(), format!("{}-out-{n}", run_id.local()))?;
                        if !self.store.exists(RecordKind::DataObject, &candidate)
                            && !output_ids.contains(&candidate)
                        {
                            break candidate;
                        }
                    },
                };
                output_ids.push(id);
            }
        }

        let input_set: BTreeSet<&EntityId> = spec.inputs.iter().collect();
        if let Some(overlap) = output_ids.iter().find(|o| input_set.contains(o)) {
            return Err(Error::InputOutputOverlap(overlap.to_string()));
        }

        // The run may only consume objects that are not downstream of its
        // outputs; otherwise input -> run -> output would close a loop.
        for input in &spec.inputs {
            let upstream = self.object_ancestors_live(input);
            if let Some(bad) = output_ids.iter().find(|o| upstream.contains(*o)) {
                return Err(Error::CycleRejected(format!(
                    "output {bad} is an ancestor of input {input}"
                )));
            }
        }

        if let Some(existing) = output_ids
            .iter()
            .find(|o| self.store.exists(RecordKind::DataObject, o))
        {
            return Err(Error::Duplicate(format!("output object {existing} already exists")));
        }

        let run = ProcessRun {
            id: run_id.clone(),
            function: function.id,
            inputs: spec.inputs.clone(),
            outputs: output_ids.clone(),
            host: spec.host,
            site: site.id.clone(),
            parameters: spec.parameters,
            started: spec.started,
            ended: spec.ended.clone(),
            status: spec.status,
        };

        let mut batch = vec![Record::ProcessRun(run.clone())];
        let mut expected = vec![Some(0)];
        let mut outputs = Vec::with_capacity(spec.outputs.len());
        for (out, id) in spec.outputs.iter().zip(&output_ids) {
            let out_site = match &out.site {
                Some(s) => self.resolve_site(s)?.id,
                None => site.id.clone(),
            };
            let mut types = BTreeSet::new();
            for reference in &out.types {
                types.insert(self.resolve_type(reference)?.id);
            }
            if types.is_empty() {
                return Err(Error::EmptyTypes);
            }
            let object = DataObject {
                id: id.clone(),
                name: out.name.clone(),
                location: ObjectLocation {
                    site: out_site,
                    uri: out.uri.clone(),
                },
                types,
                created_by: Some(run_id.clone()),
                entered_by: None,
                created_at: spec.ended.clone(),
            };
            batch.push(Record::DataObject(object.clone()));
            expected.push(Some(0));
            outputs.push(object);
        }

        self.store.put_batch(&batch, &expected)?;
        Ok((run, outputs))
    }

    /// Does any record of any kind carry this id?
    fn entity_exists(&self, id: &EntityId) -> bool {
        RecordKind::ALL
            .iter()
            .any(|kind| self.store.exists(*kind, id))
    }

    /// Objects upstream of `object` (reflexive), walking created_by links
    /// through the store and decoding only what the walk touches.
    fn object_ancestors_live(&self, object: &EntityId) -> BTreeSet<EntityId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![object.clone()];
        while let Some(id) = stack.pop() {
            if !seen.insert(id.clone()) {
                continue;
            }
            let Ok(stored) = self.store.get(RecordKind::DataObject, &id, None) else {
                continue; // remote stub
            };
            let Ok(Record::DataObject(obj)) = stored.record() else {
                continue;
            };
            if let Some(run_id) = &obj.created_by {
                if let Ok(run_stored) = self.store.get(RecordKind::ProcessRun, run_id, None) {
                    if let Ok(Record::ProcessRun(run)) = run_stored.record() {
                        stack.extend(run.inputs.iter().cloned());
                    }
                }
            }
        }
        seen
    }
}

/// Walk `edges` upward from `start` nodes; true if `target` is reachable.
fn reaches(
    edges: &BTreeMap<&EntityId, &BTreeSet<EntityId>>,
    start: &BTreeSet<EntityId>,
    target: &EntityId,
) -> bool {
    let mut stack: Vec<&EntityId> = start.iter().collect();
    let mut seen: BTreeSet<&EntityId> = BTreeSet::new();
    while let Some(node) = stack.pop() {
        if node == target {
            return true;
        }
        if !seen.insert(node) {
            continue;
        }
        if let Some(parents) = edges.get(node) {
            stack.extend(parents.iter());
        }
    }
    false
}

/// All objects upstream of `object` (reflexive) through created_by links.
fn object_ancestors(view: &CatalogView, object: &EntityId) -> BTreeSet<EntityId> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![object.clone()];
    while let Some(id) = stack.pop() {
        if !seen.insert(id.clone()) {
            continue;
        }
        let Some(obj) = view.objects.get(&id) else {
            continue; // remote stub
        };
        if let Some(run_id) = &obj.created_by {
            if let Some(run) = view.runs.get(run_id) {
                stack.extend(run.inputs.iter().cloned());
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> Catalog {
        Catalog::new(Arc::new(Store::in_memory("berkeley")))
    }

    fn seeded() -> Catalog {
        let c = catalog();
        c.register_site(Some("berkeley/site-b".parse().unwrap()), "UC Berkeley", "", None, vec!["quake".into()])
            .unwrap();
        c.register_researcher(Some("berkeley/r-1".parse().unwrap()), "R1", "", "UC Berkeley")
            .unwrap();
        c
    }

    #[test]
    fn register_first_types() {
        let c = catalog();
        let photo = c
            .register_type(None, "REGIS Aerial Photograph", TypeKind::Semantic, &[])
            .unwrap();
        assert_eq!(photo.id.to_string(), "berkeley/type-1");
        let hdf5 = c.register_type(None, "HDF5", TypeKind::Storage, &[]).unwrap();
        assert_eq!(hdf5.kind, TypeKind::Storage);
    }

    #[test]
    fn type_cycle_is_rejected() {
        let c = catalog();
        c.register_type(None, "B", TypeKind::Semantic, &[]).unwrap();
        c.register_type(None, "A", TypeKind::Semantic, &["B".into()]).unwrap();
        // re-describing B with parent A would close the loop
        let err = c
            .register_type(None, "B", TypeKind::Semantic, &["A".into()])
            .unwrap_err();
        assert_eq!(err.code(), "CycleRejected");
    }

    #[test]
    fn duplicate_and_kind_mismatch() {
        let c = catalog();
        c.register_type(None, "GIF", TypeKind::Storage, &[]).unwrap();
        assert_eq!(
            c.register_type(None, "GIF", TypeKind::Storage, &[]).unwrap_err().code(),
            "DuplicateType"
        );
        c.register_type(None, "Image", TypeKind::Semantic, &[]).unwrap();
        assert_eq!(
            c.register_type(None, "Raster", TypeKind::Storage, &["Image".into()])
                .unwrap_err()
                .code(),
            "KindMismatch"
        );
    }

    #[test]
    fn association_rules() {
        let c = catalog();
        c.register_type(None, "REGIS Aerial Photograph", TypeKind::Semantic, &[]).unwrap();
        c.register_type(None, "GIF", TypeKind::Storage, &[]).unwrap();
        c.associate_types("REGIS Aerial Photograph", "GIF", AssociationRelation::RepresentedAs)
            .unwrap();
        assert_eq!(
            c.associate_types("GIF", "GIF", AssociationRelation::RepresentedAs)
                .unwrap_err()
                .code(),
            "SelfAssociation"
        );
        assert_eq!(
            c.associate_types("REGIS Aerial Photograph", "GIF", AssociationRelation::RepresentedAs)
                .unwrap_err()
                .code(),
            "Duplicate"
        );
        // represented-as must go semantic -> storage
        c.register_type(None, "Photo", TypeKind::Semantic, &[]).unwrap();
        assert_eq!(
            c.associate_types("GIF", "Photo", AssociationRelation::RepresentedAs)
                .unwrap_err()
                .code(),
            "RelationConstraint"
        );
    }

    #[test]
    fn dual_typed_object() {
        let c = seeded();
        c.register_type(None, "REGIS Aerial Photograph", TypeKind::Semantic, &[]).unwrap();
        c.register_type(None, "GIF", TypeKind::Storage, &[]).unwrap();
        let obj = c
            .register_object(ObjectSpec {
                id: None,
                name: "photo-17".into(),
                site: "UC Berkeley".into(),
                uri: "file:///photos/17.gif".into(),
                types: vec!["REGIS Aerial Photograph".into(), "GIF".into()],
                provenance: Provenance::Researcher("berkeley/r-1".parse().unwrap()),
                created_at: Some("2024-05-01T12:00:00Z".into()),
            })
            .unwrap();
        assert_eq!(obj.types.len(), 2);
        assert!(obj.created_by.is_none());
        assert!(obj.entered_by.is_some());
    }

    #[test]
    fn object_requires_types() {
        let c = seeded();
        let err = c
            .register_object(ObjectSpec {
                id: None,
                name: "empty".into(),
                site: "UC Berkeley".into(),
                uri: "file:///x".into(),
                types: vec![],
                provenance: Provenance::Researcher("berkeley/r-1".parse().unwrap()),
                created_at: None,
            })
            .unwrap_err();
        assert_eq!(err.code(), "EmptyTypes");
    }

    #[test]
    fn favorites_are_idempotent() {
        let c = seeded();
        c.register_type(None, "GIF", TypeKind::Storage, &[]).unwrap();
        c.register_tool(None, "ImageViz", "2.1", &["GIF".into()]).unwrap();
        let t1 = c.mark_favorite("ImageViz", "R1").unwrap();
        assert_eq!(t1.favorite_of.len(), 1);
        let t2 = c.mark_favorite("ImageViz", "R1").unwrap();
        assert_eq!(t2.favorite_of, t1.favorite_of);
        assert_eq!(c.mark_favorite("ImageViz", "nobody").unwrap_err().code(), "NotFound");
    }

    #[test]
    fn converter_arity_enforced() {
        let c = catalog();
        c.register_type(None, "A", TypeKind::Storage, &[]).unwrap();
        c.register_type(None, "B", TypeKind::Storage, &[]).unwrap();
        c.register_type(None, "C", TypeKind::Storage, &[]).unwrap();
        assert_eq!(
            c.register_function(None, "bad", &["A".into(), "B".into()], &["C".into()], true, None)
                .unwrap_err()
                .code(),
            "ConverterArity"
        );
        let f = c
            .register_function(None, "a2b", &["A".into()], &["B".into()], true, None)
            .unwrap();
        assert!(f.enabled);
    }

    #[test]
    fn collection_cycle_rejected() {
        let c = catalog();
        let c1 = c.register_collection(Some("berkeley/c-1".parse().unwrap()), "C1", &[], &[]).unwrap();
        let c2 = c
            .register_collection(Some("berkeley/c-2".parse().unwrap()), "C2", &[], &["C1".into()])
            .unwrap();
        let err = c
            .register_collection(Some(c1.id.clone()), "C1", &[], &[c2.id.to_string()])
            .unwrap_err();
        assert_eq!(err.code(), "CycleRejected");
    }

    #[test]
    fn responsibility_rules() {
        let c = seeded();
        let t = c.register_type(None, "GIF", TypeKind::Storage, &[]).unwrap();
        c.assign_responsibility(&t.id.to_string(), "R1", "owner").unwrap();
        assert_eq!(
            c.assign_responsibility(&t.id.to_string(), "R1", "owner").unwrap_err().code(),
            "Duplicate"
        );
        assert_eq!(
            c.assign_responsibility("berkeley/nothing", "R1", "owner").unwrap_err().code(),
            "NotFound"
        );
    }

    fn run_spec(c: &Catalog, inputs: Vec<EntityId>, outputs: Vec<OutputSpec>) -> RunSpec {
        let _ = c;
        RunSpec {
            id: None,
            function: "ndvi".into(),
            inputs,
            outputs,
            host: "quake".into(),
            site: "UC Berkeley".into(),
            parameters: BTreeMap::new(),
            started: "2024-05-01T12:00:00Z".into(),
            ended: "2024-05-01T12:05:00Z".into(),
            status: RunStatus::Succeeded,
        }
    }

    fn out_spec(name: &str, ty: &str) -> OutputSpec {
        OutputSpec {
            id: None,
            name: name.into(),
            uri: format!("file:///{name}"),
            types: vec![ty.into()],
            site: None,
        }
    }

    #[test]
    fn record_run_links_outputs() {
        let c = seeded();
        c.register_type(None, "AVHRR", TypeKind::Semantic, &[]).unwrap();
        c.register_type(None, "NDVI Grid", TypeKind::Semantic, &[]).unwrap();
        c.register_function(None, "ndvi", &["AVHRR".into()], &["NDVI Grid".into()], false, None)
            .unwrap();
        let raw = c
            .register_object(ObjectSpec {
                id: None,
                name: "raw".into(),
                site: "UC Berkeley".into(),
                uri: "file:///raw".into(),
                types: vec!["AVHRR".into()],
                provenance: Provenance::Researcher("berkeley/r-1".parse().unwrap()),
                created_at: Some("2024-05-01T11:00:00Z".into()),
            })
            .unwrap();
        let (run, outputs) = c
            .record_run(run_spec(&c, vec![raw.id.clone()], vec![out_spec("grid", "NDVI Grid")]))
            .unwrap();
        assert_eq!(outputs.len(), 1);
        assert_eq!(outputs[0].created_by.as_ref(), Some(&run.id));
        assert_eq!(run.outputs, vec![outputs[0].id.clone()]);
    }

    #[test]
    fn record_run_rejects_overlap_and_remote_inputs_allowed() {
        let c = seeded();
        c.register_type(None, "AVHRR", TypeKind::Semantic, &[]).unwrap();
        c.register_type(None, "NDVI Grid", TypeKind::Semantic, &[]).unwrap();
        c.register_function(None, "ndvi", &["AVHRR".into()], &["NDVI Grid".into()], false, None)
            .unwrap();
        let raw = c
            .register_object(ObjectSpec {
                id: None,
                name: "raw".into(),
                site: "UC Berkeley".into(),
                uri: "file:///raw".into(),
                types: vec!["AVHRR".into()],
                provenance: Provenance::Researcher("berkeley/r-1".parse().unwrap()),
                created_at: None,
            })
            .unwrap();
        // same object as input and output
        let err = c
            .record_run(run_spec(
                &c,
                vec![raw.id.clone()],
                vec![OutputSpec {
                    id: Some(raw.id.clone()),
                    name: "raw".into(),
                    uri: "file:///raw".into(),
                    types: vec!["AVHRR".into()],
                    site: None,
                }],
            ))
            .unwrap_err();
        assert_eq!(err.code(), "InputOutputOverlap");

        // unpublished remote input is fine
        let remote: EntityId = "scripps/obj-9".parse().unwrap();
        let (run, _) = c
            .record_run(run_spec(&c, vec![remote.clone()], vec![out_spec("grid", "NDVI Grid")]))
            .unwrap();
        assert!(run.inputs.contains(&remote));

        // but a local input must exist
        let missing: EntityId = "berkeley/obj-999".parse().unwrap();
        let err = c
            .record_run(run_spec(&c, vec![missing], vec![out_spec("grid2", "NDVI Grid")]))
            .unwrap_err();
        assert_eq!(err.code(), "NotFound");
    }

    #[test]
    fn record_run_rejects_cycles_atomically() {
        let c = seeded();
        c.register_type(None, "AVHRR", TypeKind::Semantic, &[]).unwrap();
        c.register_type(None, "NDVI Grid", TypeKind::Semantic, &[]).unwrap();
        c.register_function(None, "ndvi", &["AVHRR".into()], &["NDVI Grid".into()], false, None)
            .unwrap();
        let raw = c
            .register_object(ObjectSpec {
                id: None,
                name: "raw".into(),
                site: "UC Berkeley".into(),
                uri: "file:///raw".into(),
                types: vec!["AVHRR".into()],
                provenance: Provenance::Researcher("berkeley/r-1".parse().unwrap()),
                created_at: None,
            })
            .unwrap();
        let (_, outs) = c
            .record_run(run_spec(&c, vec![raw.id.clone()], vec![out_spec("l1", "NDVI Grid")]))
            .unwrap();
        let before = c.store().revision_count();
        // deriving the original raw object from its own derivative
        let err = c
            .record_run(run_spec(
                &c,
                vec![outs[0].id.clone()],
                vec![OutputSpec {
                    id: Some(raw.id.clone()),
                    name: "raw".into(),
                    uri: "file:///raw".into(),
                    types: vec!["AVHRR".into()],
                    site: None,
                }],
            ))
            .unwrap_err();
        assert_eq!(err.code(), "CycleRejected");
        assert_eq!(c.store().revision_count(), before);
    }
}
