//! A decoded, typed snapshot of the latest catalog state. Query and lineage
//! evaluate against one `CatalogView` so each evaluation sees a single
//! consistent point in time.

use std::collections::BTreeMap;

use crate::model::{
    Collection, DataObject, Document, EntityId, FunctionDescriptor, ProcessRun, Record,
    RecordKind, Researcher, Responsibility, Site, ToolDescriptor, TypeAssociation, TypeNode,
};
use crate::store::Store;

#[derive(Default)]
pub struct CatalogView {
    pub sites: BTreeMap<EntityId, Site>,
    pub researchers: BTreeMap<EntityId, Researcher>,
    pub types: BTreeMap<EntityId, TypeNode>,
    pub associations: BTreeMap<EntityId, TypeAssociation>,
    pub objects: BTreeMap<EntityId, DataObject>,
    pub collections: BTreeMap<EntityId, Collection>,
    pub functions: BTreeMap<EntityId, FunctionDescriptor>,
    pub tools: BTreeMap<EntityId, ToolDescriptor>,
    pub documents: BTreeMap<EntityId, Document>,
    pub responsibilities: BTreeMap<EntityId, Responsibility>,
    pub runs: BTreeMap<EntityId, ProcessRun>,
}

impl CatalogView {
    pub fn load(store: &Store) -> CatalogView {
        CatalogView::load_kinds(store, &RecordKind::ALL)
    }

    /// Decode only the listed kinds; cheaper for operations that touch a
    /// known slice of the catalog.
    pub fn load_kinds(store: &Store, kinds: &[RecordKind]) -> CatalogView {
        let mut view = CatalogView::default();
        for stored in kinds.iter().flat_map(|kind| store.scan(*kind)) {
            let record = stored.record().expect("stored bodies decode");
            match record {
                Record::Site(r) => {
                    view.sites.insert(r.id.clone(), r);
                }
                Record::Researcher(r) => {
                    view.researchers.insert(r.id.clone(), r);
                }
                Record::TypeNode(r) => {
                    view.types.insert(r.id.clone(), r);
                }
                Record::TypeAssociation(r) => {
                    view.associations.insert(r.id.clone(), r);
                }
                Record::DataObject(r) => {
                    view.objects.insert(r.id.clone(), r);
                }
                Record::Collection(r) => {
                    view.collections.insert(r.id.clone(), r);
                }
                Record::Function(r) => {
                    view.functions.insert(r.id.clone(), r);
                }
                Record::Tool(r) => {
                    view.tools.insert(r.id.clone(), r);
                }
                Record::Document(r) => {
                    view.documents.insert(r.id.clone(), r);
                }
                Record::Responsibility(r) => {
                    view.responsibilities.insert(r.id.clone(), r);
                }
                Record::ProcessRun(r) => {
                    view.runs.insert(r.id.clone(), r);
                }
            }
        }
        view
    }

    /// Does any record carry this id? Used for responsibility targets, which
    /// may point at a record of any kind.
    pub fn any_record(&self, id: &EntityId) -> Option<(RecordKind, Record)> {
        if let Some(r) = self.sites.get(id) {
            return Some((RecordKind::Site, Record::Site(r.clone())));
        }
        if let Some(r) = self.researchers.get(id) {
            return Some((RecordKind::Researcher, Record::Researcher(r.clone())));
        }
        if let Some(r) = self.types.get(id) {
            return Some((RecordKind::TypeNode, Record::TypeNode(r.clone())));
        }
        if let Some(r) = self.associations.get(id) {
            return Some((RecordKind::TypeAssociation, Record::TypeAssociation(r.clone())));
        }
        if let Some(r) = self.objects.get(id) {
            return Some((RecordKind::DataObject, Record::DataObject(r.clone())));
        }
        if let Some(r) = self.collections.get(id) {
            return Some((RecordKind::Collection, Record::Collection(r.clone())));
        }
        if let Some(r) = self.functions.get(id) {
            return Some((RecordKind::Function, Record::Function(r.clone())));
        }
        if let Some(r) = self.tools.get(id) {
            return Some((RecordKind::Tool, Record::Tool(r.clone())));
        }
        if let Some(r) = self.documents.get(id) {
            return Some((RecordKind::Document, Record::Document(r.clone())));
        }
        if let Some(r) = self.responsibilities.get(id) {
            return Some((RecordKind::Responsibility, Record::Responsibility(r.clone())));
        }
        if let Some(r) = self.runs.get(id) {
            return Some((RecordKind::ProcessRun, Record::ProcessRun(r.clone())));
        }
        None
    }
}
