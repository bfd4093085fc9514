use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ids::EntityId;

/// A research site. A site can be tracked without hosting the system, so
/// `endpoint` is optional.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Site {
    pub id: EntityId,
    pub name: String,
    #[serde(default)]
    pub contact: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub systems: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Researcher {
    pub id: EntityId,
    pub name: String,
    #[serde(default)]
    pub contact: String,
    pub affiliation: EntityId,
}

/// Semantic types say what an object means to a discipline; storage types say
/// how its bytes are encoded. One object may carry both at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeKind {
    Semantic,
    Storage,
}

impl fmt::Display for TypeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeKind::Semantic => write!(f, "semantic"),
            TypeKind::Storage => write!(f, "storage"),
        }
    }
}

/// A learned type. Parent edges form a DAG within one kind; annotations hold
/// free-text higher-level semantics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeNode {
    pub id: EntityId,
    pub name: String,
    pub kind: TypeKind,
    #[serde(default)]
    pub parents: BTreeSet<EntityId>,
    #[serde(default)]
    pub annotations: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AssociationRelation {
    #[serde(rename = "represented-as")]
    RepresentedAs,
    #[serde(rename = "derived-from-type")]
    DerivedFromType,
}

impl fmt::Display for AssociationRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssociationRelation::RepresentedAs => write!(f, "represented-as"),
            AssociationRelation::DerivedFromType => write!(f, "derived-from-type"),
        }
    }
}

/// An explicit statement linking two types. Deliberately not a subtype edge:
/// associations never broaden query results implicitly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeAssociation {
    pub id: EntityId,
    pub subject: EntityId,
    pub object: EntityId,
    pub relation: AssociationRelation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectLocation {
    pub site: EntityId,
    pub uri: String,
}

/// A multi-typed scientific object. Exactly one of `created_by` (run-derived)
/// or `entered_by` (hand-entered) records its provenance origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataObject {
    pub id: EntityId,
    pub name: String,
    pub location: ObjectLocation,
    pub types: BTreeSet<EntityId>,
    #[serde(default)]
    pub created_by: Option<EntityId>,
    #[serde(default)]
    pub entered_by: Option<EntityId>,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collection {
    pub id: EntityId,
    pub name: String,
    #[serde(default)]
    pub members: BTreeSet<EntityId>,
    #[serde(default)]
    pub subcollections: BTreeSet<EntityId>,
}

/// A registered scientific function. Converters are single-input,
/// single-output and feed the conversion planner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDescriptor {
    pub id: EntityId,
    pub name: String,
    pub input_types: Vec<EntityId>,
    pub output_types: Vec<EntityId>,
    #[serde(default)]
    pub is_converter: bool,
    #[serde(default)]
    pub tool: Option<EntityId>,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub id: EntityId,
    pub name: String,
    pub version: String,
    #[serde(default)]
    pub handles_types: BTreeSet<EntityId>,
    #[serde(default)]
    pub favorite_of: BTreeSet<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: EntityId,
    pub title: String,
    pub uri: String,
    #[serde(default)]
    pub about_types: BTreeSet<EntityId>,
    #[serde(default)]
    pub authors: BTreeSet<EntityId>,
}

/// Links a researcher to any record in a named role ("owner", "curator", ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Responsibility {
    pub id: EntityId,
    pub entity: EntityId,
    pub researcher: EntityId,
    pub role: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Succeeded,
    Failed,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Succeeded => write!(f, "succeeded"),
            RunStatus::Failed => write!(f, "failed"),
        }
    }
}

/// One executed function invocation. Inputs may reference remote objects that
/// have not been published yet; lineage renders those as stubs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessRun {
    pub id: EntityId,
    pub function: EntityId,
    pub inputs: Vec<EntityId>,
    pub outputs: Vec<EntityId>,
    pub host: String,
    pub site: EntityId,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
    pub started: String,
    pub ended: String,
    pub status: RunStatus,
}
