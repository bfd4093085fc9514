//! Answers the seven canonical researcher questions over the catalog, with
//! subtype-closure semantics, and evaluates CQL text. All evaluation is
//! read-only against a single catalog snapshot.

mod cql;

pub use cql::{parse_cql, print_cql, Predicate, QueryAst, Target};

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{EntityId, TypeNode};
use crate::store::Store;
use crate::view::CatalogView;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureDirection {
    Subtypes,
    Supertypes,
}

/// One result row. Ordering (kind, id, name) is the serialization order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Row {
    pub kind: String,
    pub id: EntityId,
    pub name: String,
}

impl Row {
    fn new(kind: &str, id: EntityId, name: impl Into<String>) -> Row {
        Row {
            kind: kind.to_string(),
            id,
            name: name.into(),
        }
    }
}

/// Deterministically ordered, duplicate-free result rows.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResultSet {
    pub rows: Vec<Row>,
}

impl ResultSet {
    fn from_set(rows: BTreeSet<Row>) -> ResultSet {
        ResultSet {
            rows: rows.into_iter().collect(),
        }
    }

    /// One row per line: `kind<TAB>id<TAB>name`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&format!("{}\t{}\t{}\n", row.kind, row.id, row.name));
        }
        out
    }
}

/// The seven question kinds.
#[derive(Debug, Clone)]
pub enum Question {
    SitesWithType(String),
    FunctionsOnType(String),
    GroupingsOfType(String),
    DerivationsFromType(String),
    ToolsForType {
        type_ref: String,
        favorite_of: Option<String>,
    },
    DocumentsAboutType(String),
    ResponsibleFor(String),
}

#[derive(Debug, Clone, Copy)]
pub struct AnswerOptions {
    pub subtype_closure: bool,
}

impl Default for AnswerOptions {
    fn default() -> Self {
        AnswerOptions {
            subtype_closure: true,
        }
    }
}

/// Reflexive-transitive closure over parent edges. Associations are never
/// followed.
pub fn type_closure(
    store: &Store,
    type_ref: &str,
    direction: ClosureDirection,
) -> Result<Vec<TypeNode>> {
    let view = CatalogView::load(store);
    let seeds = resolve_types(&view, type_ref)?;
    let ids = closure_of(&view, &seeds, direction);
    Ok(view
        .types
        .values()
        .filter(|t| ids.contains(&t.id))
        .cloned()
        .collect())
}

/// Explicit associations touching a type, available on request. These never
/// broaden query results implicitly: an association is a statement, not a
/// subtype edge.
pub fn associations_of(
    store: &Store,
    type_ref: &str,
) -> Result<Vec<crate::model::TypeAssociation>> {
    let view = CatalogView::load_kinds(
        store,
        &[crate::model::RecordKind::TypeNode, crate::model::RecordKind::TypeAssociation],
    );
    let seeds: BTreeSet<EntityId> = resolve_types(&view, type_ref)?
        .into_iter()
        .map(|t| t.id)
        .collect();
    Ok(view
        .associations
        .values()
        .filter(|a| seeds.contains(&a.subject) || seeds.contains(&a.object))
        .cloned()
        .collect())
}

/// Answer one canonical question.
pub fn answer(store: &Store, question: &Question, options: AnswerOptions) -> Result<ResultSet> {
    let view = CatalogView::load(store);
    let flag = options.subtype_closure;
    let rows = match question {
        Question::SitesWithType(t) => sites_with_type(&view, t, flag)?,
        Question::FunctionsOnType(t) => functions_on_type(&view, t, flag)?,
        Question::GroupingsOfType(t) => groupings_of_type(&view, t, flag)?,
        Question::DerivationsFromType(t) => derivations_from_type(&view, t, flag)?,
        Question::ToolsForType {
            type_ref,
            favorite_of,
        } => {
            let mut rows = tools_for_type(&view, type_ref, flag)?;
            if let Some(researcher) = favorite_of {
                rows = intersect(rows, tools_favorite_of(&view, researcher)?);
            }
            rows
        }
        Question::DocumentsAboutType(t) => documents_about_type(&view, t, flag)?,
        Question::ResponsibleFor(e) => responsible_for(&view, e)?,
    };
    Ok(ResultSet::from_set(rows))
}

/// Evaluate CQL text: parse, then AND-intersect the predicates.
pub fn eval_cql(store: &Store, text: &str) -> Result<ResultSet> {
    let ast = parse_cql(text)?;
    eval_ast(store, &ast)
}

pub fn eval_ast(store: &Store, ast: &QueryAst) -> Result<ResultSet> {
    let view = CatalogView::load(store);
    let flag = ast.subtype_closure();
    let mut acc: Option<BTreeSet<Row>> = None;
    for predicate in &ast.predicates {
        let rows = match predicate {
            Predicate::Subtypes(_) => continue,
            Predicate::Type(t) => match ast.target {
                Target::Sites => sites_with_type(&view, t, flag)?,
                Target::Objects => objects_with_type(&view, t, flag)?,
                Target::Functions => functions_on_type(&view, t, flag)?,
                Target::Tools => tools_for_type(&view, t, flag)?,
                Target::Documents => documents_about_type(&view, t, flag)?,
                Target::Collections => groupings_of_type(&view, t, flag)?,
                Target::Responsible => unreachable!("parser rejects TYPE on responsible"),
            },
            Predicate::FavoriteOf(r) => tools_favorite_of(&view, r)?,
            Predicate::DerivedFromType(t) => match ast.target {
                Target::Functions => derivations_from_type(&view, t, flag)?,
                Target::Objects => objects_derived_from_type(&view, t, flag)?,
                _ => unreachable!("parser rejects DERIVED FROM TYPE here"),
            },
            Predicate::AtSite(s) => objects_at_site(&view, s)?,
            Predicate::For(e) => responsible_for(&view, e)?,
        };
        acc = Some(match acc {
            None => rows,
            Some(prev) => prev.intersection(&rows).cloned().collect(),
        });
    }
    let rows = match acc {
        Some(rows) => rows,
        // Only SUBTYPES given: unconstrained listing of the target.
        None => full_listing(&view, ast.target),
    };
    Ok(ResultSet::from_set(rows))
}

// ---- resolution and closure ----

/// There is no deletion; a `retired` annotation hides a type from default
/// queries while the record itself is retained forever.
fn is_retired(t: &TypeNode) -> bool {
    t.annotations.contains_key("retired")
}

/// Resolve a type reference: id first, then exact name. A name shared by a
/// semantic and a storage type resolves to both. Retired types do not
/// resolve.
fn resolve_types(view: &CatalogView, reference: &str) -> Result<Vec<TypeNode>> {
    if let Ok(id) = reference.parse::<EntityId>() {
        if let Some(t) = view.types.get(&id) {
            if !is_retired(t) {
                return Ok(vec![t.clone()]);
            }
        }
    }
    let matches: Vec<TypeNode> = view
        .types
        .values()
        .filter(|t| t.name == reference && !is_retired(t))
        .cloned()
        .collect();
    if matches.is_empty() {
        return Err(Error::UnknownType(reference.to_string()));
    }
    Ok(matches)
}

fn closure_of(
    view: &CatalogView,
    seeds: &[TypeNode],
    direction: ClosureDirection,
) -> BTreeSet<EntityId> {
    let mut out: BTreeSet<EntityId> = seeds.iter().map(|t| t.id.clone()).collect();
    loop {
        let mut grew = false;
        match direction {
            // subtypes: pull in every type whose parents intersect the set
            ClosureDirection::Subtypes => {
                for t in view.types.values() {
                    if !is_retired(t)
                        && !out.contains(&t.id)
                        && t.parents.iter().any(|p| out.contains(p))
                    {
                        out.insert(t.id.clone());
                        grew = true;
                    }
                }
            }
            // supertypes: follow parent edges upward
            ClosureDirection::Supertypes => {
                let mut add = Vec::new();
                for id in &out {
                    if let Some(t) = view.types.get(id) {
                        for p in &t.parents {
                            if !out.contains(p)
                                && view.types.get(p).is_some_and(|t| !is_retired(t))
                            {
                                add.push(p.clone());
                            }
                        }
                    }
                }
                if !add.is_empty() {
                    out.extend(add);
                    grew = true;
                }
            }
        }
        if !grew {
            return out;
        }
    }
}

/// The match set for a type predicate: the subtype closure when the flag is
/// on, the named types alone when off.
fn match_set(view: &CatalogView, reference: &str, flag: bool) -> Result<BTreeSet<EntityId>> {
    let seeds = resolve_types(view, reference)?;
    if flag {
        Ok(closure_of(view, &seeds, ClosureDirection::Subtypes))
    } else {
        Ok(seeds.into_iter().map(|t| t.id).collect())
    }
}

fn site_name(view: &CatalogView, id: &EntityId) -> String {
    view.sites
        .get(id)
        .map(|s| s.name.clone())
        .unwrap_or_else(|| id.to_string())
}

fn type_name(view: &CatalogView, id: &EntityId) -> String {
    view.types
        .get(id)
        .map(|t| t.name.clone())
        .unwrap_or_else(|| id.to_string())
}

// ---- question implementations ----

fn sites_with_type(view: &CatalogView, t: &str, flag: bool) -> Result<BTreeSet<Row>> {
    let types = match_set(view, t, flag)?;
    let mut rows = BTreeSet::new();
    let holding: BTreeSet<&EntityId> = view
        .objects
        .values()
        .filter(|o| o.types.iter().any(|ty| types.contains(ty)))
        .map(|o| &o.location.site)
        .collect();
    for site_id in holding {
        rows.insert(Row::new("site", site_id.clone(), site_name(view, site_id)));
        if let Some(site) = view.sites.get(site_id) {
            for system in &site.systems {
                rows.insert(Row::new("system", site_id.clone(), system.clone()));
            }
        }
    }
    Ok(rows)
}

fn objects_with_type(view: &CatalogView, t: &str, flag: bool) -> Result<BTreeSet<Row>> {
    let types = match_set(view, t, flag)?;
    Ok(view
        .objects
        .values()
        .filter(|o| o.types.iter().any(|ty| types.contains(ty)))
        .map(|o| Row::new("data_object", o.id.clone(), o.name.clone()))
        .collect())
}

fn functions_on_type(view: &CatalogView, t: &str, flag: bool) -> Result<BTreeSet<Row>> {
    let types = match_set(view, t, flag)?;
    Ok(view
        .functions
        .values()
        .filter(|f| f.input_types.iter().any(|ty| types.contains(ty)))
        .map(|f| Row::new("function", f.id.clone(), f.name.clone()))
        .collect())
}

/// Collections holding (directly or through subcollections) an object of the
/// type, plus the strict supertype ancestors of the type itself.
fn groupings_of_type(view: &CatalogView, t: &str, flag: bool) -> Result<BTreeSet<Row>> {
    let types = match_set(view, t, flag)?;
    let matching_objects: BTreeSet<&EntityId> = view
        .objects
        .values()
        .filter(|o| o.types.iter().any(|ty| types.contains(ty)))
        .map(|o| &o.id)
        .collect();
    let mut holding: BTreeSet<EntityId> = view
        .collections
        .values()
        .filter(|c| c.members.iter().any(|m| matching_objects.contains(m)))
        .map(|c| c.id.clone())
        .collect();
    loop {
        let grew: Vec<EntityId> = view
            .collections
            .values()
            .filter(|c| {
                !holding.contains(&c.id)
                    && c.subcollections.iter().any(|s| holding.contains(s))
            })
            .map(|c| c.id.clone())
            .collect();
        if grew.is_empty() {
            break;
        }
        holding.extend(grew);
    }
    let mut rows: BTreeSet<Row> = holding
        .iter()
        .map(|id| {
            Row::new(
                "collection",
                id.clone(),
                view.collections[id].name.clone(),
            )
        })
        .collect();

    let seeds = resolve_types(view, t)?;
    let seed_ids: BTreeSet<EntityId> = seeds.iter().map(|s| s.id.clone()).collect();
    let ancestors = closure_of(view, &seeds, ClosureDirection::Supertypes);
    for id in ancestors.difference(&seed_ids) {
        rows.insert(Row::new("type_node", id.clone(), type_name(view, id)));
    }
    Ok(rows)
}

/// (output type, function) pairs for functions consuming the type.
fn derivations_from_type(view: &CatalogView, t: &str, flag: bool) -> Result<BTreeSet<Row>> {
    let types = match_set(view, t, flag)?;
    let mut rows = BTreeSet::new();
    for f in view.functions.values() {
        if f.input_types.iter().any(|ty| types.contains(ty)) {
            for out in &f.output_types {
                rows.insert(Row::new(
                    "derivation",
                    out.clone(),
                    format!("{} via {}", type_name(view, out), f.id),
                ));
            }
        }
    }
    Ok(rows)
}

fn objects_derived_from_type(view: &CatalogView, t: &str, flag: bool) -> Result<BTreeSet<Row>> {
    let types = match_set(view, t, flag)?;
    let mut rows = BTreeSet::new();
    for o in view.objects.values() {
        let Some(run_id) = &o.created_by else { continue };
        let Some(run) = view.runs.get(run_id) else { continue };
        let Some(f) = view.functions.get(&run.function) else { continue };
        if f.input_types.iter().any(|ty| types.contains(ty)) {
            rows.insert(Row::new("data_object", o.id.clone(), o.name.clone()));
        }
    }
    Ok(rows)
}

fn tools_for_type(view: &CatalogView, t: &str, flag: bool) -> Result<BTreeSet<Row>> {
    let types = match_set(view, t, flag)?;
    Ok(view
        .tools
        .values()
        .filter(|tool| tool.handles_types.iter().any(|ty| types.contains(ty)))
        .map(|tool| Row::new("tool", tool.id.clone(), format!("{} {}", tool.name, tool.version)))
        .collect())
}

fn tools_favorite_of(view: &CatalogView, researcher_ref: &str) -> Result<BTreeSet<Row>> {
    let matches: Vec<EntityId> = view
        .researchers
        .values()
        .filter(|r| r.name == researcher_ref || r.id.to_string() == researcher_ref)
        .map(|r| r.id.clone())
        .collect();
    if matches.is_empty() {
        return Err(Error::UnknownEntity(researcher_ref.to_string()));
    }
    Ok(view
        .tools
        .values()
        .filter(|tool| matches.iter().any(|r| tool.favorite_of.contains(r)))
        .map(|tool| Row::new("tool", tool.id.clone(), format!("{} {}", tool.name, tool.version)))
        .collect())
}

fn documents_about_type(view: &CatalogView, t: &str, flag: bool) -> Result<BTreeSet<Row>> {
    let types = match_set(view, t, flag)?;
    Ok(view
        .documents
        .values()
        .filter(|d| d.about_types.iter().any(|ty| types.contains(ty)))
        .map(|d| Row::new("document", d.id.clone(), d.title.clone()))
        .collect())
}

fn objects_at_site(view: &CatalogView, site_ref: &str) -> Result<BTreeSet<Row>> {
    let matches: Vec<EntityId> = view
        .sites
        .values()
        .filter(|s| s.name == site_ref || s.id.to_string() == site_ref)
        .map(|s| s.id.clone())
        .collect();
    if matches.is_empty() {
        return Err(Error::UnknownEntity(site_ref.to_string()));
    }
    Ok(view
        .objects
        .values()
        .filter(|o| matches.contains(&o.location.site))
        .map(|o| Row::new("data_object", o.id.clone(), o.name.clone()))
        .collect())
}

/// Join responsibility records for an entity named by id or display name.
fn responsible_for(view: &CatalogView, entity_ref: &str) -> Result<BTreeSet<Row>> {
    let mut targets: BTreeSet<EntityId> = BTreeSet::new();
    if let Ok(id) = entity_ref.parse::<EntityId>() {
        if view.any_record(&id).is_some() {
            targets.insert(id);
        }
    }
    if targets.is_empty() {
        for (id, name) in named_records(view) {
            if name == entity_ref {
                targets.insert(id);
            }
        }
    }
    if targets.is_empty() {
        return Err(Error::UnknownEntity(entity_ref.to_string()));
    }
    Ok(view
        .responsibilities
        .values()
        .filter(|r| targets.contains(&r.entity))
        .map(|r| {
            let name = view
                .researchers
                .get(&r.researcher)
                .map(|x| x.name.clone())
                .unwrap_or_else(|| r.researcher.to_string());
            Row::new("researcher", r.researcher.clone(), format!("{name} ({})", r.role))
        })
        .collect())
}

fn named_records(view: &CatalogView) -> Vec<(EntityId, String)> {
    let mut out = Vec::new();
    out.extend(view.sites.values().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(view.researchers.values().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(view.types.values().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(view.objects.values().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(view.collections.values().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(view.functions.values().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(view.tools.values().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(view.documents.values().map(|r| (r.id.clone(), r.title.clone())));
    out
}

fn full_listing(view: &CatalogView, target: Target) -> BTreeSet<Row> {
    match target {
        Target::Sites => {
            let mut rows = BTreeSet::new();
            for s in view.sites.values() {
                rows.insert(Row::new("site", s.id.clone(), s.name.clone()));
                for system in &s.systems {
                    rows.insert(Row::new("system", s.id.clone(), system.clone()));
                }
            }
            rows
        }
        Target::Objects => view
            .objects
            .values()
            .map(|o| Row::new("data_object", o.id.clone(), o.name.clone()))
            .collect(),
        Target::Functions => view
            .functions
            .values()
            .map(|f| Row::new("function", f.id.clone(), f.name.clone()))
            .collect(),
        Target::Tools => view
            .tools
            .values()
            .map(|t| Row::new("tool", t.id.clone(), format!("{} {}", t.name, t.version)))
            .collect(),
        Target::Documents => view
            .documents
            .values()
            .map(|d| Row::new("document", d.id.clone(), d.title.clone()))
            .collect(),
        Target::Collections => view
            .collections
            .values()
            .map(|c| Row::new("collection", c.id.clone(), c.name.clone()))
            .collect(),
        Target::Responsible => view
            .responsibilities
            .values()
            .map(|r| {
                let name = view
                    .researchers
                    .get(&r.researcher)
                    .map(|x| x.name.clone())
                    .unwrap_or_else(|| r.researcher.to_string());
                Row::new("researcher", r.researcher.clone(), format!("{name} ({})", r.role))
            })
            .collect(),
    }
}

fn intersect(a: BTreeSet<Row>, b: BTreeSet<Row>) -> BTreeSet<Row> {
    a.intersection(&b).cloned().collect()
}
