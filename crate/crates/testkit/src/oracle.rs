//! Independent oracles: naive full-scan query answering, matrix-power type
//! closure, brute-force lineage reachability, and BFS conversion search.
//! These deliberately share no evaluation code with the implementations they
//! check.

use std::collections::{BTreeMap, BTreeSet};

use bigsur_core::model::{
    Collection, DataObject, Document, EntityId, FunctionDescriptor, ProcessRun, Record,
    Researcher, Responsibility, Site, ToolDescriptor, TypeNode,
};
use bigsur_core::query::{Predicate, QueryAst, Target};
use bigsur_core::store::Store;

/// Plain decoded catalog, loaded once per oracle call.
#[derive(Default)]
pub struct Snapshot {
    pub sites: Vec<Site>,
    pub researchers: Vec<Researcher>,
    pub types: Vec<TypeNode>,
    pub objects: Vec<DataObject>,
    pub collections: Vec<Collection>,
    pub functions: Vec<FunctionDescriptor>,
    pub tools: Vec<ToolDescriptor>,
    pub documents: Vec<Document>,
    pub responsibilities: Vec<Responsibility>,
    pub runs: Vec<ProcessRun>,
}

impl Snapshot {
    pub fn load(store: &Store) -> Snapshot {
        let mut snap = Snapshot::default();
        for stored in store.scan_all() {
            match stored.record().unwrap() {
                Record::Site(r) => snap.sites.push(r),
                Record::Researcher(r) => snap.researchers.push(r),
                Record::TypeNode(r) => snap.types.push(r),
                Record::DataObject(r) => snap.objects.push(r),
                Record::Collection(r) => snap.collections.push(r),
                Record::Function(r) => snap.functions.push(r),
                Record::Tool(r) => snap.tools.push(r),
                Record::Document(r) => snap.documents.push(r),
                Record::Responsibility(r) => snap.responsibilities.push(r),
                Record::ProcessRun(r) => snap.runs.push(r),
                Record::TypeAssociation(_) => {}
            }
        }
        snap
    }
}

/// Reflexive-transitive subtype closure by boolean matrix powering.
/// `down` follows parent edges from parent to child (subtypes).
pub fn matrix_closure(types: &[TypeNode], seeds: &BTreeSet<EntityId>, down: bool) -> BTreeSet<EntityId> {
    let index: BTreeMap<&EntityId, usize> =
        types.iter().enumerate().map(|(i, t)| (&t.id, i)).collect();
    let n = types.len();
    // reach[i][j]: edge i -> j, where an edge goes supertype -> subtype when
    // `down`, subtype -> supertype otherwise
    let mut reach = vec![vec![false; n]; n];
    for (i, r) in reach.iter_mut().enumerate() {
        r[i] = true;
    }
    for (child_idx, t) in types.iter().enumerate() {
        for parent in &t.parents {
            if let Some(&parent_idx) = index.get(parent) {
                if down {
                    reach[parent_idx][child_idx] = true;
                } else {
                    reach[child_idx][parent_idx] = true;
                }
            }
        }
    }
    // square the matrix until fixpoint
    loop {
        let mut next = reach.clone();
        for i in 0..n {
            for (k, row) in reach.iter().enumerate() {
                if reach[i][k] {
                    for (j, set) in row.iter().enumerate() {
                        if *set {
                            next[i][j] = true;
                        }
                    }
                }
            }
        }
        if next == reach {
            break;
        }
        reach = next;
    }
    let mut out = BTreeSet::new();
    for seed in seeds {
        if let Some(&i) = index.get(seed) {
            for (j, t) in types.iter().enumerate() {
                if reach[i][j] {
                    out.insert(t.id.clone());
                }
            }
        }
    }
    out
}

fn seed_types(snap: &Snapshot, reference: &str) -> BTreeSet<EntityId> {
    let mut seeds = BTreeSet::new();
    for t in &snap.types {
        if t.name == reference || t.id.to_string() == reference {
            seeds.insert(t.id.clone());
        }
    }
    seeds
}

fn type_match_set(snap: &Snapshot, reference: &str, closure_on: bool) -> BTreeSet<EntityId> {
    let seeds = seed_types(snap, reference);
    if closure_on {
        matrix_closure(&snap.types, &seeds, true)
    } else {
        seeds
    }
}

pub type Tuple = (String, String, String);

fn tuple(kind: &str, id: &EntityId, name: &str) -> Tuple {
    (kind.to_string(), id.to_string(), name.to_string())
}

fn object_has(o: &DataObject, types: &BTreeSet<EntityId>) -> bool {
    o.types.iter().any(|t| types.contains(t))
}

pub fn sites_with_type(snap: &Snapshot, t: &str, closure_on: bool) -> BTreeSet<Tuple> {
    let types = type_match_set(snap, t, closure_on);
    let mut out = BTreeSet::new();
    for o in &snap.objects {
        if object_has(o, &types) {
            let site_id = &o.location.site;
            let mut found = false;
            for s in &snap.sites {
                if &s.id == site_id {
                    found = true;
                    out.insert(tuple("site", site_id, &s.name));
                    for system in &s.systems {
                        out.insert(tuple("system", site_id, system));
                    }
                }
            }
            if !found {
                out.insert(tuple("site", site_id, &site_id.to_string()));
            }
        }
    }
    out
}

pub fn objects_with_type(snap: &Snapshot, t: &str, closure_on: bool) -> BTreeSet<Tuple> {
    let types = type_match_set(snap, t, closure_on);
    snap.objects
        .iter()
        .filter(|o| object_has(o, &types))
        .map(|o| tuple("data_object", &o.id, &o.name))
        .collect()
}

pub fn functions_on_type(snap: &Snapshot, t: &str, closure_on: bool) -> BTreeSet<Tuple> {
    let types = type_match_set(snap, t, closure_on);
    snap.functions
        .iter()
        .filter(|f| f.input_types.iter().any(|ty| types.contains(ty)))
        .map(|f| tuple("function", &f.id, &f.name))
        .collect()
}

pub fn groupings_of_type(snap: &Snapshot, t: &str, closure_on: bool) -> BTreeSet<Tuple> {
    let types = type_match_set(snap, t, closure_on);
    let mut out = BTreeSet::new();
    // a collection groups the type if any member (direct, or through any
    // chain of subcollections) carries a matching type
    for c in &snap.collections {
        if collection_holds(snap, c, &types, &mut BTreeSet::new()) {
            out.insert(tuple("collection", &c.id, &c.name));
        }
    }
    // plus the strict supertype ancestors of the named type
    let seeds = seed_types(snap, t);
    let ups = matrix_closure(&snap.types, &seeds, false);
    for id in ups.difference(&seeds) {
        let name = snap
            .types
            .iter()
            .find(|x| &x.id == id)
            .map(|x| x.name.clone())
            .unwrap_or_else(|| id.to_string());
        out.insert(tuple("type_node", id, &name));
    }
    out
}

fn collection_holds(
    snap: &Snapshot,
    c: &Collection,
    types: &BTreeSet<EntityId>,
    visiting: &mut BTreeSet<EntityId>,
) -> bool {
    if !visiting.insert(c.id.clone()) {
        return false;
    }
    for member in &c.members {
        for o in &snap.objects {
            if &o.id == member && object_has(o, types) {
                return true;
            }
        }
    }
    for sub in &c.subcollections {
        for sc in &snap.collections {
            if &sc.id == sub && collection_holds(snap, sc, types, visiting) {
                return true;
            }
        }
    }
    false
}

pub fn derivations_from_type(snap: &Snapshot, t: &str, closure_on: bool) -> BTreeSet<Tuple> {
    let types = type_match_set(snap, t, closure_on);
    let mut out = BTreeSet::new();
    for f in &snap.functions {
        if f.input_types.iter().any(|ty| types.contains(ty)) {
            for o in &f.output_types {
                let name = snap
                    .types
                    .iter()
                    .find(|x| &x.id == o)
                    .map(|x| x.name.clone())
                    .unwrap_or_else(|| o.to_string());
                out.insert(tuple("derivation", o, &format!("{name} via {}", f.id)));
            }
        }
    }
    out
}

pub fn objects_derived_from_type(snap: &Snapshot, t: &str, closure_on: bool) -> BTreeSet<Tuple> {
    let types = type_match_set(snap, t, closure_on);
    let mut out = BTreeSet::new();
    for o in &snap.objects {
        if let Some(run_id) = &o.created_by {
            for r in &snap.runs {
                if &r.id == run_id {
                    for f in &snap.functions {
                        if f.id == r.function && f.input_types.iter().any(|ty| types.contains(ty)) {
                            out.insert(tuple("data_object", &o.id, &o.name));
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn tools_for_type(snap: &Snapshot, t: &str, closure_on: bool) -> BTreeSet<Tuple> {
    let types = type_match_set(snap, t, closure_on);
    snap.tools
        .iter()
        .filter(|tool| tool.handles_types.iter().any(|ty| types.contains(ty)))
        .map(|tool| tuple("tool", &tool.id, &format!("{} {}", tool.name, tool.version)))
        .collect()
}

pub fn tools_favorite_of(snap: &Snapshot, researcher: &str) -> BTreeSet<Tuple> {
    let ids: BTreeSet<&EntityId> = snap
        .researchers
        .iter()
        .filter(|r| r.name == researcher || r.id.to_string() == researcher)
        .map(|r| &r.id)
        .collect();
    snap.tools
        .iter()
        .filter(|tool| tool.favorite_of.iter().any(|r| ids.contains(r)))
        .map(|tool| tuple("tool", &tool.id, &format!("{} {}", tool.name, tool.version)))
        .collect()
}

pub fn documents_about_type(snap: &Snapshot, t: &str, closure_on: bool) -> BTreeSet<Tuple> {
    let types = type_match_set(snap, t, closure_on);
    snap.documents
        .iter()
        .filter(|d| d.about_types.iter().any(|ty| types.contains(ty)))
        .map(|d| tuple("document", &d.id, &d.title))
        .collect()
}

pub fn objects_at_site(snap: &Snapshot, site: &str) -> BTreeSet<Tuple> {
    let ids: BTreeSet<&EntityId> = snap
        .sites
        .iter()
        .filter(|s| s.name == site || s.id.to_string() == site)
        .map(|s| &s.id)
        .collect();
    snap.objects
        .iter()
        .filter(|o| ids.contains(&o.location.site))
        .map(|o| tuple("data_object", &o.id, &o.name))
        .collect()
}

pub fn responsible_for(snap: &Snapshot, entity: &str) -> BTreeSet<Tuple> {
    // entity by id, else by display name over the named record kinds
    let mut targets: BTreeSet<EntityId> = BTreeSet::new();
    if let Ok(id) = entity.parse::<EntityId>() {
        if record_exists(snap, &id) {
            targets.insert(id);
        }
    }
    if targets.is_empty() {
        for (id, name) in named(snap) {
            if name == entity {
                targets.insert(id);
            }
        }
    }
    let mut out = BTreeSet::new();
    for r in &snap.responsibilities {
        if targets.contains(&r.entity) {
            let name = snap
                .researchers
                .iter()
                .find(|x| x.id == r.researcher)
                .map(|x| x.name.clone())
                .unwrap_or_else(|| r.researcher.to_string());
            out.insert(tuple("researcher", &r.researcher, &format!("{name} ({})", r.role)));
        }
    }
    out
}

fn record_exists(snap: &Snapshot, id: &EntityId) -> bool {
    snap.sites.iter().any(|r| &r.id == id)
        || snap.researchers.iter().any(|r| &r.id == id)
        || snap.types.iter().any(|r| &r.id == id)
        || snap.objects.iter().any(|r| &r.id == id)
        || snap.collections.iter().any(|r| &r.id == id)
        || snap.functions.iter().any(|r| &r.id == id)
        || snap.tools.iter().any(|r| &r.id == id)
        || snap.documents.iter().any(|r| &r.id == id)
        || snap.responsibilities.iter().any(|r| &r.id == id)
        || snap.runs.iter().any(|r| &r.id == id)
}

fn named(snap: &Snapshot) -> Vec<(EntityId, String)> {
    let mut out = Vec::new();
    out.extend(snap.sites.iter().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(snap.researchers.iter().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(snap.types.iter().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(snap.objects.iter().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(snap.collections.iter().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(snap.functions.iter().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(snap.tools.iter().map(|r| (r.id.clone(), r.name.clone())));
    out.extend(snap.documents.iter().map(|r| (r.id.clone(), r.title.clone())));
    out
}

/// Evaluate a CQL AST the slow way: each predicate independently, then
/// intersect.
pub fn eval_ast(snap: &Snapshot, ast: &QueryAst) -> BTreeSet<Tuple> {
    let closure_on = ast.subtype_closure();
    let mut acc: Option<BTreeSet<Tuple>> = None;
    for p in &ast.predicates {
        let rows = match p {
            Predicate::Subtypes(_) => continue,
            Predicate::Type(t) => match ast.target {
                Target::Sites => sites_with_type(snap, t, closure_on),
                Target::Objects => objects_with_type(snap, t, closure_on),
                Target::Functions => functions_on_type(snap, t, closure_on),
                Target::Tools => tools_for_type(snap, t, closure_on),
                Target::Documents => documents_about_type(snap, t, closure_on),
                Target::Collections => groupings_of_type(snap, t, closure_on),
                Target::Responsible => BTreeSet::new(),
            },
            Predicate::FavoriteOf(r) => tools_favorite_of(snap, r),
            Predicate::DerivedFromType(t) => match ast.target {
                Target::Functions => derivations_from_type(snap, t, closure_on),
                Target::Objects => objects_derived_from_type(snap, t, closure_on),
                _ => BTreeSet::new(),
            },
            Predicate::AtSite(s) => objects_at_site(snap, s),
            Predicate::For(e) => responsible_for(snap, e),
        };
        acc = Some(match acc {
            None => rows,
            Some(prev) => prev.intersection(&rows).cloned().collect(),
        });
    }
    acc.unwrap_or_default()
}

// ---- lineage oracles ----

/// All (from, to) edges of the provenance graph: object -> run (input) and
/// run -> object (output and created_by).
fn provenance_edges(snap: &Snapshot) -> Vec<(EntityId, EntityId)> {
    let mut edges = Vec::new();
    for r in &snap.runs {
        for i in &r.inputs {
            edges.push((i.clone(), r.id.clone()));
        }
        for o in &r.outputs {
            edges.push((r.id.clone(), o.clone()));
        }
    }
    for o in &snap.objects {
        if let Some(run) = &o.created_by {
            edges.push((run.clone(), o.id.clone()));
        }
    }
    edges
}

fn reachable(edges: &[(EntityId, EntityId)], start: &EntityId, forward: bool) -> BTreeSet<EntityId> {
    let mut out = BTreeSet::from([start.clone()]);
    loop {
        let mut grew = false;
        for (from, to) in edges {
            let (src, dst) = if forward { (from, to) } else { (to, from) };
            if out.contains(src) && !out.contains(dst) {
                out.insert(dst.clone());
                grew = true;
            }
        }
        if !grew {
            return out;
        }
    }
}

/// Node ids an ancestors() graph must contain: brute-force backward closure.
pub fn ancestor_ids(store: &Store, object: &EntityId) -> BTreeSet<EntityId> {
    ancestor_ids_snap(&Snapshot::load(store), object)
}

pub fn ancestor_ids_snap(snap: &Snapshot, object: &EntityId) -> BTreeSet<EntityId> {
    reachable(&provenance_edges(snap), object, false)
}

/// Node ids a descendants() graph must contain.
pub fn descendant_ids(store: &Store, object: &EntityId) -> BTreeSet<EntityId> {
    descendant_ids_snap(&Snapshot::load(store), object)
}

pub fn descendant_ids_snap(snap: &Snapshot, object: &EntityId) -> BTreeSet<EntityId> {
    reachable(&provenance_edges(snap), object, true)
}

/// The full provenance graph contains no cycle.
pub fn provenance_is_acyclic(store: &Store) -> bool {
    let snap = Snapshot::load(store);
    let edges = provenance_edges(&snap);
    let mut nodes: BTreeSet<EntityId> = BTreeSet::new();
    for (a, b) in &edges {
        nodes.insert(a.clone());
        nodes.insert(b.clone());
    }
    for node in &nodes {
        // a node reachable from itself through at least one edge is a cycle
        let mut frontier: BTreeSet<EntityId> = edges
            .iter()
            .filter(|(f, _)| f == node)
            .map(|(_, t)| t.clone())
            .collect();
        let mut seen = frontier.clone();
        while !frontier.is_empty() {
            if seen.contains(node) {
                return false;
            }
            let mut next = BTreeSet::new();
            for (f, t) in &edges {
                if frontier.contains(f) && !seen.contains(t) {
                    next.insert(t.clone());
                    seen.insert(t.clone());
                }
            }
            frontier = next;
        }
        if seen.contains(node) {
            return false;
        }
    }
    true
}

/// Full-graph cycle scan over type parent edges and collection
/// subcollection edges.
pub fn hierarchies_are_acyclic(store: &Store) -> bool {
    let snap = Snapshot::load(store);
    let type_edges: Vec<(EntityId, EntityId)> = snap
        .types
        .iter()
        .flat_map(|t| t.parents.iter().map(move |p| (t.id.clone(), p.clone())))
        .collect();
    let collection_edges: Vec<(EntityId, EntityId)> = snap
        .collections
        .iter()
        .flat_map(|c| c.subcollections.iter().map(move |s| (c.id.clone(), s.clone())))
        .collect();
    edge_set_acyclic(&type_edges) && edge_set_acyclic(&collection_edges)
}

fn edge_set_acyclic(edges: &[(EntityId, EntityId)]) -> bool {
    let nodes: BTreeSet<&EntityId> = edges.iter().flat_map(|(a, b)| [a, b]).collect();
    for node in nodes {
        let mut frontier: BTreeSet<&EntityId> = edges
            .iter()
            .filter(|(f, _)| f == node)
            .map(|(_, t)| t)
            .collect();
        let mut seen = frontier.clone();
        while !frontier.is_empty() {
            if seen.contains(node) {
                return false;
            }
            let mut next = BTreeSet::new();
            for (f, t) in edges {
                if frontier.contains(f) && seen.insert(t) {
                    next.insert(t);
                }
            }
            frontier = next;
        }
    }
    true
}

/// Undirected reachability over the provenance graph: the connected
/// component containing `start`.
pub fn undirected_component(store: &Store, start: &EntityId) -> BTreeSet<EntityId> {
    let snap = Snapshot::load(store);
    let edges = provenance_edges(&snap);
    let mut out = BTreeSet::from([start.clone()]);
    loop {
        let mut grew = false;
        for (a, b) in &edges {
            if out.contains(a) && out.insert(b.clone()) {
                grew = true;
            }
            if out.contains(b) && out.insert(a.clone()) {
                grew = true;
            }
        }
        if !grew {
            return out;
        }
    }
}

/// BFS shortest conversion length over enabled converters, if any.
pub fn bfs_conversion_len(store: &Store, from: &EntityId, to: &EntityId) -> Option<usize> {
    bfs_conversion_len_snap(&Snapshot::load(store), from, to)
}

pub fn bfs_conversion_len_snap(snap: &Snapshot, from: &EntityId, to: &EntityId) -> Option<usize> {
    if from == to {
        return Some(0);
    }
    let mut dist: BTreeMap<EntityId, usize> = BTreeMap::from([(from.clone(), 0)]);
    let mut frontier = vec![from.clone()];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for ty in &frontier {
            let d = dist[ty];
            for f in &snap.functions {
                if f.is_converter && f.enabled && &f.input_types[0] == ty {
                    let out = &f.output_types[0];
                    if !dist.contains_key(out) {
                        dist.insert(out.clone(), d + 1);
                        if out == to {
                            return Some(d + 1);
                        }
                        next.push(out.clone());
                    }
                }
            }
        }
        frontier = next;
    }
    dist.get(to).copied()
}

/// Check a defensibility report orders runs so every producer precedes every
/// consumer of its outputs.
pub fn report_respects_topology(store: &Store, report: &str) -> bool {
    let snap = Snapshot::load(store);
    let order: Vec<EntityId> = report
        .lines()
        .filter_map(|l| l.strip_prefix("RUN "))
        .map(|id| id.parse().unwrap())
        .collect();
    let position: BTreeMap<&EntityId, usize> =
        order.iter().enumerate().map(|(i, id)| (id, i)).collect();
    for producer in &snap.runs {
        for output in &producer.outputs {
            for consumer in &snap.runs {
                if consumer.inputs.contains(output) {
                    if let (Some(&p), Some(&c)) =
                        (position.get(&producer.id), position.get(&consumer.id))
                    {
                        if p >= c {
                            return false;
                        }
                    }
                }
            }
        }
    }
    true
}
