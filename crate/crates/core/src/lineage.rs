//! Provenance traversal and conversion planning. Remote references that have
//! not been published yet appear as stub nodes rather than errors; federation
//! resolves them later.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::model::{EntityId, FunctionDescriptor, RecordKind, TypeNode};
use crate::scheduler::{InputSpec, Scheduler};
use crate::store::Store;
use crate::view::CatalogView;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProvNode {
    Object { id: EntityId, name: String },
    Run { id: EntityId, function: EntityId },
    /// A reference whose record is not in the local store.
    Stub { id: EntityId },
}

impl ProvNode {
    pub fn id(&self) -> &EntityId {
        match self {
            ProvNode::Object { id, .. } | ProvNode::Run { id, .. } | ProvNode::Stub { id } => id,
        }
    }

    pub fn is_stub(&self) -> bool {
        matches!(self, ProvNode::Stub { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeKind {
    /// object -> run
    Input,
    /// run -> object
    Output,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ProvenanceGraph {
    pub nodes: BTreeMap<EntityId, ProvNode>,
    pub edges: BTreeSet<(EntityId, EntityId, EdgeKind)>,
}

impl ProvenanceGraph {
    pub fn object_ids(&self) -> BTreeSet<EntityId> {
        self.nodes
            .values()
            .filter(|n| matches!(n, ProvNode::Object { .. }))
            .map(|n| n.id().clone())
            .collect()
    }

    pub fn has_stubs(&self) -> bool {
        self.nodes.values().any(|n| n.is_stub())
    }
}

fn require_object(view: &CatalogView, id: &EntityId) -> Result<()> {
    if view.objects.contains_key(id) {
        Ok(())
    } else {
        Err(Error::NotFound {
            kind: RecordKind::DataObject.to_string(),
            id: id.to_string(),
        })
    }
}

/// Everything reachable backward through created_by and run inputs.
/// `max_depth` counts run hops; `None` is unbounded.
pub fn ancestors(store: &Store, object: &EntityId, max_depth: Option<u64>) -> Result<ProvenanceGraph> {
    let view = CatalogView::load_kinds(store, &[RecordKind::DataObject, RecordKind::ProcessRun]);
    require_object(&view, object)?;
    let mut graph = ProvenanceGraph::default();
    let mut queue: VecDeque<(EntityId, u64)> = VecDeque::new();
    queue.push_back((object.clone(), 0));
    while let Some((obj_id, depth)) = queue.pop_front() {
        let Some(obj) = view.objects.get(&obj_id) else {
            graph
                .nodes
                .entry(obj_id.clone())
                .or_insert(ProvNode::Stub { id: obj_id.clone() });
            continue;
        };
        graph.nodes.entry(obj_id.clone()).or_insert(ProvNode::Object {
            id: obj_id.clone(),
            name: obj.name.clone(),
        });
        if max_depth.is_some_and(|m| depth >= m) {
            continue;
        }
        let Some(run_id) = &obj.created_by else {
            continue;
        };
        graph
            .edges
            .insert((run_id.clone(), obj_id.clone(), EdgeKind::Output));
        let Some(run) = view.runs.get(run_id) else {
            graph
                .nodes
                .entry(run_id.clone())
                .or_insert(ProvNode::Stub { id: run_id.clone() });
            continue;
        };
        let newly_added = !graph.nodes.contains_key(run_id);
        graph.nodes.entry(run_id.clone()).or_insert(ProvNode::Run {
            id: run_id.clone(),
            function: run.function.clone(),
        });
        if newly_added {
            for input in &run.inputs {
                graph
                    .edges
                    .insert((input.clone(), run_id.clone(), EdgeKind::Input));
                queue.push_back((input.clone(), depth + 1));
            }
        }
    }
    Ok(graph)
}

/// Forward closure: runs consuming the object, their outputs, and onward.
pub fn descendants(store: &Store, object: &EntityId) -> Result<ProvenanceGraph> {
    let view = CatalogView::load_kinds(store, &[RecordKind::DataObject, RecordKind::ProcessRun]);
    require_object(&view, object)?;

    // reverse index: object id -> runs that list it as input
    let mut consumers: BTreeMap<&EntityId, Vec<&EntityId>> = BTreeMap::new();
    for run in view.runs.values() {
        for input in &run.inputs {
            consumers.entry(input).or_default().push(&run.id);
        }
    }

    let mut graph = ProvenanceGraph::default();
    let mut queue: VecDeque<EntityId> = VecDeque::new();
    queue.push_back(object.clone());
    while let Some(obj_id) = queue.pop_front() {
        match view.objects.get(&obj_id) {
            Some(obj) => {
                graph.nodes.entry(obj_id.clone()).or_insert(ProvNode::Object {
                    id: obj_id.clone(),
                    name: obj.name.clone(),
                });
            }
            None => {
                graph
                    .nodes
                    .entry(obj_id.clone())
                    .or_insert(ProvNode::Stub { id: obj_id.clone() });
                continue;
            }
        }
        for run_id in consumers.get(&obj_id).into_iter().flatten() {
            let run = &view.runs[*run_id];
            graph
                .edges
                .insert((obj_id.clone(), (*run_id).clone(), EdgeKind::Input));
            let fresh = !graph.nodes.contains_key(*run_id);
            graph.nodes.entry((*run_id).clone()).or_insert(ProvNode::Run {
                id: (*run_id).clone(),
                function: run.function.clone(),
            });
            if fresh {
                for output in &run.outputs {
                    graph
                        .edges
                        .insert(((*run_id).clone(), output.clone(), EdgeKind::Output));
                    queue.push_back(output.clone());
                }
            }
        }
    }
    Ok(graph)
}

/// Topologically ordered trace of every ancestor run: function, parameters,
/// host, site, timestamps, inputs with origin sites, outputs. Unresolved
/// references render as `UNRESOLVED <id>` lines. Byte-deterministic.
pub fn defensibility_report(store: &Store, object: &EntityId) -> Result<String> {
    let view = CatalogView::load_kinds(
        store,
        &[RecordKind::DataObject, RecordKind::ProcessRun, RecordKind::Function],
    );
    require_object(&view, object)?;
    let graph = ancestors(store, object, None)?;

    let name = &view.objects[object].name;
    let mut out = format!("DEFENSIBILITY REPORT {object} ({name})\n");

    // stub runs: stubs that produced something
    let stub_runs: BTreeSet<&EntityId> = graph
        .edges
        .iter()
        .filter(|(from, _, kind)| {
            *kind == EdgeKind::Output
                && graph.nodes.get(from).is_some_and(|n| n.is_stub())
        })
        .map(|(from, _, _)| from)
        .collect();

    let run_ids: Vec<&EntityId> = graph
        .nodes
        .values()
        .filter_map(|n| match n {
            ProvNode::Run { id, .. } => Some(id),
            _ => None,
        })
        .collect();

    if run_ids.is_empty() && stub_runs.is_empty() {
        out.push_str("no derivation history\n");
        return Ok(out);
    }

    for stub in &stub_runs {
        out.push_str(&format!("UNRESOLVED {stub}\n"));
    }

    // precedence: run A before run B when an output of A is an input of B
    let produced_by: BTreeMap<&EntityId, &EntityId> = graph
        .edges
        .iter()
        .filter(|(_, _, k)| *k == EdgeKind::Output)
        .map(|(run, obj, _)| (obj, run))
        .collect();
    let mut succ: BTreeMap<&EntityId, BTreeSet<&EntityId>> = BTreeMap::new();
    let mut indegree: BTreeMap<&EntityId, usize> =
        run_ids.iter().map(|id| (*id, 0usize)).collect();
    for (obj, run, kind) in &graph.edges {
        if *kind != EdgeKind::Input || !indegree.contains_key(run) {
            continue;
        }
        if let Some(producer) = produced_by.get(obj) {
            if indegree.contains_key(*producer) && succ.entry(producer).or_default().insert(run) {
                *indegree.get_mut(run).expect("run indexed") += 1;
            }
        }
    }

    // Kahn's algorithm; ties break by (ended timestamp, run id)
    let sort_key = |id: &EntityId| -> (String, EntityId) {
        let ended = view
            .runs
            .get(id)
            .map(|r| r.ended.clone())
            .unwrap_or_default();
        (ended, id.clone())
    };
    let mut ready: BTreeSet<(String, EntityId)> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| sort_key(id))
        .collect();
    let mut ordered: Vec<EntityId> = Vec::with_capacity(run_ids.len());
    while let Some(key) = ready.iter().next().cloned() {
        ready.remove(&key);
        let (_, run_id) = key;
        ordered.push(run_id.clone());
        if let Some(nexts) = succ.get(&run_id) {
            for next in nexts.clone() {
                let d = indegree.get_mut(next).expect("run indexed");
                *d -= 1;
                if *d == 0 {
                    ready.insert(sort_key(next));
                }
            }
        }
    }

    for run_id in &ordered {
        let run = &view.runs[run_id];
        let fn_name = view
            .functions
            .get(&run.function)
            .map(|f| f.name.clone())
            .unwrap_or_else(|| run.function.to_string());
        out.push_str(&format!("RUN {run_id}\n"));
        out.push_str(&format!("  FUNCTION {fn_name} ({})\n", run.function));
        for (k, v) in &run.parameters {
            out.push_str(&format!("  PARAM {k}={v}\n"));
        }
        out.push_str(&format!("  HOST {}\n", run.host));
        out.push_str(&format!("  SITE {}\n", run.site));
        out.push_str(&format!("  STARTED {}\n", run.started));
        out.push_str(&format!("  ENDED {}\n", run.ended));
        out.push_str(&format!("  STATUS {}\n", run.status));
        for input in &run.inputs {
            if view.objects.contains_key(input) {
                out.push_str(&format!("  INPUT {input} (site {})\n", input.site()));
            } else {
                out.push_str(&format!("  UNRESOLVED {input}\n"));
            }
        }
        for output in &run.outputs {
            out.push_str(&format!("  OUTPUT {output}\n"));
        }
    }
    Ok(out)
}

/// An ordered chain of converter functions taking `from` to `to`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversionPlan {
    pub from: EntityId,
    pub to: EntityId,
    pub steps: Vec<FunctionDescriptor>,
}

impl ConversionPlan {
    pub fn step_ids(&self) -> Vec<EntityId> {
        self.steps.iter().map(|f| f.id.clone()).collect()
    }
}

fn resolve_single_type(view: &CatalogView, reference: &str) -> Result<TypeNode> {
    if let Ok(id) = reference.parse::<EntityId>() {
        if let Some(t) = view.types.get(&id) {
            return Ok(t.clone());
        }
    }
    let matches: Vec<&TypeNode> = view
        .types
        .values()
        .filter(|t| t.name == reference)
        .collect();
    match matches.len() {
        1 => Ok(matches[0].clone()),
        _ => Err(Error::UnknownType(reference.to_string())),
    }
}

/// Shortest chain of enabled converters; among equal-length chains, the
/// lexicographically smallest sequence of function ids. `from == to` yields
/// an empty plan.
pub fn plan_conversion(store: &Store, from_ref: &str, to_ref: &str) -> Result<ConversionPlan> {
    let view = CatalogView::load_kinds(store, &[RecordKind::TypeNode, RecordKind::Function]);
    let from = resolve_single_type(&view, from_ref)?;
    let to = resolve_single_type(&view, to_ref)?;
    plan_conversion_ids(&view, &from.id, &to.id)
}

fn plan_conversion_ids(view: &CatalogView, from: &EntityId, to: &EntityId) -> Result<ConversionPlan> {
    if from == to {
        return Ok(ConversionPlan {
            from: from.clone(),
            to: to.clone(),
            steps: Vec::new(),
        });
    }

    // converter edges: input type -> (function, output type)
    let mut forward: BTreeMap<&EntityId, Vec<&FunctionDescriptor>> = BTreeMap::new();
    let mut backward: BTreeMap<&EntityId, Vec<&FunctionDescriptor>> = BTreeMap::new();
    for f in view.functions.values() {
        if f.is_converter && f.enabled {
            forward.entry(&f.input_types[0]).or_default().push(f);
            backward.entry(&f.output_types[0]).or_default().push(f);
        }
    }

    // distance-to-target by reverse BFS
    let mut dist: BTreeMap<&EntityId, u64> = BTreeMap::new();
    dist.insert(to, 0);
    let mut queue = VecDeque::from([to]);
    while let Some(ty) = queue.pop_front() {
        let d = dist[ty];
        for f in backward.get(ty).into_iter().flatten() {
            let prev = &f.input_types[0];
            if !dist.contains_key(prev) {
                dist.insert(prev, d + 1);
                queue.push_back(prev);
            }
        }
    }
    if !dist.contains_key(from) {
        return Err(Error::NoConversionPath {
            from: from.to_string(),
            to: to.to_string(),
        });
    }

    // walk greedily along shortest edges, smallest function id first
    let mut steps = Vec::new();
    let mut current = from;
    while current != to {
        let d = dist[current];
        let step = forward
            .get(current)
            .into_iter()
            .flatten()
            .filter(|f| dist.get(&f.output_types[0]).is_some_and(|nd| *nd == d - 1))
            .min_by(|a, b| a.id.cmp(&b.id))
            .expect("distance map guarantees a next hop");
        current = &step.output_types[0];
        steps.push((*step).clone());
    }
    Ok(ConversionPlan {
        from: from.clone(),
        to: to.clone(),
        steps,
    })
}

/// Plan a conversion of `object` to `target_type` and submit one job per
/// step. The source type is the object's type with the shortest plan, ties
/// broken by type id. Returns job ids in execution order.
pub fn auto_derive(
    store: &Store,
    scheduler: &Scheduler,
    object: &EntityId,
    target_ref: &str,
) -> Result<Vec<EntityId>> {
    let view = CatalogView::load_kinds(
        store,
        &[RecordKind::DataObject, RecordKind::TypeNode, RecordKind::Function],
    );
    require_object(&view, object)?;
    let target = resolve_single_type(&view, target_ref)?;
    let obj = &view.objects[object];

    let mut best: Option<ConversionPlan> = None;
    for source in &obj.types {
        if let Ok(plan) = plan_conversion_ids(&view, source, &target.id) {
            let better = match &best {
                None => true,
                Some(b) => plan.steps.len() < b.steps.len(),
            };
            if better {
                best = Some(plan);
            }
        }
    }
    let plan = best.ok_or_else(|| Error::NoConversionPath {
        from: object.to_string(),
        to: target.id.to_string(),
    })?;

    let mut job_ids = Vec::with_capacity(plan.steps.len());
    let mut input = InputSpec::Object(object.clone());
    for step in &plan.steps {
        let job = scheduler.submit(
            &step.id.to_string(),
            vec![input.clone()],
            BTreeMap::new(),
            0,
            None,
        )?;
        input = InputSpec::JobOutput(job.id.clone());
        job_ids.push(job.id);
    }
    Ok(job_ids)
}
