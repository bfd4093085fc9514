//! Seeded random catalog builders for the oracle-equivalence suites.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use bigsur_core::catalog::{Catalog, ObjectSpec, OutputSpec, Provenance, RunSpec};
use bigsur_core::model::{EntityId, RunStatus, TypeKind};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub struct RandomCatalog {
    pub type_names: Vec<String>,
    pub site_names: Vec<String>,
    pub researcher_names: Vec<String>,
    pub object_ids: Vec<EntityId>,
}

/// Populate `catalog` with a random but valid catalog of at most ~200
/// records. The type graph stays acyclic because parents are only drawn from
/// already-registered types.
pub fn random_catalog(rng: &mut StdRng, catalog: &Catalog) -> RandomCatalog {
    let n_sites = rng.random_range(2..=4);
    let mut site_names = Vec::new();
    for s in 0..n_sites {
        let name = format!("Site-{s}");
        let systems = (0..rng.random_range(0..3))
            .map(|h| format!("host-{s}-{h}"))
            .collect();
        catalog.register_site(None, &name, "", None, systems).unwrap();
        site_names.push(name);
    }

    let mut researcher_names = Vec::new();
    for r in 0..rng.random_range(2..5) {
        let name = format!("Researcher-{r}");
        let site = site_names.choose(rng).unwrap();
        catalog.register_researcher(None, &name, "", site).unwrap();
        researcher_names.push(name);
    }

    let n_types = rng.random_range(5..20);
    let mut semantic: Vec<String> = Vec::new();
    let mut storage: Vec<String> = Vec::new();
    for t in 0..n_types {
        let kind = if rng.random_bool(0.7) { TypeKind::Semantic } else { TypeKind::Storage };
        let pool: &Vec<String> = if kind == TypeKind::Semantic { &semantic } else { &storage };
        let mut parents = Vec::new();
        if !pool.is_empty() && rng.random_bool(0.5) {
            for _ in 0..rng.random_range(1..=2.min(pool.len())) {
                parents.push(pool.choose(rng).unwrap().clone());
            }
            parents.dedup();
        }
        let name = format!("Type-{t}");
        catalog.register_type(None, &name, kind, &parents).unwrap();
        if kind == TypeKind::Semantic {
            semantic.push(name);
        } else {
            storage.push(name);
        }
    }
    let mut type_names = semantic.clone();
    type_names.extend(storage.clone());

    let mut object_ids = Vec::new();
    for o in 0..rng.random_range(5..40) {
        let n_tags = rng.random_range(1..=2.min(type_names.len()));
        let mut types: Vec<String> = (0..n_tags)
            .map(|_| type_names.choose(rng).unwrap().clone())
            .collect();
        types.dedup();
        let obj = catalog
            .register_object(ObjectSpec {
                id: None,
                name: format!("object-{o}"),
                site: site_names.choose(rng).unwrap().clone(),
                uri: format!("file:///object-{o}"),
                types,
                provenance: Provenance::Researcher(
                    catalog
                        .resolve_researcher(researcher_names.choose(rng).unwrap())
                        .unwrap()
                        .id,
                ),
                created_at: Some("2024-04-01T00:00:00Z".to_string()),
            })
            .unwrap();
        object_ids.push(obj.id);
    }

    for f in 0..rng.random_range(2..10) {
        let inputs = vec![type_names.choose(rng).unwrap().clone()];
        let outputs = vec![type_names.choose(rng).unwrap().clone()];
        catalog
            .register_function(None, &format!("function-{f}"), &inputs, &outputs, false, None)
            .unwrap();
    }

    for t in 0..rng.random_range(1..5) {
        let handles = vec![type_names.choose(rng).unwrap().clone()];
        let tool = catalog
            .register_tool(None, &format!("tool-{t}"), "1.0", &handles)
            .unwrap();
        if rng.random_bool(0.6) {
            catalog
                .mark_favorite(&tool.id.to_string(), researcher_names.choose(rng).unwrap())
                .unwrap();
        }
    }

    for d in 0..rng.random_range(1..5) {
        let about = vec![type_names.choose(rng).unwrap().clone()];
        catalog
            .register_document(None, &format!("document-{d}"), &format!("https://example/{d}"), &about, &[])
            .unwrap();
    }

    let mut members: Vec<String> = Vec::new();
    for c in 0..rng.random_range(0..4) {
        let mut objs = Vec::new();
        if !object_ids.is_empty() {
            for _ in 0..rng.random_range(0..3) {
                objs.push(object_ids.choose(rng).unwrap().to_string());
            }
            objs.dedup();
        }
        let subs: Vec<String> = if members.is_empty() || rng.random_bool(0.5) {
            vec![]
        } else {
            vec![members.choose(rng).unwrap().clone()]
        };
        let coll = catalog
            .register_collection(None, &format!("collection-{c}"), &objs, &subs)
            .unwrap();
        members.push(coll.id.to_string());
    }

    for _ in 0..rng.random_range(0..6) {
        let entity = object_ids.choose(rng).map(|o| o.to_string());
        if let Some(entity) = entity {
            let _ = catalog.assign_responsibility(
                &entity,
                researcher_names.choose(rng).unwrap(),
                ["owner", "curator"].choose(rng).unwrap(),
            );
        }
    }

    RandomCatalog {
        type_names,
        site_names,
        researcher_names,
        object_ids,
    }
}

/// Register a random run DAG over fresh base objects; returns every object
/// id that exists afterwards. Acyclic by construction (runs only consume
/// already-existing objects).
pub fn random_run_dag(rng: &mut StdRng, catalog: &Catalog, max_runs: usize) -> Vec<EntityId> {
    catalog
        .register_site(None, "DAG Site", "", None, vec!["host-0".to_string()])
        .unwrap();
    catalog.register_researcher(None, "DAG Researcher", "", "DAG Site").unwrap();
    catalog.register_type(None, "DAG Data", TypeKind::Semantic, &[]).unwrap();
    catalog
        .register_function(None, "dag-step", &["DAG Data".to_string()], &["DAG Data".to_string()], false, None)
        .unwrap();

    let mut objects: Vec<EntityId> = Vec::new();
    for b in 0..rng.random_range(1..5) {
        let obj = catalog
            .register_object(ObjectSpec {
                id: None,
                name: format!("base-{b}"),
                site: "DAG Site".to_string(),
                uri: format!("file:///base-{b}"),
                types: vec!["DAG Data".to_string()],
                provenance: Provenance::Researcher(
                    catalog.resolve_researcher("DAG Researcher").unwrap().id,
                ),
                created_at: Some("2024-04-01T00:00:00Z".to_string()),
            })
            .unwrap();
        objects.push(obj.id);
    }

    let n_runs = rng.random_range(1..=max_runs);
    for r in 0..n_runs {
        let n_inputs = rng.random_range(1..=2.min(objects.len()));
        let mut inputs: Vec<EntityId> = (0..n_inputs)
            .map(|_| objects.choose(rng).unwrap().clone())
            .collect();
        inputs.dedup();
        let n_outputs = rng.random_range(1..=2);
        let outputs: Vec<OutputSpec> = (0..n_outputs)
            .map(|k| OutputSpec {
                id: None,
                name: format!("derived-{r}-{k}"),
                uri: format!("file:///derived-{r}-{k}"),
                types: vec!["DAG Data".to_string()],
                site: None,
            })
            .collect();
        let minute = r % 60;
        let hour = 1 + r / 60;
        let (_, outs) = catalog
            .record_run(RunSpec {
                id: None,
                function: "dag-step".to_string(),
                inputs,
                outputs,
                host: "host-0".to_string(),
                site: "DAG Site".to_string(),
                parameters: BTreeMap::new(),
                started: format!("2024-04-01T{hour:02}:{minute:02}:00Z"),
                ended: format!("2024-04-01T{hour:02}:{minute:02}:30Z"),
                status: RunStatus::Succeeded,
            })
            .unwrap();
        objects.extend(outs.into_iter().map(|o| o.id));
    }
    objects
}

/// Register `n_types` storage types and `n_converters` random enabled
/// converters between distinct types. Returns the type ids.
pub fn random_converter_graph(
    rng: &mut StdRng,
    catalog: &Catalog,
    n_types: usize,
    n_converters: usize,
) -> Vec<EntityId> {
    let mut ids = Vec::new();
    for t in 0..n_types {
        let node = catalog
            .register_type(None, &format!("Format-{t}"), TypeKind::Storage, &[])
            .unwrap();
        ids.push(node.id);
    }
    let mut made = 0;
    let mut attempt = 0;
    while made < n_converters && attempt < n_converters * 4 {
        attempt += 1;
        let a = ids.choose(rng).unwrap();
        let b = ids.choose(rng).unwrap();
        if a == b {
            continue;
        }
        catalog
            .register_function(
                None,
                &format!("convert-{made}"),
                &[a.to_string()],
                &[b.to_string()],
                true,
                None,
            )
            .unwrap();
        made += 1;
    }
    ids
}
