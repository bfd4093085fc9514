//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its runtime. Run with `cargo test -p bigsur-cli --test acceptance --
//! --nocapture` to see the lines.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use bigsur_cli::app::App;
use bigsur_cli::config::Feature;
use bigsur_cli::InitOptions;
use bigsur_core::catalog::{ObjectSpec, OutputSpec, Provenance, RunSpec};
use bigsur_core::federation::{Federation, Selection};
use bigsur_core::model::{EntityId, RecordKind, RunStatus, TypeKind};
use bigsur_core::scheduler::{ControlCommand, ReportOutcome, Scheduler};
use bigsur_core::store::Store;
use bigsur_core::{lineage, query};
use bigsur_testkit::{data, fixture, gen, oracle};

use rand::seq::IndexedRandom;
use rand::Rng;

struct TestApp {
    _dir: tempfile::TempDir,
    app: Arc<App>,
}

fn make_app(disabled: &[Feature]) -> TestApp {
    let dir = tempfile::tempdir().unwrap();
    let app = App::init(
        dir.path(),
        InitOptions {
            site: "berkeley".to_string(),
            name: "Berkeley Hub".to_string(),
            contact: String::new(),
            endpoint: None,
            systems: vec!["hub-0".to_string()],
            listen_address: None,
            disabled: disabled.to_vec(),
        },
    )
    .unwrap();
    TestApp {
        _dir: dir,
        app: Arc::new(app),
    }
}

fn tuples(rs: &query::ResultSet) -> BTreeSet<oracle::Tuple> {
    rs.rows
        .iter()
        .map(|r| (r.kind.clone(), r.id.to_string(), r.name.clone()))
        .collect()
}

// ---- suite bodies, shared between their own criterion and criterion 7 ----

/// Seven-questions oracle suite over the fixture catalog plus the golden CQL
/// corpus, all compared against the naive full-scan oracle.
fn suite_seven_questions(app: &App) {
    let catalog = app.catalog().expect("catalog enabled");
    fixture::build_fixture(catalog);
    let snap = oracle::Snapshot::load(&app.store);

    // fixture floor: 3+ sites, 12+ types with a depth-3 chain and a
    // represented-as pair, 20+ objects, 6+ functions with 2 converters,
    // 4+ tools, 3+ documents, 5+ responsibility records
    assert!(snap.sites.len() >= 3 + 1); // +1 for the install's own record
    assert!(snap.types.len() >= 12);
    assert!(snap.objects.len() >= 20);
    assert!(snap.functions.len() >= 6);
    assert!(snap.functions.iter().filter(|f| f.is_converter).count() >= 2);
    assert!(snap.tools.len() >= 4);
    assert!(snap.documents.len() >= 3);
    assert!(snap.responsibilities.len() >= 5);
    let regis = snap
        .types
        .iter()
        .find(|t| t.name == "REGIS Aerial Photograph")
        .expect("chain leaf");
    let mid = snap
        .types
        .iter()
        .find(|t| regis.parents.contains(&t.id))
        .expect("chain middle");
    assert!(!mid.parents.is_empty(), "subtype chain is at least depth 3");

    for flag in [true, false] {
        let opts = query::AnswerOptions {
            subtype_closure: flag,
        };
        for ty in [
            "Raster Image",
            "Aerial Photograph",
            "REGIS Aerial Photograph",
            "AVHRR",
            "Time Series",
            "Stream Gauge Series",
            "GIF",
            "Climate Model Output",
        ] {
            let cases: Vec<(query::Question, BTreeSet<oracle::Tuple>)> = vec![
                (
                    query::Question::SitesWithType(ty.into()),
                    oracle::sites_with_type(&snap, ty, flag),
                ),
                (
                    query::Question::FunctionsOnType(ty.into()),
                    oracle::functions_on_type(&snap, ty, flag),
                ),
                (
                    query::Question::GroupingsOfType(ty.into()),
                    oracle::groupings_of_type(&snap, ty, flag),
                ),
                (
                    query::Question::DerivationsFromType(ty.into()),
                    oracle::derivations_from_type(&snap, ty, flag),
                ),
                (
                    query::Question::ToolsForType {
                        type_ref: ty.into(),
                        favorite_of: None,
                    },
                    oracle::tools_for_type(&snap, ty, flag),
                ),
                (
                    query::Question::ToolsForType {
                        type_ref: ty.into(),
                        favorite_of: Some("Alice Gray".into()),
                    },
                    oracle::tools_for_type(&snap, ty, flag)
                        .intersection(&oracle::tools_favorite_of(&snap, "Alice Gray"))
                        .cloned()
                        .collect(),
                ),
                (
                    query::Question::DocumentsAboutType(ty.into()),
                    oracle::documents_about_type(&snap, ty, flag),
                ),
            ];
            for (question, expected) in cases {
                let got = query::answer(&app.store, &question, opts).unwrap();
                assert_eq!(tuples(&got), expected, "{question:?} flag={flag}");
            }
        }
        for entity in [
            "ImageViz",
            "berkeley/fn-ndvi",
            "berkeley/obj-cmo-run-1",
            "REGIS Aerial Photograph",
            "berkeley/site-s",
            "berkeley/coll-clim",
        ] {
            let got =
                query::answer(&app.store, &query::Question::ResponsibleFor(entity.into()), opts)
                    .unwrap();
            assert_eq!(tuples(&got), oracle::responsible_for(&snap, entity), "{entity}");
        }
    }

    let corpus = fixture::golden_cql_corpus();
    assert_eq!(corpus.len(), 20);
    for text in corpus {
        let ast = query::parse_cql(text).unwrap();
        let got = app.eval_query(text).unwrap();
        assert_eq!(tuples(&got), oracle::eval_ast(&snap, &ast), "{text}");
    }
}

/// Lineage closure on randomized run-DAGs plus crafted cyclic attempts.
fn suite_lineage_closure<F: Fn() -> TestApp>(make: F) {
    let mut cyclic_attempts = 0;
    for seed in 0..100u64 {
        let mut rng = gen::rng(seed);
        let harness = make();
        let catalog = harness.app.catalog().expect("catalog enabled");
        let objects = gen::random_run_dag(&mut rng, catalog, 50);
        let store = &harness.app.store;
        assert!(oracle::provenance_is_acyclic(store), "seed {seed}");

        // sample a handful of objects, always including the deepest
        let snap = oracle::Snapshot::load(store);
        let mut sample: Vec<EntityId> = objects
            .choose_multiple(&mut rng, 5.min(objects.len()))
            .cloned()
            .collect();
        sample.push(objects.last().unwrap().clone());
        for object in &sample {
            let up = lineage::ancestors(store, object, None).unwrap();
            let got: BTreeSet<EntityId> = up.nodes.keys().cloned().collect();
            assert_eq!(got, oracle::ancestor_ids_snap(&snap, object), "seed {seed} up {object}");
            let down = lineage::descendants(store, object).unwrap();
            let got: BTreeSet<EntityId> = down.nodes.keys().cloned().collect();
            assert_eq!(got, oracle::descendant_ids_snap(&snap, object), "seed {seed} down {object}");
        }

        // craft a cyclic record_run attempt on the first 20 seeds: derive an
        // ancestor object from its own descendant
        if seed < 20 {
            let target = objects.last().unwrap();
            let ancestors: Vec<EntityId> = oracle::ancestor_ids(store, target)
                .into_iter()
                .filter(|id| id != target && store.exists(RecordKind::DataObject, id))
                .collect();
            if let Some(ancestor) = ancestors.first() {
                let before = store.snapshot();
                let err = catalog
                    .record_run(RunSpec {
                        id: None,
                        function: "dag-step".into(),
                        inputs: vec![target.clone()],
                        outputs: vec![OutputSpec {
                            id: Some(ancestor.clone()),
                            name: "cycle".into(),
                            uri: "file:///cycle".into(),
                            types: vec!["DAG Data".into()],
                            site: None,
                        }],
                        host: "host-0".into(),
                        site: "DAG Site".into(),
                        parameters: Default::default(),
                        started: "2024-04-02T00:00:00Z".into(),
                        ended: "2024-04-02T00:01:00Z".into(),
                        status: RunStatus::Succeeded,
                    })
                    .unwrap_err();
                assert_eq!(err.code(), "CycleRejected", "seed {seed}");
                assert_eq!(store.snapshot(), before, "seed {seed}: rejected run must write nothing");
                cyclic_attempts += 1;
            }
        }
    }
    assert_eq!(cyclic_attempts, 20, "every crafted cyclic attempt must run");
}

/// Persistence and format round trips: snapshot/restore, bundle round trip,
/// CQL fixpoint, and the frozen DDL golden. Formats are library properties,
/// so this suite talks to the core modules directly and passes unchanged
/// whatever features the installation enables.
fn suite_persistence_formats(app: &App) {
    let catalog = app.catalog().expect("catalog enabled");
    fixture::build_fixture(catalog);

    // snapshot -> restore -> export_sql byte-identical
    let sql_before = app.store.export_sql(false);
    let snapshot = app.store.snapshot();
    let restored = Store::in_memory("berkeley");
    restored.restore(&snapshot).unwrap();
    assert_eq!(restored.export_sql(false), sql_before);

    // bundle export -> import into a fresh store -> export byte-identical
    let federation = Federation::in_memory(app.store.clone());
    let bundle = federation.export_bundle(&Selection::All);
    let fresh = Arc::new(Store::in_memory("berkeley"));
    let fresh_federation = Federation::in_memory(fresh.clone());
    let report = fresh_federation.import_bundle(&bundle.text).unwrap();
    assert_eq!(report.rejected, 0, "{:?}", report.reasons);
    assert_eq!(report.added, bundle.record_count);
    let reexport = fresh_federation.export_bundle(&Selection::All);
    assert_eq!(reexport.text, bundle.text);

    // CQL parse -> print -> parse fixpoint over the golden corpus
    for text in fixture::golden_cql_corpus() {
        let ast = query::parse_cql(text).unwrap();
        let printed = query::print_cql(&ast);
        assert_eq!(query::parse_cql(&printed).unwrap(), ast, "{text}");
        assert_eq!(query::print_cql(&query::parse_cql(&printed).unwrap()), printed);
    }

    // empty-store DDL matches the golden byte for byte
    let empty = Store::in_memory("berkeley");
    assert_eq!(empty.export_sql(true), data::SCHEMA_GOLDEN);
}

// ---- the seven criteria ----

#[test]
fn criterion_1_seven_questions_oracle_suite() {
    let start = Instant::now();
    let harness = make_app(&[]);
    suite_seven_questions(&harness.app);
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!("ACCEPTANCE 1 seven-questions oracle suite: PASS ({} ms)", elapsed.as_millis());
}

#[test]
fn criterion_2_lineage_closure() {
    let start = Instant::now();
    suite_lineage_closure(|| make_app(&[]));
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    println!("ACCEPTANCE 2 lineage closure: PASS ({} ms)", elapsed.as_millis());
}

#[test]
fn criterion_3_conversion_planning() {
    let start = Instant::now();
    for seed in 0..100u64 {
        let mut rng = gen::rng(3000 + seed);
        let (store, catalog) = fixture::site_catalog("berkeley");
        let types = gen::random_converter_graph(&mut rng, &catalog, 30, 60);
        let snap = oracle::Snapshot::load(&store);
        for _ in 0..15 {
            let from = types.choose(&mut rng).unwrap();
            let to = types.choose(&mut rng).unwrap();
            let expected = oracle::bfs_conversion_len_snap(&snap, from, to);
            let got = lineage::plan_conversion(&store, &from.to_string(), &to.to_string());
            match (expected, got) {
                (Some(len), Ok(plan)) => {
                    assert_eq!(plan.steps.len(), len, "seed {seed} {from}->{to}");
                    let again =
                        lineage::plan_conversion(&store, &from.to_string(), &to.to_string())
                            .unwrap();
                    // byte-identical across repeated runs
                    assert_eq!(format!("{:?}", again.step_ids()), format!("{:?}", plan.step_ids()));
                }
                (None, Err(e)) => assert_eq!(e.code(), "NoConversionPath", "seed {seed}"),
                (expected, got) => {
                    panic!("seed {seed} {from}->{to}: oracle {expected:?} vs planner {got:?}")
                }
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!("ACCEPTANCE 3 conversion planning: PASS ({} ms)", elapsed.as_millis());
}

#[test]
fn criterion_4_scheduler_soundness() {
    let start = Instant::now();
    let harness = make_app(&[]);
    let app = &harness.app;
    let catalog = app.catalog().unwrap();

    let hosts: Vec<String> = (0..5).map(|h| format!("host-{h}")).collect();
    catalog
        .register_site(None, "Sim Site", "", None, hosts.clone())
        .unwrap();
    catalog
        .register_type(None, "Sim Data", TypeKind::Semantic, &[])
        .unwrap();
    let functions: Vec<String> = (0..3)
        .map(|f| {
            catalog
                .register_function(
                    None,
                    &format!("sim-fn-{f}"),
                    &["Sim Data".to_string()],
                    &["Sim Data".to_string()],
                    false,
                    None,
                )
                .unwrap()
                .id
                .to_string()
        })
        .collect();

    let scheduler: &Arc<Scheduler> = &app.scheduler;
    let mut rng = gen::rng(42);
    for _ in 0..200 {
        let function = functions.choose(&mut rng).unwrap();
        let constraints = if rng.random_bool(0.3) {
            let n = rng.random_range(1..=3);
            Some(
                hosts
                    .choose_multiple(&mut rng, n)
                    .cloned()
                    .collect::<BTreeSet<String>>(),
            )
        } else {
            None
        };
        scheduler
            .submit(function, vec![], Default::default(), rng.random_range(0..5), constraints)
            .unwrap();
    }

    let done = Arc::new(AtomicBool::new(false));
    let claimers: Vec<_> = (0..16)
        .map(|i| {
            let scheduler = app.scheduler.clone();
            let done = done.clone();
            let host = hosts[i % hosts.len()].clone();
            std::thread::spawn(move || {
                let mut rng = gen::rng(500 + i as u64);
                while !done.load(Ordering::Relaxed) {
                    match scheduler.claim(&host).unwrap() {
                        Some(job) => {
                            scheduler
                                .report(&job.id, &host, ReportOutcome::Started, vec![])
                                .unwrap();
                            if rng.random_bool(0.75) {
                                let outs = scheduler.stub_outputs_for(&job).unwrap();
                                scheduler
                                    .report(&job.id, &host, ReportOutcome::Succeeded, outs)
                                    .unwrap();
                            } else {
                                scheduler
                                    .report(&job.id, &host, ReportOutcome::Failed, vec![])
                                    .unwrap();
                            }
                        }
                        None => std::thread::sleep(Duration::from_micros(300)),
                    }
                    // conservation holds at every observation point
                    let status = scheduler.status();
                    assert_eq!(
                        status.counts.values().sum::<u64>(),
                        status.submitted_total,
                        "conservation violated"
                    );
                }
            })
        })
        .collect();

    // randomized control toggles while claimers hammer the queue
    for step in 0..60 {
        let cmd = match step % 8 {
            0 => ControlCommand::Pause,
            1 => ControlCommand::Resume,
            2 => ControlCommand::DisableHost {
                host: hosts.choose(&mut rng).unwrap().clone(),
            },
            3 => ControlCommand::EnableHost {
                host: hosts.choose(&mut rng).unwrap().clone(),
            },
            4 => ControlCommand::DisableFunction {
                function: functions.choose(&mut rng).unwrap().clone(),
            },
            5 => ControlCommand::EnableFunction {
                function: functions.choose(&mut rng).unwrap().clone(),
            },
            6 => ControlCommand::SetCapacity {
                host: hosts.choose(&mut rng).unwrap().clone(),
                capacity: rng.random_range(1..=3),
            },
            _ => ControlCommand::DrainHost {
                host: hosts.choose(&mut rng).unwrap().clone(),
            },
        };
        scheduler.control(cmd).unwrap();
        std::thread::sleep(Duration::from_millis(2));
    }
    // final phase: open everything so the queue can drain
    scheduler.control(ControlCommand::Resume).unwrap();
    for host in &hosts {
        scheduler.control(ControlCommand::EnableHost { host: host.clone() }).unwrap();
        scheduler
            .control(ControlCommand::SetCapacity { host: host.clone(), capacity: 2 })
            .unwrap();
    }
    for function in &functions {
        scheduler
            .control(ControlCommand::EnableFunction { function: function.clone() })
            .unwrap();
    }

    let deadline = Instant::now() + Duration::from_secs(45);
    loop {
        let status = scheduler.status();
        let live = status.counts["pending"] + status.counts["assigned"] + status.counts["running"];
        if live == 0 {
            break;
        }
        assert!(Instant::now() < deadline, "queue failed to drain: {status:?}");
        std::thread::sleep(Duration::from_millis(5));
    }
    done.store(true, Ordering::Relaxed);
    for claimer in claimers {
        claimer.join().unwrap();
    }

    // replay the event log through the independent oracle
    let log = scheduler.event_log();
    let verdict = bigsur_testkit::replay::verify_event_log(&log).expect("replay oracle");
    assert_eq!(verdict.submitted, 200);
    assert!(verdict.claims_checked >= 200);

    // oracle counts equal the live snapshot
    let status = scheduler.status();
    for (state, count) in &verdict.counts {
        assert_eq!(status.counts[state], *count, "{state}");
    }
    assert_eq!(status.counts.values().sum::<u64>(), 200);
    assert_eq!(status.counts["pending"] + status.counts["assigned"] + status.counts["running"], 0);

    // no job was ever claimed twice without an intervening requeue
    let mut live_assignments: BTreeSet<String> = BTreeSet::new();
    for line in &log {
        let fields: Vec<&str> = line.splitn(5, '\t').collect();
        match fields[2] {
            "claim" => assert!(live_assignments.insert(fields[3].to_string()), "double assignment"),
            "succeed" | "fail" => {
                live_assignments.remove(fields[3]);
            }
            _ => {}
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!("ACCEPTANCE 4 scheduler soundness: PASS ({} ms, {} events)", elapsed.as_millis(), log.len());
}

#[test]
fn criterion_5_federation_round_trip() {
    let start = Instant::now();

    // site B (scripps) holds the input object
    let build_b = || {
        let (store, catalog) = fixture::site_catalog("scripps");
        catalog
            .register_site(Some("scripps/site-1".parse().unwrap()), "Scripps", "", None, vec!["tide".into()])
            .unwrap();
        catalog
            .register_researcher(Some("scripps/res-1".parse().unwrap()), "Bob Stone", "", "Scripps")
            .unwrap();
        catalog
            .register_type(Some("scripps/type-1".parse().unwrap()), "Ocean Temperature Profile", TypeKind::Semantic, &[])
            .unwrap();
        catalog
            .register_object(ObjectSpec {
                id: Some("scripps/obj-sst".parse().unwrap()),
                name: "sst-cast".into(),
                site: "Scripps".into(),
                uri: "file:///sst-cast".into(),
                types: vec!["Ocean Temperature Profile".into()],
                provenance: Provenance::Researcher("scripps/res-1".parse().unwrap()),
                created_at: Some("2024-04-05T09:00:00Z".into()),
            })
            .unwrap();
        let federation = Federation::in_memory(store.clone());
        (store, catalog, federation)
    };

    // site A (berkeley) runs a function over B's unpublished object
    let build_a = || {
        let (store, catalog) = fixture::site_catalog("berkeley");
        catalog
            .register_site(Some("berkeley/site-1".parse().unwrap()), "UC Berkeley", "", None, vec!["quake".into()])
            .unwrap();
        catalog
            .register_type(Some("berkeley/type-1".parse().unwrap()), "Time Series", TypeKind::Semantic, &[])
            .unwrap();
        catalog
            .register_function(
                Some("berkeley/fn-1".parse().unwrap()),
                "sst-extract",
                &["Time Series".to_string()],
                &["Time Series".to_string()],
                false,
                None,
            )
            .unwrap();
        catalog
            .record_run(RunSpec {
                id: Some("berkeley/run-1".parse().unwrap()),
                function: "sst-extract".into(),
                inputs: vec!["scripps/obj-sst".parse().unwrap()],
                outputs: vec![OutputSpec {
                    id: Some("berkeley/obj-derived".parse().unwrap()),
                    name: "derived".into(),
                    uri: "file:///derived".into(),
                    types: vec!["Time Series".into()],
                    site: None,
                }],
                host: "quake".into(),
                site: "UC Berkeley".into(),
                parameters: Default::default(),
                started: "2024-04-06T09:00:00Z".into(),
                ended: "2024-04-06T10:00:00Z".into(),
                status: RunStatus::Succeeded,
            })
            .unwrap();
        let federation = Federation::in_memory(store.clone());
        (store, catalog, federation)
    };

    let (store_a, _catalog_a, federation_a) = build_a();
    let (_store_b, _catalog_b, federation_b) = build_b();
    let derived: EntityId = "berkeley/obj-derived".parse().unwrap();

    // before publication: the report carries an unresolved stub
    let report = lineage::defensibility_report(&store_a, &derived).unwrap();
    assert!(report.contains("UNRESOLVED scripps/obj-sst"), "{report}");

    // publish B -> A
    let bundle_b = federation_b.export_bundle(&Selection::All);
    let import = federation_a.import_bundle(&bundle_b.text).unwrap();
    assert_eq!(import.rejected, 0, "{:?}", import.reasons);
    assert!(import.added > 0);

    // the report is now stub-free
    let report = lineage::defensibility_report(&store_a, &derived).unwrap();
    assert!(!report.contains("UNRESOLVED"), "{report}");
    assert!(report.contains("INPUT scripps/obj-sst (site scripps)"), "{report}");

    // double import: everything skipped, store untouched
    let hash_before = bigsur_core::canon::sha256_hex(&store_a.snapshot());
    let again = federation_a.import_bundle(&bundle_b.text).unwrap();
    assert_eq!(again.added + again.updated + again.rejected, 0);
    assert_eq!(again.skipped, bundle_b.record_count);
    assert_eq!(bigsur_core::canon::sha256_hex(&store_a.snapshot()), hash_before);

    // tampered bundle: rejected, no writes
    let tampered = bundle_b.text.replace("sst-cast", "sst-fake");
    let err = federation_a.import_bundle(&tampered).unwrap_err();
    assert_eq!(err.code(), "SealMismatch");
    assert_eq!(bigsur_core::canon::sha256_hex(&store_a.snapshot()), hash_before);

    // disjoint-edit convergence: publishing in either order yields identical
    // exports at each site, and both stores converge to the same catalog
    let run_order = |a_first: bool| {
        let (store_a, _ca, fed_a) = build_a();
        let (store_b, _cb, fed_b) = build_b();
        let bundle_a = fed_a.export_bundle(&Selection::All);
        let bundle_b = fed_b.export_bundle(&Selection::All);
        if a_first {
            fed_b.import_bundle(&bundle_a.text).unwrap();
            fed_a.import_bundle(&bundle_b.text).unwrap();
        } else {
            fed_a.import_bundle(&bundle_b.text).unwrap();
            fed_b.import_bundle(&bundle_a.text).unwrap();
        }
        (
            fed_a.export_bundle(&Selection::All).text,
            fed_b.export_bundle(&Selection::All).text,
            store_a.export_sql(false),
            store_b.export_sql(false),
        )
    };
    let (a1, b1, sql_a1, sql_b1) = run_order(true);
    let (a2, b2, sql_a2, sql_b2) = run_order(false);
    assert_eq!(a1, a2, "site A export differs across publish orders");
    assert_eq!(b1, b2, "site B export differs across publish orders");
    assert_eq!(sql_a1, sql_a2);
    assert_eq!(sql_b1, sql_b2);
    // both sites converged to the same merged catalog
    assert_eq!(sql_a1, sql_b1);

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!("ACCEPTANCE 5 federation round-trip: PASS ({} ms)", elapsed.as_millis());
}

#[test]
fn criterion_6_persistence_and_formats() {
    let start = Instant::now();
    let harness = make_app(&[]);
    suite_persistence_formats(&harness.app);
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!("ACCEPTANCE 6 persistence and formats: PASS ({} ms)", elapsed.as_millis());
}

#[test]
fn criterion_7_progressive_utilization() {
    let start = Instant::now();
    let disabled = [Feature::Scheduler, Feature::Federation];

    // suites 1, 2, and 6 pass unchanged on a notebook-style install
    {
        let harness = make_app(&disabled);
        suite_seven_questions(&harness.app);
    }
    suite_lineage_closure(|| make_app(&disabled));
    {
        let harness = make_app(&disabled);
        suite_persistence_formats(&harness.app);
    }

    // every scheduler/federation surface answers FeatureDisabled and writes
    // nothing
    let harness = make_app(&disabled);
    let app = &harness.app;
    fixture::build_fixture(app.catalog().unwrap());
    let hash_before = app.store_hash();

    assert_eq!(app.scheduler().map(|_| ()).unwrap_err().code(), "FeatureDisabled");
    assert_eq!(app.federation().map(|_| ()).unwrap_err().code(), "FeatureDisabled");

    let handle = bigsur_cli::serve_background(app.clone(), "127.0.0.1:0").unwrap();
    let base = handle.base_url();
    let disabled_calls: Vec<(&str, Option<&str>)> = vec![
        ("/jobs", Some(r#"{"function":"ndvi"}"#)),
        ("/jobs/claim", Some(r#"{"host":"quake"}"#)),
        ("/controls", Some(r#"{"command":"pause"}"#)),
        ("/status", None),
        ("/bundles", Some("tampered")),
        ("/bundles?since=0", None),
    ];
    for (path, body) in disabled_calls {
        let url = format!("{base}{path}");
        let result = match body {
            Some(body) => ureq::post(&url).content_type("application/json").send(body),
            None => ureq::get(&url).call(),
        };
        match result {
            Ok(response) => panic!("{path} answered {} instead of 404", response.status()),
            Err(ureq::Error::StatusCode(code)) => assert_eq!(code, 404, "{path}"),
            Err(other) => panic!("{path}: {other}"),
        }
        // and the error body carries the machine-readable code
        let response = match body {
            Some(body) => ureq::post(&url)
                .config()
                .http_status_as_error(false)
                .build()
                .content_type("application/json")
                .send(body),
            None => ureq::get(&url)
                .config()
                .http_status_as_error(false)
                .build()
                .call(),
        };
        let mut response = response.unwrap();
        let text = response.body_mut().read_to_string().unwrap();
        assert!(text.contains("\"FeatureDisabled\""), "{path}: {text}");
    }
    handle.stop();

    // enabled features still answer over the same service
    let handle = bigsur_cli::serve_background(app.clone(), "127.0.0.1:0").unwrap();
    let url = format!("{}/query?cql={}", handle.base_url(), urlencode("FIND sites WITH TYPE \"AVHRR\""));
    let mut response = ureq::get(&url).call().unwrap();
    let text = response.body_mut().read_to_string().unwrap();
    assert!(text.contains("UC Berkeley"));
    handle.stop();

    // CLI surfaces reject too, and the store hash never moved
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv: Vec<String> = ["bigsur", "--home", app.home.to_str().unwrap(), "job", "status"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let code = bigsur_cli::run_cli_io(&argv, &mut out, &mut err);
    assert_eq!(code, 1);
    assert!(String::from_utf8_lossy(&err).contains("FeatureDisabled"));

    assert_eq!(app.store_hash(), hash_before, "disabled surfaces must not write");

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!("ACCEPTANCE 7 progressive utilization: PASS ({} ms)", elapsed.as_millis());
}

fn urlencode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(b as char)
            }
            other => out.push_str(&format!("%{other:02X}")),
        }
    }
    out
}
