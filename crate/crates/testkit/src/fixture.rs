//! Shared catalog fixtures. Everything uses explicit ids and fixed
//! timestamps so stores built from them are deterministic.

use std::collections::BTreeMap;
use std::sync::Arc;

use bigsur_core::catalog::{Catalog, ObjectSpec, OutputSpec, Provenance, RunSpec};
use bigsur_core::model::{AssociationRelation, EntityId, RunStatus, TypeKind};
use bigsur_core::store::Store;

pub const T0: &str = "2024-05-01T08:00:00Z";

pub fn fixed_clock() -> bigsur_core::store::Clock {
    Arc::new(|| T0.to_string())
}

/// A deterministic in-memory store + catalog for `site`.
pub fn site_catalog(site: &str) -> (Arc<Store>, Catalog) {
    let store = Arc::new(Store::in_memory(site).with_clock(fixed_clock()));
    let catalog = Catalog::new(store.clone()).with_clock(fixed_clock());
    (store, catalog)
}

fn id(s: &str) -> EntityId {
    s.parse().unwrap()
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn enter(catalog: &Catalog, local: &str, name: &str, site: &str, types: &[&str], by: &str, at: &str) {
    catalog
        .register_object(ObjectSpec {
            id: Some(id(&format!("berkeley/{local}"))),
            name: name.to_string(),
            site: site.to_string(),
            uri: format!("file:///{local}"),
            types: strings(types),
            provenance: Provenance::Researcher(id(&format!("berkeley/{by}"))),
            created_at: Some(at.to_string()),
        })
        .unwrap();
}

/// The full acceptance fixture: three research sites across geology,
/// hydrology, oceanography, and climate modeling, with a depth-3 subtype
/// chain, a represented-as pair, converters, and run-derived lineage.
pub fn build_fixture(catalog: &Catalog) {
    // sites
    catalog
        .register_site(Some(id("berkeley/site-b")), "UC Berkeley", "ops@berkeley.example", None, strings(&["quake", "shasta"]))
        .unwrap();
    catalog
        .register_site(Some(id("berkeley/site-s")), "Scripps", "ops@scripps.example", None, strings(&["tide"]))
        .unwrap();
    catalog
        .register_site(Some(id("berkeley/site-n")), "NCAR", "ops@ncar.example", None, strings(&["cirrus", "storm"]))
        .unwrap();

    // researchers
    catalog
        .register_researcher(Some(id("berkeley/r-alice")), "Alice Gray", "alice@berkeley.example", "UC Berkeley")
        .unwrap();
    catalog
        .register_researcher(Some(id("berkeley/r-bob")), "Bob Stone", "bob@scripps.example", "Scripps")
        .unwrap();
    catalog
        .register_researcher(Some(id("berkeley/r-carol")), "Carol Rains", "carol@ncar.example", "NCAR")
        .unwrap();

    // semantic types, including the depth-3 chain
    let semantic: &[(&str, &[&str])] = &[
        ("Raster Image", &[]),
        ("Aerial Photograph", &["Raster Image"]),
        ("REGIS Aerial Photograph", &["Aerial Photograph"]),
        ("AVHRR", &[]),
        ("NDVI Grid", &[]),
        ("Time Series", &[]),
        ("Seismogram", &[]),
        ("Stream Gauge Series", &["Time Series"]),
        ("Ocean Temperature Profile", &["Time Series"]),
        ("Climate Model Output", &[]),
    ];
    for (name, parents) in semantic {
        catalog
            .register_type(None, name, TypeKind::Semantic, &strings(parents))
            .unwrap();
    }
    for name in ["GIF", "PNG", "HDF5", "NetCDF", "CSV"] {
        catalog.register_type(None, name, TypeKind::Storage, &[]).unwrap();
    }
    catalog
        .associate_types("REGIS Aerial Photograph", "GIF", AssociationRelation::RepresentedAs)
        .unwrap();
    catalog
        .associate_types("Climate Model Output", "NetCDF", AssociationRelation::RepresentedAs)
        .unwrap();

    // functions: two converters plus discipline functions
    catalog
        .register_function(Some(id("berkeley/fn-ndvi")), "ndvi", &strings(&["AVHRR"]), &strings(&["NDVI Grid"]), false, None)
        .unwrap();
    catalog
        .register_function(Some(id("berkeley/fn-g2p")), "gif2png", &strings(&["GIF"]), &strings(&["PNG"]), true, None)
        .unwrap();
    catalog
        .register_function(Some(id("berkeley/fn-p2h")), "png2hdf5", &strings(&["PNG"]), &strings(&["HDF5"]), true, None)
        .unwrap();
    catalog
        .register_function(Some(id("berkeley/fn-pick")), "quake-pick", &strings(&["Seismogram"]), &strings(&["Time Series"]), false, None)
        .unwrap();
    catalog
        .register_function(Some(id("berkeley/fn-sst")), "sst-extract", &strings(&["Ocean Temperature Profile"]), &strings(&["Time Series"]), false, None)
        .unwrap();
    catalog
        .register_function(Some(id("berkeley/fn-sim")), "climate-sim", &strings(&["Time Series"]), &strings(&["Climate Model Output"]), false, None)
        .unwrap();
    catalog
        .register_function(Some(id("berkeley/fn-flow")), "flow-forecast", &strings(&["Stream Gauge Series"]), &strings(&["Time Series", "CSV"]), false, None)
        .unwrap();

    // tools and favorites
    catalog.register_tool(Some(id("berkeley/tool-iv")), "ImageViz", "2.1", &strings(&["GIF", "PNG"])).unwrap();
    catalog.register_tool(Some(id("berkeley/tool-hp")), "HydroPlot", "1.0", &strings(&["Stream Gauge Series", "CSV"])).unwrap();
    catalog.register_tool(Some(id("berkeley/tool-ov")), "OceanView", "3.2", &strings(&["Ocean Temperature Profile"])).unwrap();
    catalog.register_tool(Some(id("berkeley/tool-cs")), "ClimateStudio", "0.9", &strings(&["Climate Model Output", "NetCDF"])).unwrap();
    catalog.mark_favorite("ImageViz", "Alice Gray").unwrap();
    catalog.mark_favorite("HydroPlot", "Bob Stone").unwrap();
    catalog.mark_favorite("ClimateStudio", "Carol Rains").unwrap();
    catalog.mark_favorite("ClimateStudio", "Alice Gray").unwrap();

    // documents
    catalog
        .register_document(Some(id("berkeley/doc-avhrr")), "AVHRR Processing Notes", "https://berkeley.example/avhrr", &strings(&["AVHRR", "NDVI Grid"]), &strings(&["Alice Gray"]))
        .unwrap();
    catalog
        .register_document(Some(id("berkeley/doc-regis")), "Interpreting REGIS Photographs", "https://berkeley.example/regis", &strings(&["REGIS Aerial Photograph"]), &strings(&["Alice Gray"]))
        .unwrap();
    catalog
        .register_document(Some(id("berkeley/doc-ocean")), "Ocean Profiles Cookbook", "https://scripps.example/otp", &strings(&["Ocean Temperature Profile"]), &strings(&["Bob Stone"]))
        .unwrap();
    catalog
        .register_document(Some(id("berkeley/doc-climate")), "Climate Grids", "https://ncar.example/grids", &strings(&["Climate Model Output"]), &strings(&["Carol Rains"]))
        .unwrap();

    // hand-entered objects across the disciplines
    for n in 1..=4 {
        enter(catalog, &format!("obj-photo-{n}"), &format!("photo-{n}"), "UC Berkeley", &["REGIS Aerial Photograph", "GIF"], "r-alice", "2024-04-01T09:00:00Z");
    }
    enter(catalog, "obj-avhrr-1", "avhrr-1", "UC Berkeley", &["AVHRR"], "r-alice", "2024-04-02T09:00:00Z");
    enter(catalog, "obj-avhrr-2", "avhrr-2", "UC Berkeley", &["AVHRR"], "r-alice", "2024-04-02T10:00:00Z");
    enter(catalog, "obj-avhrr-3", "avhrr-3", "NCAR", &["AVHRR"], "r-carol", "2024-04-02T11:00:00Z");
    enter(catalog, "obj-avhrr-4", "avhrr-4", "NCAR", &["AVHRR", "HDF5"], "r-carol", "2024-04-02T12:00:00Z");
    for n in 1..=3 {
        enter(catalog, &format!("obj-seis-{n}"), &format!("seis-{n}"), "UC Berkeley", &["Seismogram"], "r-alice", "2024-04-03T09:00:00Z");
    }
    for n in 1..=3 {
        enter(catalog, &format!("obj-gauge-{n}"), &format!("gauge-{n}"), "UC Berkeley", &["Stream Gauge Series", "CSV"], "r-alice", "2024-04-04T09:00:00Z");
    }
    for n in 1..=3 {
        enter(catalog, &format!("obj-otp-{n}"), &format!("otp-{n}"), "Scripps", &["Ocean Temperature Profile"], "r-bob", "2024-04-05T09:00:00Z");
    }
    enter(catalog, "obj-cmo-1", "cmo-1", "NCAR", &["Climate Model Output", "NetCDF"], "r-carol", "2024-04-06T09:00:00Z");
    enter(catalog, "obj-cmo-2", "cmo-2", "NCAR", &["Climate Model Output"], "r-carol", "2024-04-06T10:00:00Z");

    // runs: ndvi twice, then a two-step chain otp-1 -> ts-1 -> cmo-run-1
    run(catalog, "run-1", "ndvi", &["berkeley/obj-avhrr-1"], &[("obj-ndvi-1", "ndvi-1", &["NDVI Grid"])], "quake", "UC Berkeley", "2024-04-10T09:00:00Z", "2024-04-10T09:05:00Z");
    run(catalog, "run-2", "ndvi", &["berkeley/obj-avhrr-2"], &[("obj-ndvi-2", "ndvi-2", &["NDVI Grid"])], "shasta", "UC Berkeley", "2024-04-10T10:00:00Z", "2024-04-10T10:05:00Z");
    run(catalog, "run-3", "sst-extract", &["berkeley/obj-otp-1"], &[("obj-ts-1", "ts-1", &["Time Series"])], "tide", "Scripps", "2024-04-11T09:00:00Z", "2024-04-11T09:07:00Z");
    run(catalog, "run-4", "climate-sim", &["berkeley/obj-ts-1"], &[("obj-cmo-run-1", "cmo-run-1", &["Climate Model Output"])], "cirrus", "NCAR", "2024-04-12T09:00:00Z", "2024-04-12T11:00:00Z");

    // collections (after objects so members resolve)
    catalog
        .register_collection(Some(id("berkeley/coll-geo")), "Geology Archive", &strings(&["berkeley/obj-seis-1", "berkeley/obj-seis-2", "berkeley/obj-seis-3"]), &[])
        .unwrap();
    catalog
        .register_collection(Some(id("berkeley/coll-photos")), "Aerial Survey 1995", &strings(&["berkeley/obj-photo-1", "berkeley/obj-photo-2", "berkeley/obj-photo-3", "berkeley/obj-photo-4"]), &[])
        .unwrap();
    catalog
        .register_collection(Some(id("berkeley/coll-bay")), "Bay Area Studies", &[], &strings(&["Geology Archive", "Aerial Survey 1995"]))
        .unwrap();
    catalog
        .register_collection(Some(id("berkeley/coll-clim")), "Climate Runs", &strings(&["berkeley/obj-cmo-1", "berkeley/obj-cmo-2", "berkeley/obj-cmo-run-1"]), &[])
        .unwrap();

    // responsibilities
    for (entity, researcher, role) in [
        ("berkeley/site-s", "Bob Stone", "operator"),
        ("berkeley/fn-ndvi", "Alice Gray", "curator"),
        ("berkeley/tool-iv", "Alice Gray", "owner"),
        ("berkeley/coll-clim", "Carol Rains", "curator"),
        ("berkeley/obj-cmo-run-1", "Carol Rains", "owner"),
    ] {
        catalog.assign_responsibility(entity, researcher, role).unwrap();
    }
    let regis = catalog.resolve_type("REGIS Aerial Photograph").unwrap();
    catalog
        .assign_responsibility(&regis.id.to_string(), "Alice Gray", "owner")
        .unwrap();
}

#[allow(clippy::too_many_arguments)]
fn run(
    catalog: &Catalog,
    local: &str,
    function: &str,
    inputs: &[&str],
    outputs: &[(&str, &str, &[&str])],
    host: &str,
    site: &str,
    started: &str,
    ended: &str,
) {
    catalog
        .record_run(RunSpec {
            id: Some(id(&format!("berkeley/{local}"))),
            function: function.to_string(),
            inputs: inputs.iter().map(|s| id(s)).collect(),
            outputs: outputs
                .iter()
                .map(|(olocal, name, types)| OutputSpec {
                    id: Some(id(&format!("berkeley/{olocal}"))),
                    name: name.to_string(),
                    uri: format!("file:///{olocal}"),
                    types: strings(types),
                    site: None,
                })
                .collect(),
            host: host.to_string(),
            site: site.to_string(),
            parameters: BTreeMap::from([("version".to_string(), "1".to_string())]),
            started: started.to_string(),
            ended: ended.to_string(),
            status: RunStatus::Succeeded,
        })
        .unwrap();
}

/// Minimal chain fixture: raw -> run-1 -> l1 -> run-2 -> l2, used by the
/// defensibility golden and lineage examples. Returns (raw, l1, l2).
pub fn build_chain(catalog: &Catalog) -> (EntityId, EntityId, EntityId) {
    catalog
        .register_site(Some(id("berkeley/site-b")), "UC Berkeley", "", None, strings(&["quake"]))
        .unwrap();
    catalog
        .register_researcher(Some(id("berkeley/r-alice")), "Alice Gray", "", "UC Berkeley")
        .unwrap();
    catalog.register_type(None, "AVHRR", TypeKind::Semantic, &[]).unwrap();
    catalog.register_type(None, "NDVI Grid", TypeKind::Semantic, &[]).unwrap();
    catalog
        .register_function(Some(id("berkeley/fn-ndvi")), "ndvi", &strings(&["AVHRR"]), &strings(&["NDVI Grid"]), false, None)
        .unwrap();
    enter(catalog, "obj-raw", "raw", "UC Berkeley", &["AVHRR"], "r-alice", "2024-04-01T08:00:00Z");
    run(catalog, "run-1", "ndvi", &["berkeley/obj-raw"], &[("obj-l1", "l1", &["NDVI Grid"])], "quake", "UC Berkeley", "2024-04-01T09:00:00Z", "2024-04-01T09:10:00Z");
    run(catalog, "run-2", "ndvi", &["berkeley/obj-l1"], &[("obj-l2", "l2", &["NDVI Grid"])], "quake", "UC Berkeley", "2024-04-01T10:00:00Z", "2024-04-01T10:10:00Z");
    (id("berkeley/obj-raw"), id("berkeley/obj-l1"), id("berkeley/obj-l2"))
}

/// The golden CQL corpus: twenty queries that cover all seven question
/// surfaces against `build_fixture`.
pub fn golden_cql_corpus() -> Vec<&'static str> {
    vec![
        "FIND sites WITH TYPE \"AVHRR\"",
        "FIND sites WITH TYPE \"Raster Image\"",
        "FIND sites WITH TYPE \"REGIS Aerial Photograph\" AND SUBTYPES OFF",
        "FIND sites WITH TYPE \"Time Series\"",
        "FIND objects WITH TYPE \"REGIS Aerial Photograph\"",
        "FIND objects WITH TYPE \"Raster Image\" AND SUBTYPES OFF",
        "FIND objects WITH TYPE \"AVHRR\" AND AT SITE \"NCAR\"",
        "FIND objects WITH DERIVED FROM TYPE \"AVHRR\"",
        "FIND objects WITH TYPE \"Climate Model Output\" AND DERIVED FROM TYPE \"Time Series\"",
        "FIND functions WITH TYPE \"Time Series\"",
        "FIND functions WITH TYPE \"Time Series\" AND SUBTYPES OFF",
        "FIND functions WITH DERIVED FROM TYPE \"Ocean Temperature Profile\"",
        "FIND functions WITH TYPE \"GIF\"",
        "FIND tools WITH TYPE \"GIF\"",
        "FIND tools WITH TYPE \"Climate Model Output\" AND FAVORITE OF \"Alice Gray\"",
        "FIND tools WITH FAVORITE OF \"Bob Stone\"",
        "FIND documents WITH TYPE \"Raster Image\"",
        "FIND collections WITH TYPE \"Seismogram\"",
        "FIND collections WITH TYPE \"REGIS Aerial Photograph\"",
        "FIND responsible WITH FOR \"ImageViz\"",
    ]
}
