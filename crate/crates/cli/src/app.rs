//! One handle over an initialized data directory, with Progressive-
//! Utilization gates: a disabled feature's surface is rejected before any
//! code path can touch the store.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use bigsur_core::catalog::Catalog;
use bigsur_core::federation::Federation;
use bigsur_core::scheduler::Scheduler;
use bigsur_core::store::Store;
use bigsur_core::{Error, Result};

use crate::config::{Config, Feature, FeatureConfig};

pub struct App {
    pub home: PathBuf,
    pub config: Config,
    pub store: Arc<Store>,
    pub catalog: Arc<Catalog>,
    pub scheduler: Arc<Scheduler>,
    pub federation: Arc<Federation>,
}

pub struct InitOptions {
    pub site: String,
    pub name: String,
    pub contact: String,
    pub endpoint: Option<String>,
    pub systems: Vec<String>,
    pub listen_address: Option<String>,
    pub disabled: Vec<Feature>,
}

impl App {
    /// Create the data directory, write its configuration, and register the
    /// site record describing this installation.
    pub fn init(home: &Path, options: InitOptions) -> Result<App> {
        if home.join(crate::config::CONFIG_FILE).exists() {
            return Err(Error::AlreadyInitialized(home.display().to_string()));
        }
        std::fs::create_dir_all(home)?;
        let mut features = FeatureConfig {
            listen_address: options.listen_address,
            ..FeatureConfig::default()
        };
        for feature in options.disabled {
            features.disable(feature);
        }
        features.validate()?;

        let store = Arc::new(Store::open(home, options.site.clone())?);
        let catalog = Arc::new(Catalog::new(store.clone()));
        let site_record = catalog.register_site(
            None,
            &options.name,
            &options.contact,
            options.endpoint,
            options.systems,
        )?;

        let config = Config {
            site: options.site,
            site_record: site_record.id.to_string(),
            features,
        };
        config.save(home)?;
        Self::assemble(home.to_path_buf(), config, store, catalog)
    }

    /// Open an initialized directory.
    pub fn open(home: &Path) -> Result<App> {
        let config = Config::load(home)?;
        let store = Arc::new(Store::open(home, config.site.clone())?);
        let catalog = Arc::new(Catalog::new(store.clone()));
        Self::assemble(home.to_path_buf(), config, store, catalog)
    }

    fn assemble(
        home: PathBuf,
        config: Config,
        store: Arc<Store>,
        catalog: Arc<Catalog>,
    ) -> Result<App> {
        let scheduler = Arc::new(Scheduler::open(
            &home,
            catalog.clone(),
            config.site_record.clone(),
        )?);
        let federation = Arc::new(Federation::open(&home, store.clone())?);
        Ok(App {
            home,
            config,
            store,
            catalog,
            scheduler,
            federation,
        })
    }

    pub fn require(&self, feature: Feature) -> Result<()> {
        if self.config.features.enabled(feature) {
            Ok(())
        } else {
            Err(Error::FeatureDisabled(feature.as_str().to_string()))
        }
    }

    pub fn catalog(&self) -> Result<&Catalog> {
        self.require(Feature::Catalog)?;
        Ok(&self.catalog)
    }

    pub fn scheduler(&self) -> Result<&Scheduler> {
        self.require(Feature::Scheduler)?;
        Ok(&self.scheduler)
    }

    pub fn federation(&self) -> Result<&Federation> {
        self.require(Feature::Federation)?;
        Ok(&self.federation)
    }

    pub fn eval_query(&self, cql: &str) -> Result<bigsur_core::query::ResultSet> {
        self.require(Feature::Query)?;
        bigsur_core::query::eval_cql(&self.store, cql)
    }

    pub fn lineage_report(&self, id: &bigsur_core::model::EntityId) -> Result<String> {
        self.require(Feature::Lineage)?;
        bigsur_core::lineage::defensibility_report(&self.store, id)
    }

    pub fn lineage_graph(&self, id: &bigsur_core::model::EntityId) -> Result<serde_json::Value> {
        self.require(Feature::Lineage)?;
        let graph = bigsur_core::lineage::ancestors(&self.store, id, None)?;
        Ok(graph_json(&graph))
    }

    pub fn export_sql(&self, schema_only: bool) -> Result<String> {
        self.require(Feature::Catalog)?;
        Ok(self.store.export_sql(schema_only))
    }

    /// Hash of the full store state, used to prove rejected calls wrote
    /// nothing.
    pub fn store_hash(&self) -> String {
        bigsur_core::canon::sha256_hex(&self.store.snapshot())
    }
}

/// Deterministic JSON rendering of a provenance graph (nodes and edges in
/// sorted order), shared by the CLI and the service.
pub fn graph_json(graph: &bigsur_core::lineage::ProvenanceGraph) -> serde_json::Value {
    use bigsur_core::lineage::{EdgeKind, ProvNode};
    let nodes: Vec<serde_json::Value> = graph
        .nodes
        .values()
        .map(|n| match n {
            ProvNode::Object { id, name } => serde_json::json!({
                "id": id.to_string(), "kind": "object", "name": name,
            }),
            ProvNode::Run { id, function } => serde_json::json!({
                "id": id.to_string(), "kind": "run", "function": function.to_string(),
            }),
            ProvNode::Stub { id } => serde_json::json!({
                "id": id.to_string(), "kind": "stub",
            }),
        })
        .collect();
    let edges: Vec<serde_json::Value> = graph
        .edges
        .iter()
        .map(|(from, to, kind)| {
            serde_json::json!({
                "from": from.to_string(),
                "kind": match kind { EdgeKind::Input => "input", EdgeKind::Output => "output" },
                "to": to.to_string(),
            })
        })
        .collect();
    serde_json::json!({ "edges": edges, "nodes": nodes })
}

/// Job rendering shared by CLI and service.
pub fn job_json(job: &bigsur_core::scheduler::Job) -> serde_json::Value {
    serde_json::json!({
        "assigned_host": job.assigned_host,
        "attempt": job.attempt,
        "constraints": job.constraints,
        "function": job.function.to_string(),
        "id": job.id.to_string(),
        "inputs": job.input_specs.iter().map(|s| s.encode()).collect::<Vec<_>>(),
        "params": job.params,
        "priority": job.priority,
        "seq": job.seq,
        "state": job.state.as_str(),
        "submitted_at": job.submitted_at,
    })
}
