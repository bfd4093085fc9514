//! The `bigsur` command line: registration, query, lineage, jobs,
//! publishing, ingest, exports, and the service.
//!
//! Exit codes: 0 success, 1 domain error (stderr carries
//! `error[Code]: message`), 2 usage error.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use bigsur_core::catalog::{ObjectSpec, OutputSpec, Provenance, RunSpec};
use bigsur_core::federation::Selection;
use bigsur_core::model::{AssociationRelation, EntityId, RecordKind, RunStatus, TypeKind};
use bigsur_core::scheduler::{ControlCommand, InputSpec, ReportOutcome};
use bigsur_core::{Error, Result};

use crate::app::{job_json, App, InitOptions};
use crate::config::Feature;

#[derive(Parser, Debug)]
#[command(name = "bigsur", version, about = "Adaptive scientific-metadata catalog")]
pub struct Cli {
    /// Data directory; defaults to $BIGSUR_HOME
    #[arg(long, global = true, value_name = "DIR")]
    pub home: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Create and configure a data directory for this site
    Init(InitArgs),
    /// Register a record
    Add {
        #[command(subcommand)]
        kind: AddKind,
    },
    /// Record an explicit relationship between registered records
    Link {
        #[command(subcommand)]
        relation: LinkRelation,
    },
    /// Evaluate a CQL query
    Find {
        /// e.g. FIND sites WITH TYPE "AVHRR"
        cql: String,
    },
    /// Print the derivation history of an object
    Lineage {
        id: String,
        /// Print the provenance graph as JSON instead
        #[arg(long)]
        graph: bool,
    },
    /// Print the defensibility report of an object
    Report { id: String },
    /// Plan a chain of registered converters between two types
    ConvertPlan { from: String, to: String },
    /// Queue operations for the distributed processing system
    Job {
        #[command(subcommand)]
        action: JobAction,
    },
    /// Export and deliver a metadata bundle to another site
    Publish {
        /// Target site (name or id)
        #[arg(long)]
        to: String,
        /// Write the bundle to a file instead of pushing to the endpoint
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Export everything rather than since the last publication
        #[arg(long)]
        all: bool,
        /// Export records after this store sequence
        #[arg(long, conflicts_with = "all")]
        since: Option<u64>,
        /// Export one record kind
        #[arg(long, conflicts_with_all = ["all", "since"])]
        kind: Option<String>,
    },
    /// Import a bundle file published by another site
    Import { bundle: PathBuf },
    /// Bulk-load records from an ingest file
    Ingest { file: PathBuf },
    /// Export the catalog
    Export {
        #[command(subcommand)]
        what: ExportWhat,
    },
    /// Serve the HTTP API
    Serve {
        /// Listen address, overriding the configured one
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Args, Debug)]
pub struct InitArgs {
    /// Site token used as the origin of every local id
    #[arg(long)]
    pub site: String,
    /// Display name of this site
    #[arg(long)]
    pub name: String,
    #[arg(long, default_value = "")]
    pub contact: String,
    /// Network endpoint other sites can push bundles to
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Host names at this site (repeatable)
    #[arg(long = "system")]
    pub systems: Vec<String>,
    #[arg(long)]
    pub listen: Option<String>,
    /// Disable a feature (repeatable): catalog, query, lineage, scheduler, federation
    #[arg(long = "disable")]
    pub disabled: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum AddKind {
    Site {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "")]
        contact: String,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long = "system")]
        systems: Vec<String>,
        #[arg(long)]
        id: Option<String>,
    },
    Researcher {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "")]
        contact: String,
        /// Affiliated site (name or id)
        #[arg(long)]
        affiliation: String,
        #[arg(long)]
        id: Option<String>,
    },
    Type {
        #[arg(long)]
        name: String,
        /// semantic or storage
        #[arg(long)]
        kind: String,
        #[arg(long = "parent")]
        parents: Vec<String>,
        #[arg(long)]
        id: Option<String>,
    },
    Tool {
        #[arg(long)]
        name: String,
        #[arg(long)]
        version: String,
        #[arg(long = "handles")]
        handles: Vec<String>,
        #[arg(long)]
        id: Option<String>,
    },
    Document {
        #[arg(long)]
        title: String,
        #[arg(long)]
        uri: String,
        #[arg(long = "about")]
        about: Vec<String>,
        #[arg(long = "author")]
        authors: Vec<String>,
        #[arg(long)]
        id: Option<String>,
    },
    Collection {
        #[arg(long)]
        name: String,
        #[arg(long = "member")]
        members: Vec<String>,
        #[arg(long = "sub")]
        subcollections: Vec<String>,
        #[arg(long)]
        id: Option<String>,
    },
    Object {
        #[arg(long)]
        name: String,
        #[arg(long)]
        site: String,
        #[arg(long)]
        uri: String,
        #[arg(long = "type")]
        types: Vec<String>,
        /// Researcher who entered this object by hand
        #[arg(long, conflicts_with = "created_by")]
        entered_by: Option<String>,
        /// Run that produced this object
        #[arg(long)]
        created_by: Option<String>,
        #[arg(long)]
        created_at: Option<String>,
        #[arg(long)]
        id: Option<String>,
    },
    Function {
        #[arg(long)]
        name: String,
        #[arg(long = "input")]
        inputs: Vec<String>,
        #[arg(long = "output")]
        outputs: Vec<String>,
        #[arg(long)]
        converter: bool,
        #[arg(long)]
        tool: Option<String>,
        #[arg(long)]
        id: Option<String>,
    },
    Run {
        #[arg(long)]
        function: String,
        #[arg(long = "input")]
        inputs: Vec<String>,
        /// Output spec as JSON: {"name":..,"uri":..,"types":[..]} (repeatable)
        #[arg(long = "output")]
        outputs: Vec<String>,
        #[arg(long)]
        host: String,
        #[arg(long)]
        site: String,
        /// key=value (repeatable)
        #[arg(long = "param")]
        params: Vec<String>,
        #[arg(long)]
        started: String,
        #[arg(long)]
        ended: String,
        #[arg(long, default_value = "succeeded")]
        status: String,
        #[arg(long)]
        id: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum LinkRelation {
    /// Semantic type represented by a storage type
    RepresentedAs { subject: String, object: String },
    /// Type derived from another type
    DerivedFromType { subject: String, object: String },
    /// Mark a tool as a researcher's favorite
    Favorite { tool: String, researcher: String },
    /// Assign responsibility for any record
    Responsible {
        entity: String,
        researcher: String,
        #[arg(long, default_value = "owner")]
        role: String,
    },
}

#[derive(Subcommand, Debug)]
pub enum JobAction {
    Submit {
        #[arg(long)]
        function: String,
        /// obj:<id> or job:<job-id> (repeatable)
        #[arg(long = "input")]
        inputs: Vec<String>,
        #[arg(long = "param")]
        params: Vec<String>,
        #[arg(long, default_value_t = 0)]
        priority: i64,
        /// Restrict execution to these hosts (repeatable)
        #[arg(long = "constraint")]
        constraints: Vec<String>,
    },
    Claim {
        #[arg(long)]
        host: String,
    },
    Report {
        id: String,
        #[arg(long)]
        host: String,
        /// started, succeeded, or failed
        #[arg(long)]
        outcome: String,
        /// Output spec as JSON (repeatable, succeeded only)
        #[arg(long = "output")]
        outputs: Vec<String>,
    },
    /// Stub worker: claim, start, and succeed jobs, echoing each function's
    /// declared output types
    Work {
        #[arg(long)]
        host: String,
        /// Stop after this many jobs
        #[arg(long)]
        max: Option<u64>,
    },
    Cancel { id: String },
    /// Operator controls
    Ctl {
        #[command(subcommand)]
        command: CtlCommand,
    },
    Status,
}

#[derive(Subcommand, Debug)]
pub enum CtlCommand {
    Pause,
    Resume,
    EnableFunction { function: String },
    DisableFunction { function: String },
    EnableHost { host: String },
    DisableHost { host: String },
    DrainHost { host: String },
    SetCapacity { host: String, capacity: u32 },
    SetMaxRetries { max_retries: u32 },
}

#[derive(Subcommand, Debug)]
pub enum ExportWhat {
    /// Relational DDL and INSERTs for the whole catalog
    Sql {
        #[arg(long)]
        schema_only: bool,
    },
    /// A sealed metadata bundle
    Bundle {
        #[arg(long)]
        since: Option<u64>,
        #[arg(long, conflicts_with = "since")]
        kind: Option<String>,
    },
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {e}", e.code());
            1
        }
    }
}

fn home_dir(cli_home: &Option<PathBuf>) -> Result<PathBuf> {
    if let Some(home) = cli_home {
        return Ok(home.clone());
    }
    std::env::var_os("BIGSUR_HOME")
        .map(PathBuf::from)
        .ok_or_else(|| Error::InvalidConfig("no --home given and BIGSUR_HOME unset".to_string()))
}

fn parse_id(s: &str) -> Result<EntityId> {
    s.parse()
}

fn parse_opt_id(s: &Option<String>, site: &str) -> Result<Option<EntityId>> {
    match s {
        None => Ok(None),
        // a bare local token gets the local site prefix
        Some(s) if !s.contains('/') => Ok(Some(EntityId::new(site, s)?)),
        Some(s) => Ok(Some(s.parse()?)),
    }
}

fn parse_params(pairs: &[String]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for pair in pairs {
        let (k, v) = pair.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("parameter `{pair}` is not key=value"))
        })?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

fn parse_output_spec(json: &str) -> Result<OutputSpec> {
    serde_json::from_str(json)
        .map_err(|e| Error::InvalidConfig(format!("bad output spec `{json}`: {e}")))
}

fn parse_input_specs(inputs: &[String]) -> Result<Vec<InputSpec>> {
    inputs.iter().map(|s| InputSpec::decode(s)).collect()
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Init(args) => {
            let home = home_dir(&cli.home)?;
            let disabled = args
                .disabled
                .iter()
                .map(|d| Feature::parse(d))
                .collect::<Result<Vec<_>>>()?;
            let app = App::init(
                &home,
                InitOptions {
                    site: args.site,
                    name: args.name,
                    contact: args.contact,
                    endpoint: args.endpoint,
                    systems: args.systems,
                    listen_address: args.listen,
                    disabled,
                },
            )?;
            writeln!(
                out,
                "initialized {} site {} ({})",
                app.home.display(),
                app.config.site,
                app.config.site_record
            )?;
            Ok(())
        }
        Command::Serve { listen } => {
            let app = std::sync::Arc::new(App::open(&home_dir(&cli.home)?)?);
            let listen = listen
                .or_else(|| app.config.features.listen_address.clone())
                .ok_or_else(|| {
                    Error::InvalidConfig("no listen address configured; use --listen".to_string())
                })?;
            let handle = crate::serve::serve_background(app, &listen)?;
            writeln!(out, "listening on {}", handle.addr())?;
            handle.join();
            Ok(())
        }
        other => {
            let app = App::open(&home_dir(&cli.home)?)?;
            let text = execute(&app, other)?;
            write!(out, "{text}")?;
            Ok(())
        }
    }
}

/// Execute a non-init, non-serve command and return its stdout text.
/// Shared by the CLI dispatcher and the ingest directive interpreter.
pub fn execute(app: &App, command: Command) -> Result<String> {
    match command {
        Command::Init(_) | Command::Serve { .. } => {
            Err(Error::InvalidConfig("not executable here".to_string()))
        }
        Command::Add { kind } => do_add(app, kind),
        Command::Link { relation } => do_link(app, relation),
        Command::Find { cql } => Ok(app.eval_query(&cql)?.to_text()),
        Command::Lineage { id, graph } => {
            let id = parse_id(&id)?;
            if graph {
                Ok(format!("{}\n", app.lineage_graph(&id)?))
            } else {
                app.lineage_report(&id)
            }
        }
        Command::Report { id } => app.lineage_report(&parse_id(&id)?),
        Command::ConvertPlan { from, to } => {
            app.require(Feature::Lineage)?;
            let plan = bigsur_core::lineage::plan_conversion(&app.store, &from, &to)?;
            let type_name = |id: &EntityId| -> String {
                app.catalog
                    .resolve_type(&id.to_string())
                    .map(|t| t.name)
                    .unwrap_or_else(|_| id.to_string())
            };
            let mut text = format!(
                "PLAN {} ({}) -> {} ({})\n",
                plan.from,
                type_name(&plan.from),
                plan.to,
                type_name(&plan.to)
            );
            if plan.steps.is_empty() {
                text.push_str("no steps needed\n");
            }
            for (n, step) in plan.steps.iter().enumerate() {
                text.push_str(&format!(
                    "STEP {} {} ({}) {} -> {}\n",
                    n + 1,
                    step.name,
                    step.id,
                    type_name(&step.input_types[0]),
                    type_name(&step.output_types[0]),
                ));
            }
            Ok(text)
        }
        Command::Job { action } => do_job(app, action),
        Command::Publish {
            to,
            out,
            all,
            since,
            kind,
        } => {
            let federation = app.federation()?;
            let target = app.catalog.resolve_site(&to)?;
            let selection = if all {
                Some(Selection::All)
            } else if let Some(since) = since {
                Some(Selection::SinceCursor(since))
            } else {
                kind.map(|k| RecordKind::parse(&k).map(Selection::ByKind))
                    .transpose()?
            };
            let transport = crate::serve::HttpTransport;
            let record =
                federation.publish(&target, selection, out.as_deref(), Some(&transport))?;
            Ok(format!(
                "{}\n",
                serde_json::json!({
                    "bundle_seal": record.bundle_seal,
                    "cursor": record.cursor,
                    "id": record.id.to_string(),
                    "selection": record.selection,
                    "target_site": record.target_site.to_string(),
                })
            ))
        }
        Command::Import { bundle } => {
            let federation = app.federation()?;
            let text = std::fs::read_to_string(&bundle)?;
            let report = federation.import_bundle(&text)?;
            Ok(format!("{}\n", serde_json::to_value(&report).expect("serializes")))
        }
        Command::Ingest { file } => {
            app.require(Feature::Catalog)?;
            let report = crate::ingest::ingest_file(app, &file)?;
            let mut text = format!("accepted {}\nrejected {}\n", report.accepted, report.rejected.len());
            for (line, code, message) in &report.rejected {
                text.push_str(&format!("line {line}: {code}: {message}\n"));
            }
            Ok(text)
        }
        Command::Export { what } => match what {
            ExportWhat::Sql { schema_only } => app.export_sql(schema_only),
            ExportWhat::Bundle { since, kind } => {
                let federation = app.federation()?;
                let selection = if let Some(since) = since {
                    Selection::SinceCursor(since)
                } else if let Some(kind) = kind {
                    Selection::ByKind(RecordKind::parse(&kind)?)
                } else {
                    Selection::All
                };
                Ok(federation.export_bundle(&selection).text)
            }
        },
    }
}

fn do_add(app: &App, kind: AddKind) -> Result<String> {
    let catalog = app.catalog()?;
    let site_token = app.config.site.clone();
    match kind {
        AddKind::Site {
            name,
            contact,
            endpoint,
            systems,
            id,
        } => {
            let site = catalog.register_site(
                parse_opt_id(&id, &site_token)?,
                &name,
                &contact,
                endpoint,
                systems,
            )?;
            Ok(format!("site {}\n", site.id))
        }
        AddKind::Researcher {
            name,
            contact,
            affiliation,
            id,
        } => {
            let r = catalog.register_researcher(
                parse_opt_id(&id, &site_token)?,
                &name,
                &contact,
                &affiliation,
            )?;
            Ok(format!("researcher {}\n", r.id))
        }
        AddKind::Type {
            name,
            kind,
            parents,
            id,
        } => {
            let kind = match kind.as_str() {
                "semantic" => TypeKind::Semantic,
                "storage" => TypeKind::Storage,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "type kind must be semantic or storage, got `{other}`"
                    )))
                }
            };
            let node =
                catalog.register_type(parse_opt_id(&id, &site_token)?, &name, kind, &parents)?;
            Ok(format!("type_node {}\n", node.id))
        }
        AddKind::Tool {
            name,
            version,
            handles,
            id,
        } => {
            let tool =
                catalog.register_tool(parse_opt_id(&id, &site_token)?, &name, &version, &handles)?;
            Ok(format!("tool {}\n", tool.id))
        }
        AddKind::Document {
            title,
            uri,
            about,
            authors,
            id,
        } => {
            let doc = catalog.register_document(
                parse_opt_id(&id, &site_token)?,
                &title,
                &uri,
                &about,
                &authors,
            )?;
            Ok(format!("document {}\n", doc.id))
        }
        AddKind::Collection {
            name,
            members,
            subcollections,
            id,
        } => {
            let coll = catalog.register_collection(
                parse_opt_id(&id, &site_token)?,
                &name,
                &members,
                &subcollections,
            )?;
            Ok(format!("collection {}\n", coll.id))
        }
        AddKind::Object {
            name,
            site,
            uri,
            types,
            entered_by,
            created_by,
            created_at,
            id,
        } => {
            let provenance = match (entered_by, created_by) {
                (Some(r), None) => Provenance::Researcher(catalog.resolve_researcher(&r)?.id),
                (None, Some(run)) => Provenance::Run(parse_id(&run)?),
                _ => {
                    return Err(Error::InvalidConfig(
                        "exactly one of --entered-by / --created-by is required".to_string(),
                    ))
                }
            };
            let object = catalog.register_object(ObjectSpec {
                id: parse_opt_id(&id, &site_token)?,
                name,
                site,
                uri,
                types,
                provenance,
                created_at,
            })?;
            Ok(format!("data_object {}\n", object.id))
        }
        AddKind::Function {
            name,
            inputs,
            outputs,
            converter,
            tool,
            id,
        } => {
            let f = catalog.register_function(
                parse_opt_id(&id, &site_token)?,
                &name,
                &inputs,
                &outputs,
                converter,
                tool.as_deref(),
            )?;
            Ok(format!("function {}\n", f.id))
        }
        AddKind::Run {
            function,
            inputs,
            outputs,
            host,
            site,
            params,
            started,
            ended,
            status,
            id,
        } => {
            let status = match status.as_str() {
                "succeeded" => RunStatus::Succeeded,
                "failed" => RunStatus::Failed,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "status must be succeeded or failed, got `{other}`"
                    )))
                }
            };
            let (run, outs) = catalog.record_run(RunSpec {
                id: parse_opt_id(&id, &site_token)?,
                function,
                inputs: inputs.iter().map(|s| parse_id(s)).collect::<Result<_>>()?,
                outputs: outputs
                    .iter()
                    .map(|s| parse_output_spec(s))
                    .collect::<Result<_>>()?,
                host,
                site,
                parameters: parse_params(&params)?,
                started,
                ended,
                status,
            })?;
            let mut text = format!("process_run {}\n", run.id);
            for o in outs {
                text.push_str(&format!("data_object {}\n", o.id));
            }
            Ok(text)
        }
    }
}

fn do_link(app: &App, relation: LinkRelation) -> Result<String> {
    let catalog = app.catalog()?;
    match relation {
        LinkRelation::RepresentedAs { subject, object } => {
            let a = catalog.associate_types(&subject, &object, AssociationRelation::RepresentedAs)?;
            Ok(format!("type_association {}\n", a.id))
        }
        LinkRelation::DerivedFromType { subject, object } => {
            let a =
                catalog.associate_types(&subject, &object, AssociationRelation::DerivedFromType)?;
            Ok(format!("type_association {}\n", a.id))
        }
        LinkRelation::Favorite { tool, researcher } => {
            let t = catalog.mark_favorite(&tool, &researcher)?;
            Ok(format!("tool {} favorites {}\n", t.id, t.favorite_of.len()))
        }
        LinkRelation::Responsible {
            entity,
            researcher,
            role,
        } => {
            let r = catalog.assign_responsibility(&entity, &researcher, &role)?;
            Ok(format!("responsibility {}\n", r.id))
        }
    }
}

fn do_job(app: &App, action: JobAction) -> Result<String> {
    let scheduler = app.scheduler()?;
    match action {
        JobAction::Submit {
            function,
            inputs,
            params,
            priority,
            constraints,
        } => {
            let constraints = if constraints.is_empty() {
                None
            } else {
                Some(constraints.into_iter().collect::<BTreeSet<String>>())
            };
            let job = scheduler.submit(
                &function,
                parse_input_specs(&inputs)?,
                parse_params(&params)?,
                priority,
                constraints,
            )?;
            Ok(format!("{}\n", job_json(&job)))
        }
        JobAction::Claim { host } => match scheduler.claim(&host)? {
            Some(job) => Ok(format!("{}\n", job_json(&job))),
            None => Ok("none\n".to_string()),
        },
        JobAction::Report {
            id,
            host,
            outcome,
            outputs,
        } => {
            let outcome = match outcome.as_str() {
                "started" => ReportOutcome::Started,
                "succeeded" => ReportOutcome::Succeeded,
                "failed" => ReportOutcome::Failed,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "outcome must be started, succeeded, or failed, got `{other}`"
                    )))
                }
            };
            let outputs = outputs
                .iter()
                .map(|s| parse_output_spec(s))
                .collect::<Result<Vec<_>>>()?;
            let job = scheduler.report(&parse_id(&id)?, &host, outcome, outputs)?;
            Ok(format!("{}\n", job_json(&job)))
        }
        JobAction::Work { host, max } => {
            let mut text = String::new();
            let mut done = 0u64;
            while max.is_none_or(|m| done < m) {
                let Some(job) = scheduler.claim(&host)? else {
                    break;
                };
                scheduler.report(&job.id, &host, ReportOutcome::Started, vec![])?;
                let outputs = scheduler.stub_outputs_for(&job)?;
                scheduler.report(&job.id, &host, ReportOutcome::Succeeded, outputs)?;
                text.push_str(&format!("{} succeeded\n", job.id));
                done += 1;
            }
            text.push_str(&format!("worked {done}\n"));
            Ok(text)
        }
        JobAction::Cancel { id } => {
            let job = scheduler.cancel(&parse_id(&id)?)?;
            Ok(format!("{}\n", job_json(&job)))
        }
        JobAction::Ctl { command } => {
            let command = match command {
                CtlCommand::Pause => ControlCommand::Pause,
                CtlCommand::Resume => ControlCommand::Resume,
                CtlCommand::EnableFunction { function } => {
                    ControlCommand::EnableFunction { function }
                }
                CtlCommand::DisableFunction { function } => {
                    ControlCommand::DisableFunction { function }
                }
                CtlCommand::EnableHost { host } => ControlCommand::EnableHost { host },
                CtlCommand::DisableHost { host } => ControlCommand::DisableHost { host },
                CtlCommand::DrainHost { host } => ControlCommand::DrainHost { host },
                CtlCommand::SetCapacity { host, capacity } => {
                    ControlCommand::SetCapacity { host, capacity }
                }
                CtlCommand::SetMaxRetries { max_retries } => {
                    ControlCommand::SetMaxRetries { max_retries }
                }
            };
            let controls = scheduler.control(command)?;
            Ok(format!("{}\n", serde_json::to_value(&controls).expect("serializes")))
        }
        JobAction::Status => {
            let status = scheduler.status();
            Ok(format!("{}\n", serde_json::to_value(&status).expect("serializes")))
        }
    }
}
