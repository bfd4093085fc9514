//! The distributed processing queue. Hosts pull work with `claim`, report
//! outcomes with `report`, and operators steer everything through `control`.
//! Every state change appends one line to an event log; replaying the log
//! reconstructs the queue, which is both the durability story and the hook
//! for the replay oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, OutputSpec, RunSpec};
use crate::error::{Error, Result};
use crate::model::{now_rfc3339, EntityId, RunStatus};
use crate::store::Clock;

const LOG_HEADER: &str = "BIGSUR-JOBS v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputSpec {
    /// A concrete data object (local or remote).
    Object(EntityId),
    /// The outputs of an earlier job, resolved when that job succeeds.
    JobOutput(EntityId),
}

impl InputSpec {
    pub fn encode(&self) -> String {
        match self {
            InputSpec::Object(id) => format!("obj:{id}"),
            InputSpec::JobOutput(id) => format!("job:{id}"),
        }
    }

    pub fn decode(s: &str) -> Result<InputSpec> {
        if let Some(rest) = s.strip_prefix("obj:") {
            Ok(InputSpec::Object(rest.parse()?))
        } else if let Some(rest) = s.strip_prefix("job:") {
            Ok(InputSpec::JobOutput(rest.parse()?))
        } else {
            Err(Error::MalformedId(s.to_string(), "bad input spec".to_string()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Pending,
    Assigned,
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn as_str(&self) -> &'static str {
        match self {
            JobState::Pending => "pending",
            JobState::Assigned => "assigned",
            JobState::Running => "running",
            JobState::Succeeded => "succeeded",
            JobState::Failed => "failed",
            JobState::Cancelled => "cancelled",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, JobState::Succeeded | JobState::Failed | JobState::Cancelled)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub id: EntityId,
    pub function: EntityId,
    pub input_specs: Vec<InputSpec>,
    pub params: BTreeMap<String, String>,
    /// Larger is more urgent; FIFO within equal priority.
    pub priority: i64,
    pub constraints: Option<BTreeSet<String>>,
    pub state: JobState,
    pub assigned_host: Option<String>,
    pub attempt: u32,
    pub submitted_at: String,
    /// FIFO sequence; refreshed when a failed job requeues.
    pub seq: u64,
    pub started_at: Option<String>,
}

/// Operator controls: function-level (process) and host/system-level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlState {
    pub function_enabled: BTreeMap<String, bool>,
    pub host_enabled: BTreeMap<String, bool>,
    pub host_draining: BTreeMap<String, bool>,
    pub host_capacity: BTreeMap<String, u32>,
    pub system_paused: bool,
    pub max_retries: u32,
}

impl Default for ControlState {
    fn default() -> Self {
        ControlState {
            function_enabled: BTreeMap::new(),
            host_enabled: BTreeMap::new(),
            host_draining: BTreeMap::new(),
            host_capacity: BTreeMap::new(),
            system_paused: false,
            max_retries: 3,
        }
    }
}

impl ControlState {
    pub fn function_is_enabled(&self, function: &EntityId) -> bool {
        *self
            .function_enabled
            .get(&function.to_string())
            .unwrap_or(&true)
    }

    pub fn host_accepts_claims(&self, host: &str) -> bool {
        *self.host_enabled.get(host).unwrap_or(&true)
            && !*self.host_draining.get(host).unwrap_or(&false)
    }

    pub fn capacity_of(&self, host: &str) -> u32 {
        *self.host_capacity.get(host).unwrap_or(&2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ControlCommand {
    EnableFunction { function: String },
    DisableFunction { function: String },
    EnableHost { host: String },
    DisableHost { host: String },
    DrainHost { host: String },
    SetCapacity { host: String, capacity: u32 },
    Pause,
    Resume,
    SetMaxRetries { max_retries: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportOutcome {
    Started,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StatusSnapshot {
    pub counts: BTreeMap<String, u64>,
    pub running_by_host: BTreeMap<String, Vec<String>>,
    pub controls: ControlState,
    pub submitted_total: u64,
}

struct SchedState {
    jobs: BTreeMap<EntityId, Job>,
    controls: ControlState,
    outputs: BTreeMap<EntityId, Vec<EntityId>>,
    next_job: u64,
    next_fifo: u64,
    next_event: u64,
    log: Vec<String>,
}

impl SchedState {
    fn new() -> SchedState {
        SchedState {
            jobs: BTreeMap::new(),
            controls: ControlState::default(),
            outputs: BTreeMap::new(),
            next_job: 1,
            next_fifo: 1,
            next_event: 1,
            log: Vec::new(),
        }
    }
}

pub struct Scheduler {
    catalog: Arc<Catalog>,
    /// Reference to the site record runs are attributed to.
    site_ref: String,
    state: Mutex<SchedState>,
    log_file: Mutex<Option<File>>,
    clock: Clock,
}

impl Scheduler {
    pub fn in_memory(catalog: Arc<Catalog>, site_ref: impl Into<String>) -> Scheduler {
        Scheduler {
            catalog,
            site_ref: site_ref.into(),
            state: Mutex::new(SchedState::new()),
            log_file: Mutex::new(None),
            clock: Arc::new(now_rfc3339),
        }
    }

    /// Open the event log under `dir` and replay it.
    pub fn open(dir: &Path, catalog: Arc<Catalog>, site_ref: impl Into<String>) -> Result<Scheduler> {
        let path = dir.join("jobs.log");
        let mut state = SchedState::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let mut lines = reader.lines();
            match lines.next() {
                Some(Ok(h)) if h == LOG_HEADER => {}
                _ => return Err(Error::CorruptSnapshot("jobs log header missing".into())),
            }
            for line in lines {
                let line = line?;
                if !line.is_empty() {
                    apply_event_line(&mut state, &line)?;
                    state.log.push(line);
                }
            }
            state.next_event = state.log.len() as u64 + 1;
        } else {
            let mut f = File::create(&path)?;
            writeln!(f, "{LOG_HEADER}")?;
        }
        let file = OpenOptions::new().append(true).open(&path)?;
        Ok(Scheduler {
            catalog,
            site_ref: site_ref.into(),
            state: Mutex::new(state),
            log_file: Mutex::new(Some(file)),
            clock: Arc::new(now_rfc3339),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Scheduler {
        self.clock = clock;
        self
    }

    /// The event log so far, one line per event.
    pub fn event_log(&self) -> Vec<String> {
        self.state.lock().expect("scheduler lock").log.clone()
    }

    pub fn job(&self, id: &EntityId) -> Result<Job> {
        self.state
            .lock()
            .expect("scheduler lock")
            .jobs
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound {
                kind: "job".to_string(),
                id: id.to_string(),
            })
    }

    /// Queue a job. The function must exist in the catalog and be enabled.
    pub fn submit(
        &self,
        function_ref: &str,
        input_specs: Vec<InputSpec>,
        params: BTreeMap<String, String>,
        priority: i64,
        constraints: Option<BTreeSet<String>>,
    ) -> Result<Job> {
        let function = self.catalog.resolve_function(function_ref)?;
        if !function.enabled {
            return Err(Error::FunctionDisabled(function.name.clone()));
        }
        // an empty constraint set means unconstrained, not unclaimable
        let constraints = constraints.filter(|c| !c.is_empty());
        let mut state = self.state.lock().expect("scheduler lock");
        let id = EntityId::new(
            self.catalog.store().site(),
            format!("job-{}", state.next_job),
        )?;
        state.next_job += 1;
        let job = Job {
            id: id.clone(),
            function: function.id.clone(),
            input_specs,
            params,
            priority,
            constraints,
            state: JobState::Pending,
            assigned_host: None,
            attempt: 0,
            submitted_at: (self.clock)(),
            seq: state.next_fifo,
            started_at: None,
        };
        state.next_fifo += 1;
        let detail = serde_json::json!({
            "constraints": job.constraints,
            "function": job.function.to_string(),
            "inputs": job.input_specs.iter().map(InputSpec::encode).collect::<Vec<_>>(),
            "params": job.params,
            "priority": job.priority,
        });
        state.jobs.insert(id.clone(), job.clone());
        self.log_event(&mut state, "submit", Some(&id), &detail)?;
        Ok(job)
    }

    /// Atomically hand the best eligible pending job to `host`, or nothing.
    pub fn claim(&self, host: &str) -> Result<Option<Job>> {
        let mut state = self.state.lock().expect("scheduler lock");
        if state.controls.system_paused || !state.controls.host_accepts_claims(host) {
            return Ok(None);
        }
        let busy = state
            .jobs
            .values()
            .filter(|j| {
                j.assigned_host.as_deref() == Some(host)
                    && matches!(j.state, JobState::Assigned | JobState::Running)
            })
            .count() as u32;
        if busy >= state.controls.capacity_of(host) {
            return Ok(None);
        }
        let succeeded: BTreeSet<EntityId> = state
            .jobs
            .values()
            .filter(|j| j.state == JobState::Succeeded)
            .map(|j| j.id.clone())
            .collect();
        let chosen = state
            .jobs
            .values()
            .filter(|j| j.state == JobState::Pending)
            .filter(|j| state.controls.function_is_enabled(&j.function))
            .filter(|j| j.constraints.as_ref().is_none_or(|c| c.contains(host)))
            .filter(|j| {
                j.input_specs.iter().all(|spec| match spec {
                    InputSpec::Object(_) => true,
                    InputSpec::JobOutput(dep) => succeeded.contains(dep),
                })
            })
            .max_by(|a, b| a.priority.cmp(&b.priority).then(b.seq.cmp(&a.seq)))
            .map(|j| j.id.clone());
        let Some(id) = chosen else {
            return Ok(None);
        };
        let job = state.jobs.get_mut(&id).expect("chosen above");
        job.state = JobState::Assigned;
        job.assigned_host = Some(host.to_string());
        let job = job.clone();
        self.log_event(
            &mut state,
            "claim",
            Some(&id),
            &serde_json::json!({"host": host}),
        )?;
        Ok(Some(job))
    }

    /// Report progress from the assigned host. A success records the run and
    /// its outputs through the catalog atomically; a failure requeues until
    /// retries run out.
    pub fn report(
        &self,
        job_id: &EntityId,
        host: &str,
        outcome: ReportOutcome,
        output_specs: Vec<OutputSpec>,
    ) -> Result<Job> {
        let mut state = self.state.lock().expect("scheduler lock");
        let job = state.jobs.get(job_id).ok_or_else(|| Error::NotFound {
            kind: "job".to_string(),
            id: job_id.to_string(),
        })?;
        match &job.assigned_host {
            None => {
                return Err(Error::IllegalTransition(format!(
                    "job {job_id} is {} and not assigned",
                    job.state.as_str()
                )))
            }
            Some(assignee) if assignee != host => {
                return Err(Error::NotAssignee {
                    job: job_id.to_string(),
                    assignee: assignee.clone(),
                    caller: host.to_string(),
                })
            }
            Some(_) => {}
        }

        match outcome {
            ReportOutcome::Started => {
                let job = state.jobs.get_mut(job_id).expect("checked above");
                if job.state != JobState::Assigned {
                    return Err(Error::IllegalTransition(format!(
                        "started only applies to assigned jobs, job is {}",
                        job.state.as_str()
                    )));
                }
                job.state = JobState::Running;
                job.started_at = Some((self.clock)());
                let out = job.clone();
                self.log_event(
                    &mut state,
                    "start",
                    Some(job_id),
                    &serde_json::json!({"host": host}),
                )?;
                Ok(out)
            }
            ReportOutcome::Succeeded => {
                let job = state.jobs.get(job_id).expect("checked above");
                if job.state != JobState::Running {
                    return Err(Error::IllegalTransition(format!(
                        "succeeded only applies to running jobs, job is {}",
                        job.state.as_str()
                    )));
                }
                // resolve inputs, consuming earlier jobs' outputs
                let mut inputs = Vec::new();
                for spec in &job.input_specs {
                    match spec {
                        InputSpec::Object(id) => inputs.push(id.clone()),
                        InputSpec::JobOutput(dep) => match state.outputs.get(dep) {
                            Some(outs) => inputs.extend(outs.iter().cloned()),
                            None => {
                                return Err(Error::IllegalTransition(format!(
                                    "dependency {dep} has no recorded outputs"
                                )))
                            }
                        },
                    }
                }
                let started = job
                    .started_at
                    .clone()
                    .unwrap_or_else(|| job.submitted_at.clone());
                let spec = RunSpec {
                    id: None,
                    function: job.function.to_string(),
                    inputs,
                    outputs: output_specs,
                    host: host.to_string(),
                    site: self.site_ref.clone(),
                    parameters: job.params.clone(),
                    started,
                    ended: (self.clock)(),
                    status: RunStatus::Succeeded,
                };
                let (run, outputs) = self.catalog.record_run(spec)?;
                let job = state.jobs.get_mut(job_id).expect("checked above");
                job.state = JobState::Succeeded;
                job.assigned_host = None;
                let out = job.clone();
                let ids: Vec<EntityId> = outputs.iter().map(|o| o.id.clone()).collect();
                state.outputs.insert(job_id.clone(), ids.clone());
                let _ = run;
                self.log_event(
                    &mut state,
                    "succeed",
                    Some(job_id),
                    &serde_json::json!({
                        "host": host,
                        "outputs": ids.iter().map(|i| i.to_string()).collect::<Vec<_>>(),
                    }),
                )?;
                Ok(out)
            }
            ReportOutcome::Failed => {
                let max_retries = state.controls.max_retries;
                let job = state.jobs.get_mut(job_id).expect("checked above");
                if job.state != JobState::Running {
                    return Err(Error::IllegalTransition(format!(
                        "failed only applies to running jobs, job is {}",
                        job.state.as_str()
                    )));
                }
                let retry = job.attempt < max_retries;
                job.state = JobState::Failed;
                job.assigned_host = None;
                self.log_event(
                    &mut state,
                    "fail",
                    Some(job_id),
                    &serde_json::json!({"host": host}),
                )?;
                if retry {
                    let next_fifo = state.next_fifo;
                    state.next_fifo += 1;
                    let job = state.jobs.get_mut(job_id).expect("checked above");
                    job.attempt += 1;
                    job.state = JobState::Pending;
                    job.started_at = None;
                    job.seq = next_fifo;
                    let attempt = job.attempt;
                    self.log_event(
                        &mut state,
                        "requeue",
                        Some(job_id),
                        &serde_json::json!({"attempt": attempt}),
                    )?;
                }
                Ok(state.jobs[job_id].clone())
            }
        }
    }

    /// Cancel a pending job.
    pub fn cancel(&self, job_id: &EntityId) -> Result<Job> {
        let mut state = self.state.lock().expect("scheduler lock");
        let job = state.jobs.get_mut(job_id).ok_or_else(|| Error::NotFound {
            kind: "job".to_string(),
            id: job_id.to_string(),
        })?;
        if job.state != JobState::Pending {
            return Err(Error::IllegalTransition(format!(
                "only pending jobs can be cancelled, job is {}",
                job.state.as_str()
            )));
        }
        job.state = JobState::Cancelled;
        let out = job.clone();
        self.log_event(&mut state, "cancel", Some(job_id), &serde_json::json!({}))?;
        Ok(out)
    }

    /// Apply an operator control. Function targets must exist in the catalog;
    /// host targets must be listed as a system of some site. The logged
    /// command carries the resolved function id so replay needs no catalog.
    pub fn control(&self, command: ControlCommand) -> Result<ControlState> {
        let command = match command {
            ControlCommand::EnableFunction { function } => {
                let id = self
                    .catalog
                    .resolve_function(&function)
                    .map_err(|_| Error::Unknown(format!("function `{function}`")))?
                    .id;
                ControlCommand::EnableFunction { function: id.to_string() }
            }
            ControlCommand::DisableFunction { function } => {
                let id = self
                    .catalog
                    .resolve_function(&function)
                    .map_err(|_| Error::Unknown(format!("function `{function}`")))?
                    .id;
                ControlCommand::DisableFunction { function: id.to_string() }
            }
            other => other,
        };
        match &command {
            ControlCommand::EnableHost { host }
            | ControlCommand::DisableHost { host }
            | ControlCommand::DrainHost { host } => {
                self.require_known_host(host)?;
            }
            ControlCommand::SetCapacity { host, capacity } => {
                self.require_known_host(host)?;
                if *capacity < 1 {
                    return Err(Error::InvalidConfig("capacity must be >= 1".to_string()));
                }
            }
            _ => {}
        }
        let mut state = self.state.lock().expect("scheduler lock");
        apply_control(&mut state.controls, &command);
        let detail = serde_json::to_value(&command).expect("command serializes");
        let controls = state.controls.clone();
        self.log_event(&mut state, "control", None, &detail)?;
        Ok(controls)
    }

    pub fn status(&self) -> StatusSnapshot {
        let state = self.state.lock().expect("scheduler lock");
        let mut counts: BTreeMap<String, u64> = [
            "pending", "assigned", "running", "succeeded", "failed", "cancelled",
        ]
        .iter()
        .map(|s| (s.to_string(), 0))
        .collect();
        let mut running_by_host: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for job in state.jobs.values() {
            *counts.get_mut(job.state.as_str()).expect("all states mapped") += 1;
            if let Some(host) = &job.assigned_host {
                running_by_host
                    .entry(host.clone())
                    .or_default()
                    .push(job.id.to_string());
            }
        }
        StatusSnapshot {
            counts,
            running_by_host,
            controls: state.controls.clone(),
            submitted_total: state.jobs.len() as u64,
        }
    }

    /// Output specs a stub worker echoes for `job`: one object per declared
    /// output type of the job's function.
    pub fn stub_outputs_for(&self, job: &Job) -> Result<Vec<OutputSpec>> {
        let function = self.catalog.resolve_function(&job.function.to_string())?;
        Ok(function
            .output_types
            .iter()
            .enumerate()
            .map(|(k, ty)| OutputSpec {
                id: None,
                name: format!("{}-out-{}", job.id.local(), k + 1),
                uri: format!("stub://{}/{}", job.id, k + 1),
                types: vec![ty.to_string()],
                site: None,
            })
            .collect())
    }

    fn require_known_host(&self, host: &str) -> Result<()> {
        let known = crate::view::CatalogView::load_kinds(self.catalog.store(), &[crate::model::RecordKind::Site])
            .sites
            .values()
            .any(|s| s.systems.iter().any(|h| h == host));
        if known {
            Ok(())
        } else {
            Err(Error::Unknown(format!("host `{host}`")))
        }
    }

    fn log_event(
        &self,
        state: &mut SchedState,
        event: &str,
        job: Option<&EntityId>,
        detail: &serde_json::Value,
    ) -> Result<()> {
        let line = format!(
            "{}\t{}\t{}\t{}\t{}",
            state.next_event,
            (self.clock)(),
            event,
            job.map(|j| j.to_string()).unwrap_or_else(|| "-".to_string()),
            detail
        );
        state.next_event += 1;
        state.log.push(line.clone());
        let mut guard = self.log_file.lock().expect("log file lock");
        if let Some(file) = guard.as_mut() {
            writeln!(file, "{line}")?;
            file.flush()?;
        }
        Ok(())
    }
}

fn apply_control(controls: &mut ControlState, command: &ControlCommand) {
    match command {
        ControlCommand::EnableFunction { function } => {
            controls.function_enabled.insert(function.clone(), true);
        }
        ControlCommand::DisableFunction { function } => {
            controls.function_enabled.insert(function.clone(), false);
        }
        ControlCommand::EnableHost { host } => {
            controls.host_enabled.insert(host.clone(), true);
            controls.host_draining.insert(host.clone(), false);
        }
        ControlCommand::DisableHost { host } => {
            controls.host_enabled.insert(host.clone(), false);
        }
        ControlCommand::DrainHost { host } => {
            controls.host_draining.insert(host.clone(), true);
        }
        ControlCommand::SetCapacity { host, capacity } => {
            controls.host_capacity.insert(host.clone(), *capacity);
        }
        ControlCommand::Pause => controls.system_paused = true,
        ControlCommand::Resume => controls.system_paused = false,
        ControlCommand::SetMaxRetries { max_retries } => controls.max_retries = *max_retries,
    }
}

/// Rebuild queue state from one event-log line. Used when opening a log and
/// by nothing else; the replay oracle in tests mirrors these semantics
/// independently.
fn apply_event_line(state: &mut SchedState, line: &str) -> Result<()> {
    let fields: Vec<&str> = line.splitn(5, '\t').collect();
    if fields.len() != 5 {
        return Err(Error::CorruptSnapshot(format!("bad event line: {line}")));
    }
    let (_seq, ts, event, job_field, detail) =
        (fields[0], fields[1], fields[2], fields[3], fields[4]);
    let detail: serde_json::Value = serde_json::from_str(detail)
        .map_err(|e| Error::CorruptSnapshot(format!("bad event detail: {e}")))?;
    match event {
        "submit" => {
            let id: EntityId = job_field.parse()?;
            let function: EntityId = detail["function"]
                .as_str()
                .ok_or_else(|| Error::CorruptSnapshot("submit missing function".into()))?
                .parse()?;
            let inputs = detail["inputs"]
                .as_array()
                .map(|a| {
                    a.iter()
                        .filter_map(|v| v.as_str())
                        .map(InputSpec::decode)
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?
                .unwrap_or_default();
            let params: BTreeMap<String, String> =
                serde_json::from_value(detail["params"].clone()).unwrap_or_default();
            let constraints: Option<BTreeSet<String>> =
                serde_json::from_value(detail["constraints"].clone()).unwrap_or_default();
            let job = Job {
                id: id.clone(),
                function,
                input_specs: inputs,
                params,
                priority: detail["priority"].as_i64().unwrap_or(0),
                constraints,
                state: JobState::Pending,
                assigned_host: None,
                attempt: 0,
                submitted_at: ts.to_string(),
                seq: state.next_fifo,
                started_at: None,
            };
            state.next_fifo += 1;
            state.next_job += 1;
            state.jobs.insert(id, job);
        }
        "claim" => {
            let id: EntityId = job_field.parse()?;
            if let Some(job) = state.jobs.get_mut(&id) {
                job.state = JobState::Assigned;
                job.assigned_host = detail["host"].as_str().map(String::from);
            }
        }
        "start" => {
            let id: EntityId = job_field.parse()?;
            if let Some(job) = state.jobs.get_mut(&id) {
                job.state = JobState::Running;
                job.started_at = Some(ts.to_string());
            }
        }
        "succeed" => {
            let id: EntityId = job_field.parse()?;
            if let Some(job) = state.jobs.get_mut(&id) {
                job.state = JobState::Succeeded;
                job.assigned_host = None;
            }
            let outputs = detail["outputs"]
                .as_array()
                .map(|a| {
                    a.iter()
                        .filter_map(|v| v.as_str())
                        .map(str::parse)
                        .collect::<Result<Vec<EntityId>>>()
                })
                .transpose()?
                .unwrap_or_default();
            state.outputs.insert(id, outputs);
        }
        "fail" => {
            let id: EntityId = job_field.parse()?;
            if let Some(job) = state.jobs.get_mut(&id) {
                job.state = JobState::Failed;
                job.assigned_host = None;
            }
        }
        "requeue" => {
            let id: EntityId = job_field.parse()?;
            let seq = state.next_fifo;
            state.next_fifo += 1;
            if let Some(job) = state.jobs.get_mut(&id) {
                job.state = JobState::Pending;
                job.attempt = detail["attempt"].as_u64().unwrap_or(0) as u32;
                job.started_at = None;
                job.seq = seq;
            }
        }
        "cancel" => {
            let id: EntityId = job_field.parse()?;
            if let Some(job) = state.jobs.get_mut(&id) {
                job.state = JobState::Cancelled;
            }
        }
        "control" => {
            let command: ControlCommand = serde_json::from_value(detail)
                .map_err(|e| Error::CorruptSnapshot(format!("bad control detail: {e}")))?;
            apply_control(&mut state.controls, &command);
        }
        other => {
            return Err(Error::CorruptSnapshot(format!("unknown event `{other}`")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ObjectSpec, Provenance};
    use crate::model::TypeKind;
    use crate::store::Store;

    fn fixture() -> (Arc<Catalog>, Scheduler) {
        let store = Arc::new(Store::in_memory("berkeley"));
        let catalog = Arc::new(Catalog::new(store));
        catalog
            .register_site(
                Some("berkeley/site-b".parse().unwrap()),
                "UC Berkeley",
                "",
                None,
                vec!["quake".into(), "shasta".into()],
            )
            .unwrap();
        catalog
            .register_researcher(Some("berkeley/r-1".parse().unwrap()), "R1", "", "UC Berkeley")
            .unwrap();
        catalog.register_type(None, "AVHRR", TypeKind::Semantic, &[]).unwrap();
        catalog.register_type(None, "NDVI Grid", TypeKind::Semantic, &[]).unwrap();
        catalog
            .register_function(
                Some("berkeley/fn-ndvi".parse().unwrap()),
                "ndvi",
                &["AVHRR".into()],
                &["NDVI Grid".into()],
                false,
                None,
            )
            .unwrap();
        catalog
            .register_object(ObjectSpec {
                id: Some("berkeley/obj-raw".parse().unwrap()),
                name: "raw".into(),
                site: "UC Berkeley".into(),
                uri: "file:///raw".into(),
                types: vec!["AVHRR".into()],
                provenance: Provenance::Researcher("berkeley/r-1".parse().unwrap()),
                created_at: Some("2024-05-01T10:00:00Z".into()),
            })
            .unwrap();
        let scheduler = Scheduler::in_memory(catalog.clone(), "UC Berkeley");
        (catalog, scheduler)
    }

    fn submit(s: &Scheduler, priority: i64) -> Job {
        s.submit(
            "ndvi",
            vec![InputSpec::Object("berkeley/obj-raw".parse().unwrap())],
            BTreeMap::new(),
            priority,
            None,
        )
        .unwrap()
    }

    #[test]
    fn submit_assigns_sequential_ids() {
        let (_c, s) = fixture();
        let a = submit(&s, 0);
        let b = submit(&s, 0);
        assert_eq!(a.id.local(), "job-1");
        assert_eq!(b.id.local(), "job-2");
        assert_eq!(a.state, JobState::Pending);
        assert_eq!(a.attempt, 0);
        assert!(a.seq < b.seq);
    }

    #[test]
    fn disabled_function_cannot_submit() {
        let (c, s) = fixture();
        c.set_function_enabled("ndvi", false).unwrap();
        let err = s
            .submit("ndvi", vec![], BTreeMap::new(), 0, None)
            .unwrap_err();
        assert_eq!(err.code(), "FunctionDisabled");
        assert_eq!(
            s.submit("nope", vec![], BTreeMap::new(), 0, None).unwrap_err().code(),
            "UnknownFunction"
        );
    }

    #[test]
    fn claim_prefers_priority_then_fifo() {
        let (_c, s) = fixture();
        let low = submit(&s, 1);
        let high = submit(&s, 5);
        let low2 = submit(&s, 1);
        assert_eq!(s.claim("quake").unwrap().unwrap().id, high.id);
        assert_eq!(s.claim("quake").unwrap().unwrap().id, low.id);
        // capacity defaults to 2, so the third claim is refused
        assert!(s.claim("quake").unwrap().is_none());
        assert_eq!(s.claim("shasta").unwrap().unwrap().id, low2.id);
    }

    #[test]
    fn controls_gate_claims() {
        let (_c, s) = fixture();
        submit(&s, 0);
        s.control(ControlCommand::Pause).unwrap();
        assert!(s.claim("quake").unwrap().is_none());
        s.control(ControlCommand::Resume).unwrap();
        s.control(ControlCommand::DisableHost { host: "quake".into() }).unwrap();
        assert!(s.claim("quake").unwrap().is_none());
        assert!(s.claim("shasta").unwrap().is_some());
        assert_eq!(
            s.control(ControlCommand::DisableHost { host: "ghost".into() }).unwrap_err().code(),
            "Unknown"
        );
    }

    #[test]
    fn drain_blocks_claims_but_allows_reports() {
        let (_c, s) = fixture();
        let job = submit(&s, 0);
        submit(&s, 0);
        assert_eq!(s.claim("quake").unwrap().unwrap().id, job.id);
        s.control(ControlCommand::DrainHost { host: "quake".into() }).unwrap();
        assert!(s.claim("quake").unwrap().is_none());
        s.report(&job.id, "quake", ReportOutcome::Started, vec![]).unwrap();
        let outs = s.stub_outputs_for(&job).unwrap();
        let done = s.report(&job.id, "quake", ReportOutcome::Succeeded, outs).unwrap();
        assert_eq!(done.state, JobState::Succeeded);
    }

    #[test]
    fn success_records_run_and_outputs() {
        let (c, s) = fixture();
        let job = submit(&s, 0);
        s.claim("quake").unwrap().unwrap();
        s.report(&job.id, "quake", ReportOutcome::Started, vec![]).unwrap();
        let outs = s.stub_outputs_for(&job).unwrap();
        s.report(&job.id, "quake", ReportOutcome::Succeeded, outs).unwrap();
        let runs = c.store().scan(crate::model::RecordKind::ProcessRun);
        assert_eq!(runs.len(), 1);
        let objects = c.store().scan(crate::model::RecordKind::DataObject);
        assert_eq!(objects.len(), 2); // raw + stub output
    }

    #[test]
    fn wrong_host_and_wrong_state_are_rejected() {
        let (_c, s) = fixture();
        let job = submit(&s, 0);
        assert_eq!(
            s.report(&job.id, "quake", ReportOutcome::Started, vec![]).unwrap_err().code(),
            "IllegalTransition"
        );
        s.claim("quake").unwrap().unwrap();
        assert_eq!(
            s.report(&job.id, "shasta", ReportOutcome::Started, vec![]).unwrap_err().code(),
            "NotAssignee"
        );
        assert_eq!(
            s.report(&job.id, "quake", ReportOutcome::Succeeded, vec![]).unwrap_err().code(),
            "IllegalTransition"
        );
    }

    #[test]
    fn failure_requeues_until_retries_exhausted() {
        let (_c, s) = fixture();
        s.control(ControlCommand::SetMaxRetries { max_retries: 3 }).unwrap();
        let job = submit(&s, 0);
        for expected_attempt in 1..=3u32 {
            let claimed = s.claim("quake").unwrap().unwrap();
            assert_eq!(claimed.id, job.id);
            s.report(&job.id, "quake", ReportOutcome::Started, vec![]).unwrap();
            let after = s.report(&job.id, "quake", ReportOutcome::Failed, vec![]).unwrap();
            assert_eq!(after.state, JobState::Pending);
            assert_eq!(after.attempt, expected_attempt);
        }
        // fourth failure is terminal
        s.claim("quake").unwrap().unwrap();
        s.report(&job.id, "quake", ReportOutcome::Started, vec![]).unwrap();
        let after = s.report(&job.id, "quake", ReportOutcome::Failed, vec![]).unwrap();
        assert_eq!(after.state, JobState::Failed);
        assert!(s.claim("quake").unwrap().is_none());
    }

    #[test]
    fn status_counts_and_conservation() {
        let (_c, s) = fixture();
        let snapshot = s.status();
        assert_eq!(snapshot.counts.values().sum::<u64>(), 0);
        submit(&s, 0);
        submit(&s, 0);
        s.claim("quake").unwrap().unwrap();
        let snapshot = s.status();
        assert_eq!(snapshot.counts["pending"], 1);
        assert_eq!(snapshot.counts["assigned"], 1);
        assert_eq!(snapshot.counts.values().sum::<u64>(), snapshot.submitted_total);
        assert_eq!(snapshot.running_by_host["quake"].len(), 1);
    }

    #[test]
    fn capacity_one_limits_same_host() {
        let (_c, s) = fixture();
        s.control(ControlCommand::SetCapacity { host: "quake".into(), capacity: 1 }).unwrap();
        submit(&s, 0);
        submit(&s, 0);
        assert!(s.claim("quake").unwrap().is_some());
        assert!(s.claim("quake").unwrap().is_none());
    }

    #[test]
    fn cancel_only_pending() {
        let (_c, s) = fixture();
        let job = submit(&s, 0);
        let cancelled = s.cancel(&job.id).unwrap();
        assert_eq!(cancelled.state, JobState::Cancelled);
        assert_eq!(s.cancel(&job.id).unwrap_err().code(), "IllegalTransition");
    }

    #[test]
    fn log_replay_rebuilds_state() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open(dir.path(), "berkeley").unwrap());
        let catalog = Arc::new(Catalog::new(store));
        catalog
            .register_site(
                Some("berkeley/site-b".parse().unwrap()),
                "UC Berkeley",
                "",
                None,
                vec!["quake".into()],
            )
            .unwrap();
        catalog.register_type(None, "AVHRR", TypeKind::Semantic, &[]).unwrap();
        catalog.register_type(None, "NDVI Grid", TypeKind::Semantic, &[]).unwrap();
        catalog
            .register_function(
                Some("berkeley/fn-ndvi".parse().unwrap()),
                "ndvi",
                &["AVHRR".into()],
                &["NDVI Grid".into()],
                false,
                None,
            )
            .unwrap();
        let job_id;
        {
            let s = Scheduler::open(dir.path(), catalog.clone(), "UC Berkeley").unwrap();
            let job = s
                .submit("ndvi", vec![], BTreeMap::new(), 7, None)
                .unwrap();
            job_id = job.id.clone();
            s.claim("quake").unwrap().unwrap();
            s.control(ControlCommand::Pause).unwrap();
        }
        let s = Scheduler::open(dir.path(), catalog, "UC Berkeley").unwrap();
        let job = s.job(&job_id).unwrap();
        assert_eq!(job.state, JobState::Assigned);
        assert_eq!(job.assigned_host.as_deref(), Some("quake"));
        assert_eq!(job.priority, 7);
        assert!(s.status().controls.system_paused);
        // paused state survived the restart, so claims still return nothing
        assert!(s.claim("quake").unwrap().is_none());
        let next = s.submit("ndvi", vec![], BTreeMap::new(), 0, None).unwrap();
        assert_eq!(next.id.local(), "job-2");
    }
}
