//! Independent replay oracle for the scheduler event log. Rebuilds queue
//! state from the log alone and checks, at every event, the safety and
//! policy rules: no double assignment, capacity limits, control gating, and
//! max-priority/FIFO claim selection.

use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq)]
struct OracleJob {
    function: String,
    inputs: Vec<String>,
    priority: i64,
    constraints: Option<BTreeSet<String>>,
    state: String,
    host: Option<String>,
    fifo: u64,
    attempt: u64,
}

#[derive(Debug, Default)]
struct OracleControls {
    function_enabled: BTreeMap<String, bool>,
    host_enabled: BTreeMap<String, bool>,
    host_draining: BTreeMap<String, bool>,
    host_capacity: BTreeMap<String, u64>,
    paused: bool,
    max_retries: u64,
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct ReplayVerdict {
    pub counts: BTreeMap<String, u64>,
    pub claims_checked: u64,
    pub submitted: u64,
}

/// Replay `lines` and verify every rule; returns final counts or a
/// description of the first violation.
pub fn verify_event_log(lines: &[String]) -> Result<ReplayVerdict, String> {
    let mut jobs: BTreeMap<String, OracleJob> = BTreeMap::new();
    let mut controls = OracleControls {
        max_retries: 3,
        ..OracleControls::default()
    };
    let mut next_fifo = 1u64;
    let mut claims_checked = 0u64;
    let mut last_seq = 0u64;

    for line in lines {
        let fields: Vec<&str> = line.splitn(5, '\t').collect();
        if fields.len() != 5 {
            return Err(format!("malformed event line: {line}"));
        }
        let seq: u64 = fields[0].parse().map_err(|_| format!("bad seq in {line}"))?;
        if seq != last_seq + 1 {
            return Err(format!("event seq jumped from {last_seq} to {seq}"));
        }
        last_seq = seq;
        let event = fields[2];
        let job_id = fields[3];
        let detail: serde_json::Value =
            serde_json::from_str(fields[4]).map_err(|e| format!("bad detail: {e}"))?;

        match event {
            "submit" => {
                let constraints: Option<BTreeSet<String>> =
                    serde_json::from_value(detail["constraints"].clone()).unwrap_or(None);
                jobs.insert(
                    job_id.to_string(),
                    OracleJob {
                        function: detail["function"].as_str().unwrap_or_default().to_string(),
                        inputs: detail["inputs"]
                            .as_array()
                            .map(|a| {
                                a.iter()
                                    .filter_map(|v| v.as_str())
                                    .map(String::from)
                                    .collect()
                            })
                            .unwrap_or_default(),
                        priority: detail["priority"].as_i64().unwrap_or(0),
                        constraints,
                        state: "pending".to_string(),
                        host: None,
                        fifo: next_fifo,
                        attempt: 0,
                    },
                );
                next_fifo += 1;
            }
            "claim" => {
                claims_checked += 1;
                let host = detail["host"]
                    .as_str()
                    .ok_or_else(|| format!("claim without host: {line}"))?;
                check_claim(&jobs, &controls, job_id, host)?;
                let job = jobs.get_mut(job_id).expect("checked in check_claim");
                job.state = "assigned".to_string();
                job.host = Some(host.to_string());
            }
            "start" => {
                let job = jobs
                    .get_mut(job_id)
                    .ok_or_else(|| format!("start for unknown job {job_id}"))?;
                if job.state != "assigned" {
                    return Err(format!("start while {}: {job_id}", job.state));
                }
                if job.host.as_deref() != detail["host"].as_str() {
                    return Err(format!("start from non-assignee on {job_id}"));
                }
                job.state = "running".to_string();
            }
            "succeed" => {
                let job = jobs
                    .get_mut(job_id)
                    .ok_or_else(|| format!("succeed for unknown job {job_id}"))?;
                if job.state != "running" {
                    return Err(format!("succeed while {}: {job_id}", job.state));
                }
                job.state = "succeeded".to_string();
                job.host = None;
            }
            "fail" => {
                let job = jobs
                    .get_mut(job_id)
                    .ok_or_else(|| format!("fail for unknown job {job_id}"))?;
                if job.state != "running" {
                    return Err(format!("fail while {}: {job_id}", job.state));
                }
                job.state = "failed".to_string();
                job.host = None;
            }
            "requeue" => {
                let attempt = detail["attempt"].as_u64().unwrap_or(0);
                if attempt > controls.max_retries {
                    return Err(format!(
                        "requeue attempt {attempt} exceeds max_retries {}",
                        controls.max_retries
                    ));
                }
                let job = jobs
                    .get_mut(job_id)
                    .ok_or_else(|| format!("requeue for unknown job {job_id}"))?;
                if job.state != "failed" {
                    return Err(format!("requeue while {}: {job_id}", job.state));
                }
                job.state = "pending".to_string();
                job.attempt = attempt;
                job.fifo = next_fifo;
                next_fifo += 1;
            }
            "cancel" => {
                let job = jobs
                    .get_mut(job_id)
                    .ok_or_else(|| format!("cancel for unknown job {job_id}"))?;
                if job.state != "pending" {
                    return Err(format!("cancel while {}: {job_id}", job.state));
                }
                job.state = "cancelled".to_string();
            }
            "control" => apply_control(&mut controls, &detail)?,
            other => return Err(format!("unknown event `{other}`")),
        }

        // invariant: assigned_host set iff assigned or running, and capacity
        // holds after every event
        let mut by_host: BTreeMap<&str, u64> = BTreeMap::new();
        for (id, job) in &jobs {
            let busy = job.state == "assigned" || job.state == "running";
            if busy != job.host.is_some() {
                return Err(format!("host/state mismatch on {id} after seq {seq}"));
            }
            if let Some(host) = &job.host {
                *by_host.entry(host).or_default() += 1;
            }
        }
        for (host, busy) in by_host {
            let cap = controls.host_capacity.get(host).copied().unwrap_or(2);
            if busy > cap {
                return Err(format!("capacity exceeded on {host} after seq {seq}: {busy} > {cap}"));
            }
        }
    }

    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for job in jobs.values() {
        *counts.entry(job.state.clone()).or_default() += 1;
    }
    Ok(ReplayVerdict {
        counts,
        claims_checked,
        submitted: jobs.len() as u64,
    })
}

fn check_claim(
    jobs: &BTreeMap<String, OracleJob>,
    controls: &OracleControls,
    job_id: &str,
    host: &str,
) -> Result<(), String> {
    let job = jobs
        .get(job_id)
        .ok_or_else(|| format!("claim of unknown job {job_id}"))?;
    if job.state != "pending" {
        return Err(format!("claim of non-pending job {job_id} ({})", job.state));
    }
    if controls.paused {
        return Err(format!("claim while system paused: {job_id}"));
    }
    if !controls.host_enabled.get(host).copied().unwrap_or(true) {
        return Err(format!("claim by disabled host {host}"));
    }
    if controls.host_draining.get(host).copied().unwrap_or(false) {
        return Err(format!("claim by draining host {host}"));
    }
    if !controls
        .function_enabled
        .get(&job.function)
        .copied()
        .unwrap_or(true)
    {
        return Err(format!("claim of job {job_id} whose function is disabled"));
    }
    if let Some(constraints) = &job.constraints {
        if !constraints.contains(host) {
            return Err(format!("claim by {host} outside constraints of {job_id}"));
        }
    }
    let busy = jobs
        .values()
        .filter(|j| j.host.as_deref() == Some(host))
        .count() as u64;
    let cap = controls.host_capacity.get(host).copied().unwrap_or(2);
    if busy >= cap {
        return Err(format!("claim by {host} at capacity {cap}"));
    }

    // the claimed job must be maximal: highest priority, FIFO within it
    let done: BTreeSet<&str> = jobs
        .iter()
        .filter(|(_, j)| j.state == "succeeded")
        .map(|(id, _)| id.as_str())
        .collect();
    let eligible = jobs.iter().filter(|(_, j)| {
        j.state == "pending"
            && controls
                .function_enabled
                .get(&j.function)
                .copied()
                .unwrap_or(true)
            && j.constraints.as_ref().is_none_or(|c| c.contains(host))
            && j.inputs.iter().all(|spec| match spec.strip_prefix("job:") {
                Some(dep) => done.contains(dep),
                None => true,
            })
    });
    for (other_id, other) in eligible {
        let better = other.priority > job.priority
            || (other.priority == job.priority && other.fifo < job.fifo);
        if better && other_id != job_id {
            return Err(format!(
                "claimed {job_id} (priority {}, fifo {}) over better {other_id} (priority {}, fifo {})",
                job.priority, job.fifo, other.priority, other.fifo
            ));
        }
    }
    Ok(())
}

fn apply_control(controls: &mut OracleControls, detail: &serde_json::Value) -> Result<(), String> {
    let command = detail["command"]
        .as_str()
        .ok_or_else(|| format!("control without command: {detail}"))?;
    let host = || detail["host"].as_str().unwrap_or_default().to_string();
    let function = || detail["function"].as_str().unwrap_or_default().to_string();
    match command {
        "enable-function" => {
            controls.function_enabled.insert(function(), true);
        }
        "disable-function" => {
            controls.function_enabled.insert(function(), false);
        }
        "enable-host" => {
            controls.host_enabled.insert(host(), true);
            controls.host_draining.insert(host(), false);
        }
        "disable-host" => {
            controls.host_enabled.insert(host(), false);
        }
        "drain-host" => {
            controls.host_draining.insert(host(), true);
        }
        "set-capacity" => {
            controls
                .host_capacity
                .insert(host(), detail["capacity"].as_u64().unwrap_or(2));
        }
        "pause" => controls.paused = true,
        "resume" => controls.paused = false,
        "set-max-retries" => {
            controls.max_retries = detail["max_retries"].as_u64().unwrap_or(3);
        }
        other => return Err(format!("unknown control `{other}`")),
    }
    Ok(())
}
