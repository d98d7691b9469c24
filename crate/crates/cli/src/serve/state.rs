//! In-memory session and job tables.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::Serialize;
use verba_core::backends::{Backend, FanOutPolicy};
use verba_core::capsule::{CapsuleStore, RunSpec};
use verba_core::ladder::{LadderConfig, LadderResult};
use verba_core::model::{CaseFile, InterpretationCase, ModelSpec, SamplerSettings};

/// Ladder outcome for one proposition, tied to its capsule.
#[derive(Debug, Clone, Serialize)]
pub struct LadderEntry {
    pub proposition: String,
    pub capsule_id: String,
    pub evidence_order: Vec<String>,
    pub result: LadderResult,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub session_id: String,
    pub case: InterpretationCase,
    pub models: Vec<ModelSpec>,
    pub sampler: SamplerSettings,
    pub repetitions: u32,
    /// Latest result per proposition label.
    pub ladders: BTreeMap<String, LadderEntry>,
    /// The result each latest one replaced, for before/after comparison.
    pub previous: BTreeMap<String, LadderEntry>,
    pub capsule_ids: Vec<String>,
    pub pending_job: Option<String>,
    /// Bumped on every evidence mutation.
    pub revision: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub case: CaseFile,
    pub models: Vec<ModelSpec>,
    pub sampler: SamplerSettings,
    pub repetitions: u32,
    pub revision: u64,
    pub pending_job: Option<String>,
    pub capsule_ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderView {
    pub session_id: String,
    pub revision: u64,
    pub pending_job: Option<String>,
    pub ladders: Vec<LadderEntry>,
    pub previous: Vec<LadderEntry>,
}

impl Session {
    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.session_id.clone(),
            case: CaseFile::from_case(&self.case),
            models: self.models.clone(),
            sampler: self.sampler.clone(),
            repetitions: self.repetitions,
            revision: self.revision,
            pending_job: self.pending_job.clone(),
            capsule_ids: self.capsule_ids.clone(),
        }
    }

    pub fn ladder_view(&self) -> LadderView {
        LadderView {
            session_id: self.session_id.clone(),
            revision: self.revision,
            pending_job: self.pending_job.clone(),
            ladders: self.ladders.values().cloned().collect(),
            previous: self.previous.values().cloned().collect(),
        }
    }

    fn ladder_config(&self) -> LadderConfig {
        LadderConfig {
            models: self.models.clone(),
            sampler: self.sampler.clone(),
            repetitions: self.repetitions,
            template: verba_core::elicitation::PromptTemplate::confidence(),
            aggregation: Default::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub job_id: String,
    pub session_id: String,
    pub kind: &'static str,
    pub status: JobStatus,
    pub propositions: Vec<String>,
    pub revision: u64,
    pub capsule_ids: Vec<String>,
    pub error: Option<String>,
    pub created_at: String,
    pub finished_at: Option<String>,
}

/// A stored reply to a request carrying a client request id.
#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub body: serde_json::Value,
}

#[derive(Default)]
pub struct Tables {
    pub sessions: HashMap<String, Session>,
    pub jobs: HashMap<String, Job>,
    pub replies: HashMap<String, Reply>,
    next_session: u64,
    next_job: u64,
}

impl Tables {
    pub fn new_session_id(&mut self) -> String {
        self.next_session += 1;
        format!("s{}", self.next_session)
    }

    fn new_job_id(&mut self) -> String {
        self.next_job += 1;
        format!("j{}", self.next_job)
    }
}

pub struct Defaults {
    pub models: Vec<ModelSpec>,
    pub sampler: SamplerSettings,
    pub repetitions: u32,
}

pub struct AppState {
    tables: Mutex<Tables>,
    pub store: CapsuleStore,
    pub backend: Arc<dyn Backend>,
    pub policy: FanOutPolicy,
    pub defaults: Defaults,
}

/// What a ladder job needs, captured when it starts.
pub struct JobTicket {
    job_id: String,
    session_id: String,
    revision: u64,
    case: InterpretationCase,
    runs: Vec<RunSpec>,
}

impl JobTicket {
    pub fn job_id(&self) -> &str {
        &self.job_id
    }
}

impl AppState {
    pub fn new(store: CapsuleStore, backend: Arc<dyn Backend>, policy: FanOutPolicy, defaults: Defaults) -> Self {
        Self {
            tables: Mutex::new(Tables::default()),
            store,
            backend,
            policy,
            defaults,
        }
    }

    pub fn lock(&self) -> MutexGuard<'_, Tables> {
        self.tables.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Register a ladder job on the session; the caller runs it with
    /// [`AppState::run_job`] after releasing the lock.
    pub fn open_job(tables: &mut Tables, session_id: &str, propositions: Vec<String>) -> JobTicket {
        let job_id = tables.new_job_id();
        let session = tables.sessions.get_mut(session_id).expect("caller checked the session");
        session.pending_job = Some(job_id.clone());
        let config = session.ladder_config();
        let runs = propositions
            .iter()
            .map(|p| RunSpec::Ladder {
                proposition: p.clone(),
                config: config.clone(),
            })
            .collect();
        let ticket = JobTicket {
            job_id: job_id.clone(),
            session_id: session_id.to_string(),
            revision: session.revision,
            case: session.case.clone(),
            runs,
        };
        tables.jobs.insert(
            job_id.clone(),
            Job {
                job_id,
                session_id: session_id.to_string(),
                kind: "ladder",
                status: JobStatus::Running,
                propositions,
                revision: ticket.revision,
                capsule_ids: Vec::new(),
                error: None,
                created_at: crate::commands::now(),
                finished_at: None,
            },
        );
        ticket
    }

    /// Run every ladder in the ticket, store the capsules and publish the
    /// results. Blocking.
    pub fn run_job(&self, ticket: JobTicket) {
        let mut entries = Vec::new();
        let mut error = None;
        for run in &ticket.runs {
            let RunSpec::Ladder { proposition, .. } = run else {
                continue;
            };
            let started = crate::commands::now();
            let recorded = verba_core::pipeline::execute_and_record(
                run,
                &ticket.case,
                self.backend.as_ref(),
                &self.policy,
                &started,
                crate::commands::now,
            )
            .map_err(|e| e.to_string())
            .and_then(|c| self.store.put(&c).map(|_| c).map_err(|e| e.to_string()));
            match recorded {
                Ok(capsule) => {
                    let verba_core::aggregate::Report::Ladder(result) = capsule.derived.report else {
                        error = Some("ladder run produced a non-ladder report".to_string());
                        break;
                    };
                    entries.push(LadderEntry {
                        proposition: proposition.clone(),
                        capsule_id: capsule.capsule_id,
                        evidence_order: ticket.case.evidence.iter().map(|e| e.evidence_id.clone()).collect(),
                        result,
                    });
                }
                Err(e) => {
                    error = Some(e);
                    break;
                }
            }
        }
        let mut t = self.lock();
        if let Some(session) = t.sessions.get_mut(&ticket.session_id) {
            for e in &entries {
                session.capsule_ids.push(e.capsule_id.clone());
                if let Some(old) = session.ladders.insert(e.proposition.clone(), e.clone()) {
                    session.previous.insert(e.proposition.clone(), old);
                }
            }
            if session.pending_job.as_deref() == Some(ticket.job_id.as_str()) {
                session.pending_job = None;
            }
        }
        if let Some(job) = t.jobs.get_mut(&ticket.job_id) {
            job.capsule_ids = entries.iter().map(|e| e.capsule_id.clone()).collect();
            job.status = if error.is_some() {
                JobStatus::Failed
            } else {
                JobStatus::Succeeded
            };
            job.error = error;
            job.finished_at = Some(crate::commands::now());
        }
    }
}
