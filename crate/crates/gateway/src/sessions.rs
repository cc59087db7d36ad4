//! Live sessions owned by the gateway. Each runs on its own thread; the
//! gateway talks to it only through the stop flag, the wizard channel, and
//! the bus.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use storybolt_core::agent::{ActionId, Agent, SelectMode};
use storybolt_core::audience::init_audience;
use storybolt_core::bus::Bus;
use storybolt_core::ltlf::BoltSet;
use storybolt_core::session::{
    build_agent, run_episode, EpisodeContext, EpisodeHeader, EpisodeLog, EpisodeOptions, FrameSource, Mode,
    SessionConfig, StoryManifest, WizardChannel, WizardReject, WizardRequest,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Idle,
    Running,
    Finished,
    Aborted,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Finished | Status::Aborted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub id: String,
    pub story_id: String,
    pub mode: Mode,
    pub seed: u64,
    pub status: Status,
    /// Segments played so far; the one playing now during a run.
    pub segment_index: usize,
    pub segments: usize,
    /// Unix seconds.
    pub started_at: f64,
    pub pending_request: Option<WizardRequest>,
    pub final_return: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
struct Progress {
    status: Status,
    error: Option<String>,
}

pub struct LiveSession {
    pub id: String,
    pub story: StoryManifest,
    pub mode: Mode,
    pub seed: u64,
    pub started_at: f64,
    pub bus: Arc<Bus>,
    pub wizard: WizardChannel,
    stop: Arc<AtomicBool>,
    log: Arc<Mutex<EpisodeLog>>,
    progress: Mutex<Progress>,
    done: Condvar,
}

impl LiveSession {
    pub fn status(&self) -> Status {
        self.progress.lock().expect("progress lock").status
    }

    pub fn descriptor(&self) -> SessionDescriptor {
        let progress = self.progress.lock().expect("progress lock").clone();
        let log = self.log.lock().expect("log lock");
        let played = log.segments.len();
        let segment_index = if progress.status.is_terminal() { played.saturating_sub(1) } else { played };
        SessionDescriptor {
            id: self.id.clone(),
            story_id: self.story.id.clone(),
            mode: self.mode,
            seed: self.seed,
            status: progress.status,
            segment_index: segment_index.min(self.story.segments.len().saturating_sub(1)),
            segments: self.story.segments.len(),
            started_at: self.started_at,
            pending_request: self.wizard.pending(),
            final_return: log.footer.as_ref().map(|f| f.final_return),
            error: progress.error,
        }
    }

    /// Episode log so far.
    pub fn log(&self) -> EpisodeLog {
        self.log.lock().expect("log lock").clone()
    }

    /// Asks the loop to stop; it aborts at the next frame or decision.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::Release);
        self.wizard.close();
    }

    pub fn answer(&self, request_id: Option<u64>, action: ActionId) -> Result<u64, WizardReject> {
        self.wizard.answer(request_id, action)
    }

    /// Blocks until the session thread is done and returns the final log.
    pub fn wait(&self) -> EpisodeLog {
        let mut p = self.progress.lock().expect("progress lock");
        while !p.status.is_terminal() {
            p = self.done.wait(p).expect("progress lock");
        }
        drop(p);
        self.log()
    }

    fn finish(&self, status: Status, error: Option<String>) {
        let mut p = self.progress.lock().expect("progress lock");
        p.status = status;
        p.error = error;
        self.done.notify_all();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorySummary {
    pub id: String,
    pub title: String,
    pub segments: usize,
}

#[derive(Debug)]
pub enum StartError {
    UnknownStory(String),
    Setup(String),
}

impl std::error::Error for StartError {}

impl std::fmt::Display for StartError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StartError::UnknownStory(id) => write!(f, "unknown story {id:?}"),
            StartError::Setup(m) => f.write_str(m),
        }
    }
}

/// How a session is started.
#[derive(Debug, Clone)]
pub struct StartRequest {
    pub story_id: String,
    pub mode: Mode,
    pub seed: u64,
    pub realtime: bool,
    /// Recorded tracks instead of the simulated audience.
    pub source: Option<FrameSource>,
}

/// Everything sessions are built from, plus the sessions themselves.
pub struct Registry {
    pub config: SessionConfig,
    bolts: BoltSet,
    agent: Agent<f64>,
    stories: BTreeMap<String, StoryManifest>,
    /// Where finished episode logs and event logs are written.
    log_dir: Option<PathBuf>,
    sessions: Mutex<HashMap<String, Arc<LiveSession>>>,
    next_id: AtomicU64,
}

impl Registry {
    /// `agent` defaults to a fresh policy built from the config.
    pub fn new(
        config: SessionConfig,
        agent: Option<Agent<f64>>,
        stories: Vec<StoryManifest>,
        log_dir: Option<PathBuf>,
    ) -> anyhow::Result<Self> {
        config.validate()?;
        let bolts = config.bolts.compile(&ActionId::alphabet())?;
        let agent = match agent {
            Some(a) => a,
            None => build_agent(&config.agent, &bolts)?,
        };
        if agent.encoder.bolt_state_counts != bolts.state_counts() {
            anyhow::bail!("checkpoint agent does not match the configured bolts");
        }
        Ok(Registry {
            config,
            bolts,
            agent,
            stories: stories.into_iter().map(|s| (s.id.clone(), s)).collect(),
            log_dir,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn stories(&self) -> Vec<StorySummary> {
        self.stories
            .values()
            .map(|s| StorySummary { id: s.id.clone(), title: s.title.clone(), segments: s.segments.len() })
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<Arc<LiveSession>> {
        self.sessions.lock().expect("sessions lock").get(id).cloned()
    }

    pub fn list(&self) -> Vec<SessionDescriptor> {
        let mut all: Vec<_> = self.sessions.lock().expect("sessions lock").values().map(|s| s.descriptor()).collect();
        all.sort_by(|a, b| a.started_at.total_cmp(&b.started_at).then_with(|| a.id.cmp(&b.id)));
        all
    }

    pub fn start(&self, req: StartRequest) -> Result<Arc<LiveSession>, StartError> {
        let story = self.stories.get(&req.story_id).cloned().ok_or_else(|| StartError::UnknownStory(req.story_id.clone()))?;
        let id = format!("session-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let bus = match &self.log_dir {
            Some(dir) => Bus::with_log_file(&dir.join(format!("{id}.events.jsonl")))
                .map_err(|e| StartError::Setup(e.to_string()))?,
            None => Bus::in_memory(),
        };
        let source = match req.source {
            Some(s) => s,
            None => FrameSource::Simulated(
                init_audience(self.config.n_children, req.seed, self.config.audience.clone())
                    .map_err(|e| StartError::Setup(e.to_string()))?,
            ),
        };
        let started_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        let placeholder = EpisodeLog {
            header: EpisodeHeader {
                session_id: id.clone(),
                story_id: story.id.clone(),
                mode: req.mode,
                seed: req.seed,
                segments: story.segments.len(),
                bolts: Vec::new(),
                bolt_rewards: Vec::new(),
                weights: self.config.weights,
                started_at: Some(started_at),
            },
            segments: Vec::new(),
            decisions: Vec::new(),
            footer: None,
        };
        let session = Arc::new(LiveSession {
            id: id.clone(),
            story,
            mode: req.mode,
            seed: req.seed,
            started_at,
            bus: Arc::new(bus),
            wizard: WizardChannel::new(),
            stop: Arc::new(AtomicBool::new(false)),
            log: Arc::new(Mutex::new(placeholder)),
            progress: Mutex::new(Progress { status: Status::Idle, error: None }),
            done: Condvar::new(),
        });
        self.sessions.lock().expect("sessions lock").insert(id.clone(), Arc::clone(&session));

        let opts = EpisodeOptions {
            session_id: id,
            // wizard picks double as imitation labels for this session's policy
            learn: req.mode == Mode::Wizard,
            select: SelectMode::Greedy,
            realtime: req.realtime,
            started_at: Some(started_at),
            ..EpisodeOptions::new(req.mode, req.seed)
        };
        let config = self.config.clone();
        let bolts = self.bolts.clone();
        let mut agent = self.agent.clone();
        let log_path = self.log_dir.as_ref().map(|d| d.join(format!("{}.jsonl", session.id)));
        let worker = Arc::clone(&session);
        let mut source = source;
        session.progress.lock().expect("progress lock").status = Status::Running;
        thread::spawn(move || {
            let ctx = EpisodeContext {
                bus: Some(&worker.bus),
                wizard: Some(&worker.wizard),
                stop: Some(&worker.stop),
                mirror: Some(&worker.log),
            };
            let result = run_episode(&worker.story, &config, &bolts, &mut agent, &mut source, &opts, &ctx);
            let (log, status, error) = match result {
                Ok(log) => (log, Status::Finished, None),
                Err(aborted) => (*aborted.partial, Status::Aborted, Some(aborted.error.to_string())),
            };
            // the log is the session's record; failing to keep it fails the session
            let (status, error) = match log_path.map(|p| log.write_jsonl(&p)) {
                Some(Err(e)) => (Status::Aborted, Some(error.unwrap_or_else(|| e.to_string()))),
                _ => (status, error),
            };
            *worker.log.lock().expect("log lock") = log;
            worker.wizard.close();
            worker.finish(status, error);
            worker.bus.close();
        });
        Ok(session)
    }
}
