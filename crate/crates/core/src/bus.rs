//! In-process publish/subscribe bus with an append-only JSON Lines log.
//!
//! One lock covers sequence numbering, the log append and delivery, so
//! every subscriber sees each topic in log order. Subscriber queues are
//! bounded and drop their oldest entry on overflow; publishers never block
//! on a slow consumer.

use std::collections::VecDeque;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agent::{ActionId, TdDiagnostics};
use crate::ltlf::BoltStatus;
use crate::metrics::{FrameMetrics, RewardTerms, StateVector};
use crate::session::{ActionEffect, ActionSource, ServoPose, WizardRequest};

pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BusError {
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("payload does not match the {topic} schema: {message}")]
    Schema { topic: String, message: String },
    #[error("event log unavailable: {0}")]
    Storage(String),
}

pub type Result<T> = std::result::Result<T, BusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    Frame,
    SegmentEnded,
    ActionRequest,
    ActionChosen,
    Reward,
    BoltState,
    Servo,
    Log,
}

impl Topic {
    pub const ALL: [Topic; 8] = [
        Topic::Frame,
        Topic::SegmentEnded,
        Topic::ActionRequest,
        Topic::ActionChosen,
        Topic::Reward,
        Topic::BoltState,
        Topic::Servo,
        Topic::Log,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topic::Frame => "frame",
            Topic::SegmentEnded => "segment_ended",
            Topic::ActionRequest => "action_request",
            Topic::ActionChosen => "action_chosen",
            Topic::Reward => "reward",
            Topic::BoltState => "bolt_state",
            Topic::Servo => "servo",
            Topic::Log => "log",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topic {
    type Err = BusError;

    fn from_str(s: &str) -> Result<Self> {
        Topic::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| BusError::UnknownTopic(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramePayload {
    pub segment_index: usize,
    pub metrics: FrameMetrics<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEndedPayload {
    pub segment_index: usize,
    pub segment_id: String,
    pub frames: usize,
    pub state: StateVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionChosenPayload {
    pub decision: usize,
    pub action: ActionId,
    pub source: ActionSource,
    pub fallback: bool,
    pub effect: ActionEffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardPayload {
    pub decision: usize,
    pub terms: RewardTerms<f64>,
    pub ltl_reward: f64,
    pub terminal_bonus: f64,
    pub total: f64,
    pub td: Option<TdDiagnostics<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoltStatePayload {
    /// `None` for the initial state before any decision.
    pub decision: Option<usize>,
    pub bolts: Vec<BoltStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoPayload {
    pub pose: ServoPose,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogPayload {
    pub level: String,
    pub message: String,
}

/// Topic plus its schema. Serialized as `"topic": ..., "payload": {...}`.
/// No schema admits image data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "topic", content = "payload", rename_all = "snake_case")]
pub enum Payload {
    Frame(FramePayload),
    SegmentEnded(SegmentEndedPayload),
    ActionRequest(WizardRequest),
    ActionChosen(ActionChosenPayload),
    Reward(RewardPayload),
    BoltState(BoltStatePayload),
    Servo(ServoPayload),
    Log(LogPayload),
}

impl Payload {
    pub fn topic(&self) -> Topic {
        match self {
            Payload::Frame(_) => Topic::Frame,
            Payload::SegmentEnded(_) => Topic::SegmentEnded,
            Payload::ActionRequest(_) => Topic::ActionRequest,
            Payload::ActionChosen(_) => Topic::ActionChosen,
            Payload::Reward(_) => Topic::Reward,
            Payload::BoltState(_) => Topic::BoltState,
            Payload::Servo(_) => Topic::Servo,
            Payload::Log(_) => Topic::Log,
        }
    }

    pub fn log(level: &str, message: impl Into<String>) -> Self {
        Payload::Log(LogPayload { level: level.to_string(), message: message.into() })
    }

    /// Validates an untyped payload against the topic schema.
    pub fn from_json(topic: &str, value: serde_json::Value) -> Result<Self> {
        let topic: Topic = topic.parse()?;
        let tagged = serde_json::json!({ "topic": topic.name(), "payload": value });
        serde_json::from_value(tagged)
            .map_err(|e| BusError::Schema { topic: topic.name().to_string(), message: e.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub timestamp: f64,
    #[serde(flatten)]
    pub payload: Payload,
}

impl Envelope {
    pub fn topic(&self) -> Topic {
        self.payload.topic()
    }
}

/// Selects envelopes by topic and inclusive time range.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogFilter {
    pub topics: Option<Vec<Topic>>,
    pub from: Option<f64>,
    pub to: Option<f64>,
}

impl LogFilter {
    pub fn topic(t: Topic) -> Self {
        LogFilter { topics: Some(vec![t]), ..Default::default() }
    }

    pub fn matches(&self, e: &Envelope) -> bool {
        self.topics.as_ref().is_none_or(|ts| ts.contains(&e.topic()))
            && self.from.is_none_or(|t| e.timestamp >= t)
            && self.to.is_none_or(|t| e.timestamp <= t)
    }
}

enum Sink {
    Memory(Vec<String>),
    File { path: PathBuf, file: File },
}

#[derive(Debug)]
struct Queue {
    items: Mutex<VecDeque<Envelope>>,
    ready: Condvar,
    capacity: usize,
    dropped: AtomicU64,
    closed: AtomicBool,
}

impl Queue {
    fn push(&self, e: Envelope) {
        let mut items = self.items.lock().expect("queue lock");
        if items.len() >= self.capacity {
            items.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        items.push_back(e);
        self.ready.notify_one();
    }
}

struct Inner {
    seqs: [u64; 8],
    sink: Sink,
    subscribers: Vec<(Vec<Topic>, Weak<Queue>)>,
    published: u64,
}

pub struct Bus {
    inner: Mutex<Inner>,
    epoch: Instant,
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bus").finish_non_exhaustive()
    }
}

impl Bus {
    fn with_sink(sink: Sink) -> Self {
        Bus {
            inner: Mutex::new(Inner { seqs: [0; 8], sink, subscribers: Vec::new(), published: 0 }),
            epoch: Instant::now(),
        }
    }

    /// Bus whose log lives in memory.
    pub fn in_memory() -> Self {
        Bus::with_sink(Sink::Memory(Vec::new()))
    }

    /// Bus appending to a JSON Lines file (created or truncated).
    pub fn with_log_file(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| BusError::Storage(format!("{}: {e}", path.display())))?;
        Ok(Bus::with_sink(Sink::File { path: path.to_path_buf(), file }))
    }

    /// Publishes with a wall-clock timestamp (seconds since the bus was made).
    pub fn publish(&self, payload: Payload) -> Result<u64> {
        self.publish_at(self.epoch.elapsed().as_secs_f64(), payload)
    }

    /// Publishes with an explicit (e.g. simulated) timestamp. The envelope is
    /// in the log before any subscriber sees it; a failed append delivers
    /// nothing and returns the storage error.
    pub fn publish_at(&self, timestamp: f64, payload: Payload) -> Result<u64> {
        let topic = payload.topic();
        let mut inner = self.inner.lock().expect("bus lock");
        let seq = inner.seqs[topic.slot()] + 1;
        let envelope = Envelope { seq, timestamp, payload };
        let line = serde_json::to_string(&envelope)
            .map_err(|e| BusError::Schema { topic: topic.name().to_string(), message: e.to_string() })?;
        match &mut inner.sink {
            Sink::Memory(lines) => lines.push(line),
            Sink::File { path, file } => {
                writeln!(file, "{line}")
                    .and_then(|_| file.flush())
                    .map_err(|e| BusError::Storage(format!("{}: {e}", path.display())))?;
            }
        }
        inner.seqs[topic.slot()] = seq;
        inner.published += 1;
        inner.subscribers.retain(|(_, q)| q.strong_count() > 0);
        for (topics, q) in &inner.subscribers {
            if topics.contains(&topic) {
                if let Some(q) = q.upgrade() {
                    q.push(envelope.clone());
                }
            }
        }
        Ok(seq)
    }

    /// Validates and publishes an untyped payload.
    pub fn publish_json(&self, topic: &str, value: serde_json::Value) -> Result<u64> {
        self.publish(Payload::from_json(topic, value)?)
    }

    pub fn subscribe(&self, topic: Topic) -> Subscription {
        self.subscribe_many(&[topic], DEFAULT_QUEUE_CAPACITY)
    }

    pub fn subscribe_name(&self, topic: &str) -> Result<Subscription> {
        Ok(self.subscribe(topic.parse()?))
    }

    /// One queue fed by several topics; per-topic order is preserved.
    pub fn subscribe_many(&self, topics: &[Topic], capacity: usize) -> Subscription {
        let queue = Arc::new(Queue {
            items: Mutex::new(VecDeque::new()),
            ready: Condvar::new(),
            capacity: capacity.max(1),
            dropped: AtomicU64::new(0),
            closed: AtomicBool::new(false),
        });
        let mut inner = self.inner.lock().expect("bus lock");
        inner.subscribers.push((topics.to_vec(), Arc::downgrade(&queue)));
        Subscription { queue }
    }

    /// Count of envelopes published so far across all topics.
    pub fn published(&self) -> u64 {
        self.inner.lock().expect("bus lock").published
    }

    /// Wakes every subscriber with an end-of-stream marker.
    pub fn close(&self) {
        let inner = self.inner.lock().expect("bus lock");
        for (_, q) in &inner.subscribers {
            if let Some(q) = q.upgrade() {
                q.closed.store(true, Ordering::Release);
                let _guard = q.items.lock().expect("queue lock");
                q.ready.notify_all();
            }
        }
    }

    /// Reads the log back, in append order.
    pub fn log_read(&self, filter: &LogFilter) -> Result<Vec<Envelope>> {
        let inner = self.inner.lock().expect("bus lock");
        match &inner.sink {
            Sink::Memory(lines) => parse_lines(lines.iter().map(|l| Ok(l.clone())), filter),
            Sink::File { path, .. } => {
                let path = path.clone();
                drop(inner);
                read_log(&path, filter)
            }
        }
    }
}

fn parse_lines(
    lines: impl Iterator<Item = std::io::Result<String>>,
    filter: &LogFilter,
) -> Result<Vec<Envelope>> {
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| BusError::Storage(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Envelope = serde_json::from_str(&line)
            .map_err(|e| BusError::Storage(format!("log line {}: {e}", i + 1)))?;
        if filter.matches(&e) {
            out.push(e);
        }
    }
    Ok(out)
}

/// Reads a JSON Lines event log from disk.
pub fn read_log(path: &Path, filter: &LogFilter) -> Result<Vec<Envelope>> {
    let file = File::open(path).map_err(|e| BusError::Storage(format!("{}: {e}", path.display())))?;
    parse_lines(BufReader::new(file).lines(), filter)
}

/// Receiving end of a subscription. Dropping it unsubscribes.
#[derive(Debug)]
pub struct Subscription {
    queue: Arc<Queue>,
}

impl Subscription {
    pub fn try_recv(&self) -> Option<Envelope> {
        self.queue.items.lock().expect("queue lock").pop_front()
    }

    /// Waits up to `timeout` for the next envelope. `None` on timeout or
    /// once the bus is closed and the queue drained.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<Envelope> {
        let deadline = Instant::now() + timeout;
        let mut items = self.queue.items.lock().expect("queue lock");
        loop {
            if let Some(e) = items.pop_front() {
                return Some(e);
            }
            let now = Instant::now();
            if now >= deadline || self.queue.closed.load(Ordering::Acquire) {
                return None;
            }
            items = self.queue.ready.wait_timeout(items, deadline - now).expect("queue lock").0;
        }
    }

    pub fn drain(&self) -> Vec<Envelope> {
        self.queue.items.lock().expect("queue lock").drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.queue.items.lock().expect("queue lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Envelopes discarded by the drop-oldest overflow policy.
    pub fn dropped(&self) -> u64 {
        self.queue.dropped.load(Ordering::Relaxed)
    }

    pub fn is_closed(&self) -> bool {
        self.queue.closed.load(Ordering::Acquire)
    }
}
