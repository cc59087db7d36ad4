use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{gesture, head_tracker, ServoPose};
use super::story::{Segment, StoryManifest};
use super::wizard::{WizardChannel, WizardOutcome, WizardReject, WizardRequest};
use super::{Mode, Result, SessionConfig, SessionError};
use crate::agent::{
    ActionId, Agent, AgentConfig, AgentError, Observation, ObservationEncoder, SelectMode, TdDiagnostics,
    Transition,
};
use crate::audience::AudienceState;
use crate::bus::{
    ActionChosenPayload, BoltStatePayload, Bus, FramePayload, Payload, RewardPayload, SegmentEndedPayload,
    ServoPayload,
};
use crate::ltlf::{BoltRuntime, BoltSet, BoltStatus, LtlfError};
use crate::metrics::{
    aggregate_segment, reward_terms, total_reward, FrameMetrics, FrameObservation, MetricsTracker,
    RewardTerms, RewardWeights, StateVector,
};

/// Recorded perception tracks played back segment by segment.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    frames: Vec<FrameObservation<f64>>,
    cursor: usize,
    segment_start: Option<f64>,
}

impl ReplaySource {
    pub fn new(frames: Vec<FrameObservation<f64>>) -> Self {
        ReplaySource { frames, cursor: 0, segment_start: None }
    }

    /// Frames with timestamps in `[start, start + duration)`, where `start`
    /// is the first frame's time for the first segment.
    fn take(&mut self, duration: f64) -> Vec<FrameObservation<f64>> {
        let start = match self.segment_start {
            Some(t) => t,
            None => match self.frames.first() {
                Some(f) => f.timestamp,
                None => return Vec::new(),
            },
        };
        let end = start + duration;
        self.segment_start = Some(end);
        let rest = &self.frames[self.cursor..];
        let n = rest.iter().take_while(|f| f.timestamp < end).count();
        self.cursor += n;
        rest[..n].to_vec()
    }
}

/// Where frames come from: the simulated audience, or recorded tracks
/// (which ignore the robot's actions).
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)] // one per session, never in bulk
pub enum FrameSource {
    Simulated(AudienceState),
    Replay(ReplaySource),
}

impl FrameSource {
    fn apply_action(&mut self, act: ActionId) {
        if let FrameSource::Simulated(a) = self {
            a.apply_action(act);
        }
    }

    /// Seconds on the source's own clock.
    pub fn elapsed(&self) -> f64 {
        match self {
            FrameSource::Simulated(a) => a.elapsed,
            FrameSource::Replay(r) => r.cursor.checked_sub(1).map_or(0.0, |i| r.frames[i].timestamp),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutcome {
    pub state: StateVector<f64>,
    pub frames: Vec<FrameMetrics<f64>>,
    pub pose: ServoPose,
}

/// Hooks into the outside world. All optional; training uses none.
#[derive(Clone, Copy, Default)]
pub struct EpisodeContext<'a> {
    pub bus: Option<&'a Bus>,
    pub wizard: Option<&'a WizardChannel>,
    pub stop: Option<&'a AtomicBool>,
    /// Receives a copy of the log after every change.
    pub mirror: Option<&'a Mutex<EpisodeLog>>,
}

impl EpisodeContext<'_> {
    fn publish(&self, t: f64, payload: impl FnOnce() -> Payload) -> Result<()> {
        if let Some(bus) = self.bus {
            bus.publish_at(t, payload())?;
        }
        Ok(())
    }

    fn check_stop(&self) -> Result<()> {
        if self.stop.is_some_and(|s| s.load(Ordering::Acquire)) {
            return Err(SessionError::Stopped);
        }
        Ok(())
    }

    fn sync(&self, log: &EpisodeLog) {
        if let Some(m) = self.mirror {
            *m.lock().expect("mirror lock") = log.clone();
        }
    }
}

/// Plays one segment: `ceil(duration · frame_rate)` simulator frames (or the
/// recorded frames in its time window), per-frame metrics and head tracking,
/// then the segment average.
#[allow(clippy::too_many_arguments)]
pub fn run_segment(
    seg: &Segment,
    index: usize,
    source: &mut FrameSource,
    tracker: &mut MetricsTracker<f64>,
    config: &SessionConfig,
    pose: &mut ServoPose,
    realtime: bool,
    ctx: &EpisodeContext,
) -> Result<SegmentOutcome> {
    if !(config.frame_rate > 0.0) {
        return Err(SessionError::schema("frame_rate", "must be > 0"));
    }
    let exact = seg.duration_s * config.frame_rate;
    let observations = match source {
        FrameSource::Simulated(audience) => {
            if exact < 1.0 {
                return Err(SessionError::EmptySegment(seg.id.clone()));
            }
            // tolerate representation error such as 0.7 · 10 = 7.000000000000001
            let n = (exact - 1e-9).ceil() as usize;
            let dt = 1.0 / config.frame_rate;
            let mut frames = Vec::with_capacity(n);
            for _ in 0..n {
                frames.push(audience.step_frame(dt)?);
            }
            frames
        }
        FrameSource::Replay(replay) => replay.take(seg.duration_s),
    };
    if observations.is_empty() {
        return Err(SessionError::EmptySegment(seg.id.clone()));
    }
    let mut metrics = Vec::with_capacity(observations.len());
    for obs in &observations {
        ctx.check_stop()?;
        let m = tracker.observe(obs)?;
        *pose = head_tracker(
            &obs.positions(),
            *pose,
            config.head_gain,
            config.metrics.frame_width,
            config.metrics.frame_height,
        );
        ctx.publish(obs.timestamp, || Payload::Frame(FramePayload { segment_index: index, metrics: m }))?;
        metrics.push(m);
        if realtime {
            std::thread::sleep(Duration::from_secs_f64(1.0 / config.frame_rate));
        }
    }
    let state = aggregate_segment(&metrics)?;
    let t = observations.last().map_or(0.0, |o| o.timestamp);
    ctx.publish(t, || {
        Payload::SegmentEnded(SegmentEndedPayload {
            segment_index: index,
            segment_id: seg.id.clone(),
            frames: metrics.len(),
            state,
        })
    })?;
    ctx.publish(t, || Payload::Servo(ServoPayload { pose: *pose, reason: "track".into() }))?;
    Ok(SegmentOutcome { state, frames: metrics, pose: *pose })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSource {
    Policy,
    Wizard,
    Fallback,
    Random,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: ActionId,
    pub source: ActionSource,
    pub fallback: bool,
    pub request_id: Option<u64>,
}

/// Position in the scripted action list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptCursor {
    script: Vec<ActionId>,
    next: usize,
}

impl ScriptCursor {
    pub fn new(script: Vec<ActionId>) -> Self {
        ScriptCursor { script, next: 0 }
    }

    /// Next scripted action; continue_story once the list runs out.
    pub fn next_action(&mut self) -> ActionId {
        let a = self.script.get(self.next).copied().unwrap_or(ActionId::ContinueStory);
        self.next += 1;
        a
    }
}

/// What the operator is asked at one decision.
pub struct WizardPrompt<'a> {
    pub channel: &'a WizardChannel,
    pub decision: usize,
    pub segment: &'a Segment,
    pub timeout: Duration,
    pub on_posted: &'a dyn Fn(&WizardRequest),
}

/// Picks the action for one segment boundary according to the mode.
#[allow(clippy::too_many_arguments)]
pub fn decide<R: Rng + ?Sized>(
    mode: Mode,
    obs: &Observation<f64>,
    agent: &Agent<f64>,
    select: SelectMode,
    script: &mut ScriptCursor,
    rng: &mut R,
    wizard: Option<WizardPrompt<'_>>,
) -> Result<Decision> {
    let plain = |action, source| Decision { action, source, fallback: false, request_id: None };
    match mode {
        Mode::Autonomous => Ok(plain(agent.select(obs, select, rng)?.0, ActionSource::Policy)),
        Mode::Random => {
            let i = rng.random_range(0..ActionId::ALL.len());
            Ok(plain(ActionId::ALL[i], ActionSource::Random))
        }
        Mode::Scripted => Ok(plain(script.next_action(), ActionSource::Scripted)),
        Mode::Wizard => {
            let prompt = wizard.ok_or_else(|| SessionError::Mode("wizard mode needs an operator channel".into()))?;
            let greedy = agent.select(obs, SelectMode::Greedy, rng)?.0;
            let questions = &prompt.segment.questions;
            let (id, outcome) = prompt
                .channel
                .request(prompt.decision, &prompt.segment.id, questions, prompt.timeout, greedy, prompt.on_posted)
                .map_err(|e| match e {
                    WizardReject::Closed => SessionError::Mode("wizard channel closed".into()),
                    other => SessionError::Mode(other.to_string()),
                })?;
            Ok(match outcome {
                WizardOutcome::Chosen(a) => {
                    Decision { action: a, source: ActionSource::Wizard, fallback: false, request_id: Some(id) }
                }
                WizardOutcome::TimedOut => {
                    Decision { action: greedy, source: ActionSource::Fallback, fallback: true, request_id: Some(id) }
                }
            })
        }
    }
}

/// What an action did beyond its audience effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionEffect {
    None,
    Question { index: usize, text: String },
    Feedback { phrase_index: usize, phrase: String },
    Gesture { poses: Vec<ServoPose> },
}

/// Carries out an action: picks the question or phrase, draws the gesture,
/// and applies the audience response. A question on a segment without
/// questions becomes continue_story with a warning. Returns the action
/// actually executed.
pub fn execute_action<R: Rng + ?Sized>(
    act: ActionId,
    seg: &Segment,
    source: &mut FrameSource,
    rng: &mut R,
    config: &SessionConfig,
) -> (ActionId, ActionEffect, Option<String>) {
    let mut warning = None;
    let act = if act == ActionId::Question && seg.questions.is_empty() {
        warning = Some(format!("segment {:?} has no questions; question replaced by continue_story", seg.id));
        ActionId::ContinueStory
    } else {
        act
    };
    let pick = |list: &[String], rng: &mut R| {
        let i = rng.random_range(0..list.len());
        (i, list[i].clone())
    };
    let effect = match act {
        ActionId::ContinueStory => ActionEffect::None,
        ActionId::Question => {
            let (index, text) = pick(&seg.questions, rng);
            ActionEffect::Question { index, text }
        }
        ActionId::PositiveFeedback => {
            let (phrase_index, phrase) = pick(&config.phrases.positive, rng);
            ActionEffect::Feedback { phrase_index, phrase }
        }
        ActionId::NegativeFeedback => {
            let (phrase_index, phrase) = pick(&config.phrases.negative, rng);
            ActionEffect::Feedback { phrase_index, phrase }
        }
        ActionId::MoveHeadArms => ActionEffect::Gesture { poses: gesture(config.gesture_poses, rng) },
    };
    source.apply_action(act);
    (act, effect, warning)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOptions {
    pub session_id: String,
    pub mode: Mode,
    pub seed: u64,
    /// Update the agent: TD in autonomous mode, imitation in wizard mode.
    pub learn: bool,
    /// How autonomous mode draws from the policy.
    pub select: SelectMode,
    pub realtime: bool,
    /// Wall-clock start, unix seconds. Kept out of the canonical log.
    pub started_at: Option<f64>,
}

impl EpisodeOptions {
    pub fn new(mode: Mode, seed: u64) -> Self {
        EpisodeOptions {
            session_id: format!("{mode}-{seed}"),
            mode,
            seed,
            learn: false,
            select: SelectMode::Greedy,
            realtime: false,
            started_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub session_id: String,
    pub story_id: String,
    pub mode: Mode,
    pub seed: u64,
    pub segments: usize,
    pub bolts: Vec<String>,
    pub bolt_rewards: Vec<f64>,
    pub weights: RewardWeights<f64>,
    pub started_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub index: usize,
    pub segment_id: String,
    pub frames: usize,
    pub state: StateVector<f64>,
    pub pose: ServoPose,
}

/// One decision at the end of segment `decision`. The reward is settled
/// when the following segment has played: its state vector is the
/// consequence of the action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub decision: usize,
    pub segment_id: String,
    /// State vector of the segment that just ended.
    pub state: StateVector<f64>,
    pub action: ActionId,
    /// Set when the decided action was replaced before execution.
    pub requested: Option<ActionId>,
    pub source: ActionSource,
    pub fallback: bool,
    pub request_id: Option<u64>,
    pub warning: Option<String>,
    pub effect: ActionEffect,
    pub bolt_states: Vec<BoltStatus>,
    pub ltl_reward: f64,
    pub imitation_label: Option<ActionId>,
    /// State vector of the next segment; `None` if the episode stopped first.
    pub outcome_state: Option<StateVector<f64>>,
    pub terms: Option<RewardTerms<f64>>,
    /// Weighted engagement terms of the outcome plus `ltl_reward`.
    pub reward: f64,
    /// Terminal bolt settlement, nonzero only on the last decision.
    pub terminal_bonus: f64,
    pub td: Option<TdDiagnostics<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Finished,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFooter {
    pub status: EpisodeStatus,
    pub decisions: usize,
    pub terminal_settlement: f64,
    pub final_bolt_states: Vec<BoltStatus>,
    pub violations: usize,
    /// No bolt violated and every bolt accepting at the end.
    pub compliant: bool,
    pub final_return: f64,
    pub error: Option<String>,
}

/// One line of the JSON Lines episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogLine {
    Header(EpisodeHeader),
    Segment(SegmentRecord),
    Decision(DecisionRecord),
    Footer(EpisodeFooter),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub segments: Vec<SegmentRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub footer: Option<EpisodeFooter>,
}

impl EpisodeLog {
    pub fn actions(&self) -> Vec<ActionId> {
        self.decisions.iter().map(|d| d.action).collect()
    }

    pub fn final_return(&self) -> Option<f64> {
        self.footer.as_ref().map(|f| f.final_return)
    }

    pub fn is_finished(&self) -> bool {
        self.footer.as_ref().is_some_and(|f| f.status == EpisodeStatus::Finished)
    }

    /// Records in playback order: header, then each segment followed by
    /// the decision taken at its end, then the footer.
    pub fn lines(&self) -> Vec<LogLine> {
        let mut out = vec![LogLine::Header(self.header.clone())];
        for seg in &self.segments {
            out.push(LogLine::Segment(seg.clone()));
            if let Some(d) = self.decisions.iter().find(|d| d.decision == seg.index) {
                out.push(LogLine::Decision(d.clone()));
            }
        }
        // decisions whose segment record is missing cannot happen, but keep
        // the log complete regardless
        for d in &self.decisions {
            if !self.segments.iter().any(|s| s.index == d.decision) {
                out.push(LogLine::Decision(d.clone()));
            }
        }
        if let Some(f) = &self.footer {
            out.push(LogLine::Footer(f.clone()));
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for line in self.lines() {
            s.push_str(&serde_json::to_string(&line).expect("log lines serialize"));
            s.push('\n');
        }
        s
    }

    /// The log with wall-clock fields removed, for byte comparison.
    pub fn canonical_jsonl(&self) -> String {
        let mut c = self.clone();
        c.header.started_at = None;
        c.to_jsonl()
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut header = None;
        let mut log = None::<EpisodeLog>;
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: LogLine = serde_json::from_str(raw)
                .map_err(|e| SessionError::schema(&format!("line {}", i + 1), &e.to_string()))?;
            match line {
                LogLine::Header(h) => header = Some(h),
                other => {
                    let Some(h) = header.clone() else {
                        return Err(SessionError::schema("header", "log must start with a header record"));
                    };
                    let l = log.get_or_insert_with(|| EpisodeLog {
                        header: h,
                        segments: Vec::new(),
                        decisions: Vec::new(),
                        footer: None,
                    });
                    match other {
                        LogLine::Segment(s) => l.segments.push(s),
                        LogLine::Decision(d) => l.decisions.push(d),
                        LogLine::Footer(f) => l.footer = Some(f),
                        LogLine::Header(_) => unreachable!(),
                    }
                }
            }
        }
        match (header, log) {
            (Some(header), None) => Ok(EpisodeLog { header, segments: Vec::new(), decisions: Vec::new(), footer: None }),
            (Some(_), Some(l)) => Ok(l),
            (None, _) => Err(SessionError::schema("header", "log has no header record")),
        }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| SessionError::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SessionError::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

/// A failed episode together with everything logged before the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("episode aborted: {error}")]
pub struct EpisodeAborted {
    pub error: SessionError,
    pub partial: Box<EpisodeLog>,
}

/// Fresh agent whose observation encoder matches the bolt set.
pub fn build_agent(config: &AgentConfig<f64>, bolts: &BoltSet) -> Result<Agent<f64>> {
    Ok(Agent::new(config.clone(), ObservationEncoder::new(bolts.state_counts()))?)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Pending {
    record: DecisionRecord,
    obs: Observation<f64>,
}

/// Runs a story start to finish.
///
/// Every segment but the last ends with a decision; the bolts advance on
/// the executed action. Each decision's reward is settled after the next
/// segment plays, and the last one also carries the terminal bolt
/// settlement. On any error the partial log is returned, marked aborted.
pub fn run_episode(
    story: &StoryManifest,
    config: &SessionConfig,
    bolts: &BoltSet,
    agent: &mut Agent<f64>,
    source: &mut FrameSource,
    opts: &EpisodeOptions,
    ctx: &EpisodeContext,
) -> std::result::Result<EpisodeLog, EpisodeAborted> {
    let mut log = EpisodeLog {
        header: EpisodeHeader {
            session_id: opts.session_id.clone(),
            story_id: story.id.clone(),
            mode: opts.mode,
            seed: opts.seed,
            segments: story.segments.len(),
            bolts: bolts.bolts().iter().map(|b| b.spec.formula.to_string()).collect(),
            bolt_rewards: bolts.bolts().iter().map(|b| b.spec.reward).collect(),
            weights: config.weights,
            started_at: opts.started_at,
        },
        segments: Vec::new(),
        decisions: Vec::new(),
        footer: None,
    };
    ctx.sync(&log);
    let mut rt = bolts.start();
    match episode_loop(story, config, bolts, agent, source, opts, ctx, &mut log, &mut rt) {
        Ok(()) => Ok(log),
        Err(error) => {
            let final_return = log.decisions.iter().map(|d| d.reward).sum();
            log.footer = Some(EpisodeFooter {
                status: EpisodeStatus::Aborted,
                decisions: log.decisions.len(),
                terminal_settlement: 0.0,
                final_bolt_states: bolts.status(&rt),
                violations: bolts.status(&rt).iter().filter(|s| s.violated).count(),
                compliant: false,
                final_return,
                error: Some(error.to_string()),
            });
            ctx.sync(&log);
            if let Some(bus) = ctx.bus {
                let _ = bus.publish_at(source.elapsed(), Payload::log("error", format!("episode aborted: {error}")));
            }
            Err(EpisodeAborted { error, partial: Box::new(log) })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn episode_loop(
    story: &StoryManifest,
    config: &SessionConfig,
    bolts: &BoltSet,
    agent: &mut Agent<f64>,
    source: &mut FrameSource,
    opts: &EpisodeOptions,
    ctx: &EpisodeContext,
    log: &mut EpisodeLog,
    rt: &mut BoltRuntime,
) -> Result<()> {
    story.validate()?;
    config.validate()?;
    let counts = bolts.state_counts();
    if counts != agent.encoder.bolt_state_counts {
        return Err(AgentError::InvalidInput(format!(
            "agent was built for bolt state counts {:?}, bolt set has {counts:?}",
            agent.encoder.bolt_state_counts
        ))
        .into());
    }
    if opts.mode == Mode::Wizard && ctx.wizard.is_none() {
        return Err(SessionError::Mode("wizard mode needs an operator channel".into()));
    }
    let autonomous_learning = opts.learn && opts.mode == Mode::Autonomous;
    let wizard_learning = opts.learn && opts.mode == Mode::Wizard;
    agent.encoder.update_norm = autonomous_learning;

    let mut decide_rng = stream_rng(opts.seed, 1);
    let mut effect_rng = stream_rng(opts.seed, 2);
    let mut script = ScriptCursor::new(config.script.clone());
    let mut tracker = MetricsTracker::new(config.metrics.clone())?;
    let mut pose = ServoPose::default();
    let mut last_action = None;
    let mut pending: Option<Pending> = None;
    let mut labels: Vec<(Observation<f64>, ActionId)> = Vec::new();
    let n = story.segments.len();
    let timeout = Duration::from_secs_f64(config.wizard_timeout_s);

    ctx.publish(0.0, || {
        Payload::log("info", format!("session {} started: story {} in {} mode", opts.session_id, story.id, opts.mode))
    })?;
    ctx.publish(0.0, || Payload::BoltState(BoltStatePayload { decision: None, bolts: bolts.status(rt) }))?;

    let result = (|| -> Result<()> {
        for (i, seg) in story.segments.iter().enumerate() {
            ctx.check_stop()?;
            let outcome = run_segment(seg, i, source, &mut tracker, config, &mut pose, opts.realtime, ctx)?;
            let state = outcome.state;
            log.segments.push(SegmentRecord {
                index: i,
                segment_id: seg.id.clone(),
                frames: outcome.frames.len(),
                state,
                pose,
            });
            agent.encoder.observe_state(&state);
            let obs = agent.encoder.encode(&state, rt, last_action)?;
            let now = source.elapsed();
            let last = i + 1 == n;

            if let Some(Pending { mut record, obs: prev_obs }) = pending.take() {
                let terms = reward_terms(&state, &config.weights);
                let reward = total_reward(&state, &config.weights, record.ltl_reward)?;
                let terminal_bonus = if last { bolts.terminal(rt) } else { 0.0 };
                record.outcome_state = Some(state);
                record.terms = Some(terms);
                record.reward = reward;
                record.terminal_bonus = terminal_bonus;
                if autonomous_learning {
                    let t = Transition {
                        obs: prev_obs,
                        action: record.action,
                        reward: reward + terminal_bonus,
                        next_obs: obs.clone(),
                        terminal: last,
                    };
                    record.td = Some(agent.td_update(&t)?);
                }
                ctx.publish(now, || {
                    Payload::Reward(RewardPayload {
                        decision: record.decision,
                        terms,
                        ltl_reward: record.ltl_reward,
                        terminal_bonus,
                        total: reward + terminal_bonus,
                        td: record.td,
                    })
                })?;
                log.decisions.push(record);
            }
            ctx.sync(log);
            if last {
                break;
            }

            let on_posted = |req: &WizardRequest| {
                if let Some(bus) = ctx.bus {
                    let _ = bus.publish_at(now, Payload::ActionRequest(req.clone()));
                }
            };
            let prompt = ctx.wizard.filter(|_| opts.mode == Mode::Wizard).map(|channel| WizardPrompt {
                channel,
                decision: i,
                segment: seg,
                timeout,
                on_posted: &on_posted,
            });
            // a stop request closes the wizard channel; report it as a stop
            let d = decide(opts.mode, &obs, agent, opts.select, &mut script, &mut decide_rng, prompt)
                .map_err(|e| ctx.check_stop().err().unwrap_or(e))?;
            let (action, effect, warning) = execute_action(d.action, seg, source, &mut effect_rng, config);
            let symbol = bolts
                .alphabet()
                .index_of(action.name())
                .ok_or_else(|| LtlfError::InvalidInput(format!("action {action} is not in the bolt alphabet")))?;
            let (next_rt, ltl_reward) = bolts.step_index(rt, symbol);
            *rt = next_rt;

            let imitation_label = (d.source == ActionSource::Wizard).then_some(d.action);
            if let Some(label) = imitation_label {
                labels.push((obs.clone(), label));
                if wizard_learning {
                    agent.imitation_update(&labels)?;
                }
            }
            if let Some(w) = &warning {
                ctx.publish(now, || Payload::log("warn", w.clone()))?;
            }
            let record = DecisionRecord {
                decision: i,
                segment_id: seg.id.clone(),
                state,
                action,
                requested: (action != d.action).then_some(d.action),
                source: d.source,
                fallback: d.fallback,
                request_id: d.request_id,
                warning,
                effect,
                bolt_states: bolts.status(rt),
                ltl_reward,
                imitation_label,
                outcome_state: None,
                terms: None,
                reward: ltl_reward,
                terminal_bonus: 0.0,
                td: None,
            };
            ctx.publish(now, || {
                Payload::ActionChosen(ActionChosenPayload {
                    decision: i,
                    action,
                    source: d.source,
                    fallback: d.fallback,
                    effect: record.effect.clone(),
                })
            })?;
            if let ActionEffect::Gesture { poses } = &record.effect {
                for p in poses {
                    ctx.publish(now, || Payload::Servo(ServoPayload { pose: *p, reason: "gesture".into() }))?;
                }
            }
            ctx.publish(now, || Payload::BoltState(BoltStatePayload { decision: Some(i), bolts: record.bolt_states.clone() }))?;
            last_action = Some(action);
            pending = Some(Pending { record, obs });
        }
        Ok(())
    })();

    if let Err(e) = result {
        // keep an unsettled decision in the partial log
        if let Some(p) = pending.take() {
            log.decisions.push(p.record);
        }
        return Err(e);
    }

    let terminal_settlement = bolts.terminal(rt);
    let status = bolts.status(rt);
    let final_return = log.decisions.iter().map(|d| d.reward).sum::<f64>() + terminal_settlement;
    log.footer = Some(EpisodeFooter {
        status: EpisodeStatus::Finished,
        decisions: log.decisions.len(),
        terminal_settlement,
        violations: status.iter().filter(|s| s.violated).count(),
        compliant: status.iter().all(|s| s.accepting),
        final_bolt_states: status,
        final_return,
        error: None,
    });
    ctx.sync(log);
    ctx.publish(source.elapsed(), || {
        Payload::log("info", format!("session {} finished: return {final_return}", opts.session_id))
    })?;
    Ok(())
}
