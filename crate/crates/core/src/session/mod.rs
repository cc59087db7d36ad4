//! The storyteller loop: plays segments to an audience, turns frames into
//! state vectors, picks an action per segment boundary, and settles bolt and
//! engagement rewards into an episode log.

mod checkpoint;
mod config;
mod episode;
mod head;
mod story;
mod trainer;
mod wizard;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::Checkpoint;
pub use config::{Phrases, SessionConfig};
pub use episode::{
    build_agent, decide, execute_action, run_episode, run_segment, ActionEffect, ActionSource, Decision,
    DecisionRecord, EpisodeAborted, EpisodeContext, EpisodeFooter, EpisodeHeader, EpisodeLog, EpisodeOptions,
    EpisodeStatus, FrameSource, LogLine, ReplaySource, ScriptCursor, SegmentOutcome, SegmentRecord, WizardPrompt,
};
pub use head::{gesture, head_tracker, ServoPose, PAN_RANGE, TILT_RANGE};
pub use story::{load_story, Segment, StoryManifest};
pub use checkpoint::CHECKPOINT_VERSION;
pub use trainer::{continue_training, evaluate, train, EvalReport, TrainReport};
pub use wizard::{WizardChannel, WizardOutcome, WizardReject, WizardRequest};

use crate::agent::AgentError;
use crate::audience::AudienceError;
use crate::bus::BusError;
use crate::ltlf::LtlfError;
use crate::metrics::MetricsError;

pub type Result<T> = std::result::Result<T, SessionError>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("schema violation at {field}: {message}")]
    Schema { field: String, message: String },
    #[error("duplicate segment id {0:?}")]
    DuplicateSegment(String),
    #[error("mode error: {0}")]
    Mode(String),
    #[error("segment {0:?} produced no frames")]
    EmptySegment(String),
    #[error("session stopped")]
    Stopped,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Ltlf(#[from] LtlfError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Audience(#[from] AudienceError),
    #[error(transparent)]
    Bus(#[from] BusError),
}

impl SessionError {
    pub(crate) fn schema(field: &str, message: &str) -> Self {
        SessionError::Schema { field: field.to_string(), message: message.to_string() }
    }

    pub(crate) fn io(path: &Path, e: impl fmt::Display) -> Self {
        SessionError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

/// Who picks the action at each segment boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// The learned policy.
    #[serde(alias = "auto")]
    Autonomous,
    /// A human operator, with the policy as timeout fallback.
    Wizard,
    /// Uniform over the five actions.
    Random,
    /// A fixed list from the config, then continue_story.
    Scripted,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Autonomous, Mode::Wizard, Mode::Random, Mode::Scripted];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Autonomous => "autonomous",
            Mode::Wizard => "wizard",
            Mode::Random => "random",
            Mode::Scripted => "scripted",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" | "autonomous" => Ok(Mode::Autonomous),
            "wizard" => Ok(Mode::Wizard),
            "random" => Ok(Mode::Random),
            "scripted" => Ok(Mode::Scripted),
            _ => Err(format!("unknown mode {s:?} (expected auto, wizard, random or scripted)")),
        }
    }
}
