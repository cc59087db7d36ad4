use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, SessionConfig, SessionError, StoryManifest};
use crate::agent::Agent;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained agent (parameters and normalizer statistics) with the story and
/// config it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub story: StoryManifest,
    pub config: SessionConfig,
    pub agent: Agent<f64>,
    pub episodes: usize,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(story: StoryManifest, config: SessionConfig, agent: Agent<f64>, episodes: usize, seed: u64) -> Self {
        Checkpoint { version: CHECKPOINT_VERSION, story, config, agent, episodes, seed }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| SessionError::io(path, e))?;
        std::fs::write(path, text).map_err(|e| SessionError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SessionError::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| SessionError::schema("checkpoint", &format!("{}: {e}", path.display())))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(SessionError::schema(
                "version",
                &format!("checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})", ck.version),
            ));
        }
        Ok(ck)
    }
}
