use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, SessionError};
use crate::agent::{ActionId, AgentConfig};
use crate::audience::AudienceConfig;
use crate::ltlf::BoltConfig;
use crate::metrics::{MetricsConfig, RewardWeights};

/// Prerecorded sentence sets; logic only consumes their indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phrases {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl Default for Phrases {
    fn default() -> Self {
        Phrases {
            positive: ["Great job!", "You are such good listeners!", "Wonderful!"]
                .map(String::from)
                .to_vec(),
            negative: ["Please be quiet.", "Let's listen to the story.", "Eyes on me, please."]
                .map(String::from)
                .to_vec(),
        }
    }
}

/// Everything a session needs besides the story. Loaded from JSON; every
/// field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub frame_rate: f64,
    pub n_children: usize,
    pub audience: AudienceConfig,
    pub metrics: MetricsConfig<f64>,
    pub weights: RewardWeights<f64>,
    pub bolts: BoltConfig,
    pub agent: AgentConfig<f64>,
    pub wizard_timeout_s: f64,
    pub head_gain: f64,
    /// Poses per head-and-arm gesture.
    pub gesture_poses: usize,
    pub phrases: Phrases,
    /// Action list for scripted mode.
    pub script: Vec<ActionId>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            frame_rate: 10.0,
            n_children: 4,
            audience: AudienceConfig::default(),
            metrics: MetricsConfig::default(),
            weights: RewardWeights::default(),
            bolts: BoltConfig::default(),
            agent: AgentConfig::default(),
            wizard_timeout_s: 15.0,
            head_gain: 0.5,
            gesture_poses: 4,
            phrases: Phrases::default(),
            script: Vec::new(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0) || !self.frame_rate.is_finite() {
            return Err(SessionError::schema("frame_rate", "must be > 0"));
        }
        if !(self.wizard_timeout_s > 0.0) {
            return Err(SessionError::schema("wizard_timeout_s", "must be > 0"));
        }
        if !(self.head_gain > 0.0) {
            return Err(SessionError::schema("head_gain", "must be > 0"));
        }
        if self.phrases.positive.is_empty() || self.phrases.negative.is_empty() {
            return Err(SessionError::schema("phrases", "both phrase lists need at least one entry"));
        }
        self.audience.validate()?;
        self.metrics.validate()?;
        self.weights.validate()?;
        if self.metrics.frame_width != self.audience.frame_width
            || self.metrics.frame_height != self.audience.frame_height
        {
            return Err(SessionError::schema("metrics", "frame size must match the audience frame size"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SessionError::io(path, e))?;
        let config: SessionConfig = serde_json::from_str(&text)
            .map_err(|e| SessionError::schema("config", &format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_defaults() {
        let c: SessionConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, SessionConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn partial_override() {
        let c: SessionConfig =
            serde_json::from_str(r#"{"frame_rate": 5, "script": ["q", "continue_story"], "agent": {"gamma": 0.9}}"#)
                .unwrap();
        assert_eq!(c.frame_rate, 5.0);
        assert_eq!(c.script, vec![ActionId::Question, ActionId::ContinueStory]);
        assert_eq!(c.agent.hyper.gamma, 0.9);
        assert_eq!(c.agent.hidden, 32);
    }

    #[test]
    fn rejects_bad_rate() {
        let c = SessionConfig { frame_rate: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
