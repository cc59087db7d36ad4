//! Simulated group of children standing in for the camera and microphone.
//!
//! Every child has an attention level that decays while the story plays and
//! reacts to the robot's actions. Observations are derived from it: gaze
//! spread widens, faces drop out, and positions jitter as attention falls
//! or restlessness rises. All constants are configurable.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agent::ActionId;
use crate::metrics::{Face, FacePosition, FrameObservation, GazeVector};

pub type Result<T> = std::result::Result<T, AudienceError>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AudienceError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudienceConfig {
    pub max_children: usize,
    pub frame_width: f64,
    pub frame_height: f64,
    /// Attention decay per second, scaled by (1 + restlessness).
    pub decay_rate: f64,
    /// Chatter growth per second, scaled by (1 − attention).
    pub chatter_growth: f64,
    /// Gaze spread at zero attention, degrees.
    pub theta_max: f64,
    /// Probability scale for a face dropping out of a frame.
    pub p_hide: f64,
    /// Position jitter (pixels, one standard deviation) at full restlessness.
    pub jitter_px: f64,
    pub noise_base: f64,
    pub noise_fluctuation: f64,
    pub question_boost: f64,
    pub question_habituation: f64,
    pub praise_boost: f64,
    pub praise_boost_low: f64,
    pub praise_mood: f64,
    pub scold_chatter: f64,
    pub scold_boost: f64,
    pub scold_mood: f64,
    pub backfire_mood: f64,
    pub backfire_penalty: f64,
    pub move_boost: f64,
    pub move_restlessness: f64,
    pub initial_attention: (f64, f64),
    pub initial_restlessness: (f64, f64),
    pub initial_chatter: (f64, f64),
}

impl Default for AudienceConfig {
    fn default() -> Self {
        AudienceConfig {
            max_children: 8,
            frame_width: 640.0,
            frame_height: 480.0,
            decay_rate: 0.01,
            chatter_growth: 0.01,
            theta_max: 80.0,
            p_hide: 0.3,
            jitter_px: 6.0,
            noise_base: 0.05,
            noise_fluctuation: 0.02,
            question_boost: 0.25,
            question_habituation: 0.7,
            praise_boost: 0.10,
            praise_boost_low: 0.02,
            praise_mood: 0.05,
            scold_chatter: 0.3,
            scold_boost: 0.05,
            scold_mood: 0.15,
            backfire_mood: -0.5,
            backfire_penalty: 0.10,
            move_boost: 0.15,
            move_restlessness: 0.10,
            initial_attention: (0.6, 0.9),
            initial_restlessness: (0.1, 0.4),
            initial_chatter: (0.0, 0.3),
        }
    }
}

impl AudienceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AudienceError::InvalidConfig(m.to_string()));
        if self.max_children == 0 {
            return bad("max_children must be >= 1");
        }
        if !(self.frame_width > 0.0 && self.frame_height > 0.0) {
            return bad("frame size must be positive");
        }
        let nonneg = [
            self.decay_rate,
            self.chatter_growth,
            self.theta_max,
            self.p_hide,
            self.jitter_px,
            self.noise_base,
            self.noise_fluctuation,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return bad("rates, spreads and noise terms must be finite and >= 0");
        }
        for (lo, hi) in [self.initial_attention, self.initial_restlessness, self.initial_chatter] {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return bad("initial ranges must lie within [0, 1] with lo <= hi");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildState {
    pub attention: f64,
    pub restlessness: f64,
    pub chatter: f64,
    pub anchor: FacePosition<f64>,
    pub question_habituation: u32,
    pub feedback_mood: f64,
}

impl ChildState {
    fn clamp(&mut self) {
        self.attention = self.attention.clamp(0.0, 1.0);
        self.restlessness = self.restlessness.clamp(0.0, 1.0);
        self.chatter = self.chatter.clamp(0.0, 1.0);
        self.feedback_mood = self.feedback_mood.clamp(-1.0, 1.0);
    }
}

#[derive(Debug, Clone)]
pub struct AudienceState {
    pub config: AudienceConfig,
    pub children: Vec<ChildState>,
    pub elapsed: f64,
    rng: ChaCha8Rng,
}

/// Anchors spread evenly along the horizontal midline.
fn anchors(n: usize, config: &AudienceConfig) -> Vec<FacePosition<f64>> {
    (0..n)
        .map(|i| {
            FacePosition::new(
                config.frame_width * (i + 1) as f64 / (n + 1) as f64,
                config.frame_height / 2.0,
            )
        })
        .collect()
}

pub fn init_audience(n_children: usize, seed: u64, config: AudienceConfig) -> Result<AudienceState> {
    config.validate()?;
    if n_children < 1 || n_children > config.max_children {
        return Err(AudienceError::InvalidConfig(format!(
            "children count {n_children} outside 1..={}",
            config.max_children
        )));
    }
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
    let children = anchors(n_children, &config)
        .into_iter()
        .map(|anchor| ChildState {
            attention: draw(config.initial_attention),
            restlessness: draw(config.initial_restlessness),
            chatter: draw(config.initial_chatter),
            anchor,
            question_habituation: 0,
            feedback_mood: 0.0,
        })
        .collect();
    Ok(AudienceState { config, children, elapsed: 0.0, rng })
}

/// Zero-mean normal truncated to ±90° by rejection; exactly 0 when `sd` is 0.
fn gaze_angle(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd <= 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sd).expect("positive sd");
    loop {
        let theta: f64 = normal.sample(rng);
        if theta.abs() <= 90.0 {
            return theta;
        }
    }
}

impl AudienceState {
    pub fn mean_attention(&self) -> f64 {
        self.children.iter().map(|c| c.attention).sum::<f64>() / self.children.len() as f64
    }

    pub fn mean_chatter(&self) -> f64 {
        self.children.iter().map(|c| c.chatter).sum::<f64>() / self.children.len() as f64
    }

    /// Advances the simulation by `dt` seconds and emits one frame.
    pub fn step_frame(&mut self, dt: f64) -> Result<FrameObservation<f64>> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(AudienceError::InvalidInput(format!("dt must be > 0, got {dt}")));
        }
        self.elapsed += dt;
        let cfg = &self.config;
        let rng = &mut self.rng;
        let mut faces = Vec::with_capacity(self.children.len());
        for child in &mut self.children {
            child.attention -= cfg.decay_rate * dt * (1.0 + child.restlessness);
            child.chatter += cfg.chatter_growth * dt * (1.0 - child.attention);
            child.clamp();

            let sd = cfg.theta_max * (1.0 - child.attention) / 2.0;
            let theta = gaze_angle(rng, sd);
            let phi = gaze_angle(rng, sd / 2.0);
            let jitter = cfg.jitter_px * child.restlessness;
            let (dx, dy) = if jitter > 0.0 {
                let n = Normal::new(0.0, jitter).expect("positive jitter");
                (n.sample(rng), n.sample(rng))
            } else {
                (0.0, 0.0)
            };
            let hidden = rng.random::<f64>() < (1.0 - child.attention) * cfg.p_hide;
            if hidden {
                continue;
            }
            let position = FacePosition::new(
                (child.anchor.x + dx).clamp(0.0, cfg.frame_width),
                (child.anchor.y + dy).clamp(0.0, cfg.frame_height),
            );
            faces.push(Face { position, gaze: GazeVector { theta, phi } });
        }
        let fluctuation = if cfg.noise_fluctuation > 0.0 {
            Normal::new(0.0, cfg.noise_fluctuation).expect("positive sd").sample(rng)
        } else {
            0.0
        };
        let chatter = self.mean_chatter();
        let noise = (self.config.noise_base + chatter + fluctuation).max(0.0);
        Ok(FrameObservation { timestamp: self.elapsed, faces, noise_sample: noise })
    }

    /// Applies the children's response to a robot action.
    pub fn apply_action(&mut self, act: ActionId) {
        let cfg = self.config.clone();
        let praised_attentive = self.mean_attention() >= 0.5;
        for child in &mut self.children {
            match act {
                ActionId::ContinueStory => {}
                ActionId::Question => {
                    child.attention +=
                        cfg.question_boost * cfg.question_habituation.powi(child.question_habituation as i32);
                    child.question_habituation += 1;
                }
                ActionId::PositiveFeedback => {
                    child.attention += if praised_attentive { cfg.praise_boost } else { cfg.praise_boost_low };
                    child.feedback_mood += cfg.praise_mood;
                }
                ActionId::NegativeFeedback => {
                    child.chatter -= cfg.scold_chatter;
                    child.attention += cfg.scold_boost;
                    child.feedback_mood -= cfg.scold_mood;
                    if child.feedback_mood < cfg.backfire_mood {
                        child.attention -= cfg.backfire_penalty;
                    }
                }
                ActionId::MoveHeadArms => {
                    child.attention += cfg.move_boost;
                    child.restlessness += cfg.move_restlessness;
                }
            }
            child.clamp();
        }
    }
}
