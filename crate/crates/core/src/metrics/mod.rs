//! Per-frame engagement metrics and their aggregation into segment state
//! vectors and scalar rewards.
//!
//! Angles are carried in degrees and converted to radians only inside
//! [`gaze_reward`]. Face positions are image pixels.

mod tracker;
mod tracks;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub use tracker::{MetricsConfig, MetricsTracker};
pub use tracks::{read_tracks, read_tracks_from, segment_frames_by_time};

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("segment produced no frames")]
    EmptySegment,
}

/// Gaze direction relative to the camera axis, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeVector<T> {
    /// Lateral angle, left/right.
    pub theta: T,
    /// Vertical angle. Logged only; no metric consumes it.
    pub phi: T,
}

impl<T: Scalar> GazeVector<T> {
    pub fn new(theta: T, phi: T) -> Result<Self> {
        let g = GazeVector { theta, phi };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() || !self.phi.is_finite() {
            return Err(MetricsError::InvalidInput("gaze angle is not finite".into()));
        }
        if self.theta.abs() > T::lit(180.0) {
            return Err(MetricsError::InvalidInput(format!(
                "theta {} outside [-180, 180]",
                self.theta
            )));
        }
        if self.phi.abs() > T::lit(90.0) {
            return Err(MetricsError::InvalidInput(format!("phi {} outside [-90, 90]", self.phi)));
        }
        Ok(())
    }
}

/// Center of a detected face in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacePosition<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> FacePosition<T> {
    pub fn new(x: T, y: T) -> Self {
        FacePosition { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One detected face: where it is and where it looks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Face<T> {
    #[serde(flatten)]
    pub position: FacePosition<T>,
    #[serde(flatten)]
    pub gaze: GazeVector<T>,
}

/// One camera frame's perception output. Serializes to the recorded-track
/// line format `{"t": .., "faces": [{"x", "y", "theta", "phi"}], "noise": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObservation<T> {
    #[serde(rename = "t")]
    pub timestamp: T,
    pub faces: Vec<Face<T>>,
    #[serde(rename = "noise")]
    pub noise_sample: T,
}

impl<T: Scalar> FrameObservation<T> {
    pub fn positions(&self) -> Vec<FacePosition<T>> {
        self.faces.iter().map(|f| f.position).collect()
    }

    pub fn gazes(&self) -> Vec<GazeVector<T>> {
        self.faces.iter().map(|f| f.gaze).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics<T> {
    pub n_faces: usize,
    pub r_gaze: T,
    pub r_jump: T,
    pub r_noise: T,
    pub r_nd: T,
}

/// Segment-averaged metrics: the agent's view of the children.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector<T> {
    pub r_gaze: T,
    pub r_jump: T,
    pub r_noise: T,
    pub r_nd: T,
}

impl<T: Scalar> StateVector<T> {
    pub fn new(r_gaze: T, r_jump: T, r_noise: T, r_nd: T) -> Self {
        StateVector { r_gaze, r_jump, r_noise, r_nd }
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.r_gaze, self.r_jump, self.r_noise, self.r_nd]
    }

    pub fn from_array(a: [T; 4]) -> Self {
        StateVector::new(a[0], a[1], a[2], a[3])
    }
}

impl<T: Scalar> From<&FrameMetrics<T>> for StateVector<T> {
    fn from(m: &FrameMetrics<T>) -> Self {
        StateVector::new(m.r_gaze, m.r_jump, m.r_noise, m.r_nd)
    }
}

/// Reward coefficients α₁..α₄.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights<T> {
    pub alpha1: T,
    pub alpha2: T,
    pub alpha3: T,
    pub alpha4: T,
}

impl<T: Scalar> Default for RewardWeights<T> {
    fn default() -> Self {
        RewardWeights {
            alpha1: T::lit(1.0),
            alpha2: T::lit(0.01),
            alpha3: T::lit(0.5),
            alpha4: T::lit(0.1),
        }
    }
}

impl<T: Scalar> RewardWeights<T> {
    pub fn new(alpha1: T, alpha2: T, alpha3: T, alpha4: T) -> Result<Self> {
        let w = RewardWeights { alpha1, alpha2, alpha3, alpha4 };
        w.validate()?;
        Ok(w)
    }

    /// Weights must be finite. Negative α₄ is accepted so operators can flip
    /// the sign of the noise-derivative term; α₁..α₃ must be nonnegative.
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha1, self.alpha2, self.alpha3, self.alpha4];
        if all.iter().any(|a| !a.is_finite()) {
            return Err(MetricsError::InvalidConfig("reward weight is not finite".into()));
        }
        if all[..3].iter().any(|a| *a < T::zero()) {
            return Err(MetricsError::InvalidConfig("alpha1..alpha3 must be >= 0".into()));
        }
        Ok(())
    }
}

/// The four weighted engagement terms of the reward, signs applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms<T> {
    pub gaze: T,
    pub jump: T,
    pub noise: T,
    pub noise_delta: T,
}

impl<T: Scalar> RewardTerms<T> {
    pub fn engagement(&self) -> T {
        self.gaze + self.jump + self.noise + self.noise_delta
    }
}

/// Mean cosine of the lateral gaze angles; 0 for an empty frame.
pub fn gaze_reward<T: Scalar>(gazes: &[GazeVector<T>]) -> Result<T> {
    if gazes.iter().any(|g| !g.theta.is_finite() || !g.phi.is_finite()) {
        return Err(MetricsError::InvalidInput("gaze angle is not finite".into()));
    }
    if gazes.is_empty() {
        return Ok(T::zero());
    }
    let sum = gazes
        .iter()
        .fold(T::zero(), |acc, g| acc + g.theta.to_radians().cos());
    Ok(sum / T::from_count(gazes.len()))
}

/// Summed nearest-neighbour displacement between consecutive frames.
///
/// Each face of `prev` is matched to its closest face in `next` (many-to-one
/// allowed). A face with no candidate within `d_max` contributes `d_max`.
pub fn jumpiness<T: Scalar>(
    prev: &[FacePosition<T>],
    next: &[FacePosition<T>],
    d_max: T,
) -> Result<T> {
    if !(d_max > T::zero()) || !d_max.is_finite() {
        return Err(MetricsError::InvalidConfig(format!("d_max must be > 0, got {d_max}")));
    }
    let mut total = T::zero();
    for p in prev {
        let nearest = next
            .iter()
            .map(|q| p.distance(q))
            .fold(T::infinity(), T::min);
        total += if nearest <= d_max { nearest } else { d_max };
    }
    Ok(total)
}

/// Mean level over the most recent `window` seconds of `(timestamp, level)`
/// samples. Samples older than `latest - window` (exclusive) are ignored.
pub fn noise_window<T: Scalar>(samples: &[(T, T)], window: T) -> Result<T> {
    if !(window > T::zero()) {
        return Err(MetricsError::InvalidConfig(format!("window must be > 0, got {window}")));
    }
    if let Some((t, level)) = samples.iter().find(|(t, l)| !(*l >= T::zero()) || !t.is_finite()) {
        return Err(MetricsError::InvalidInput(format!(
            "noise sample ({t}, {level}) must be finite and nonnegative"
        )));
    }
    let Some(latest) = samples.iter().map(|(t, _)| *t).reduce(T::max) else {
        return Ok(T::zero());
    };
    let cutoff = latest - window;
    let (sum, n) = samples
        .iter()
        .filter(|(t, _)| *t > cutoff)
        .fold((T::zero(), 0usize), |(s, n), (_, l)| (s + *l, n + 1));
    Ok(sum / T::from_count(n))
}

pub fn noise_derivative<T: Scalar>(prev_avg: T, cur_avg: T, dt: T) -> Result<T> {
    if !(dt > T::zero()) {
        return Err(MetricsError::InvalidInput(format!("dt must be > 0, got {dt}")));
    }
    Ok((cur_avg - prev_avg) / dt)
}

/// Arithmetic mean of each metric over the frames of one segment.
pub fn aggregate_segment<T: Scalar>(frames: &[FrameMetrics<T>]) -> Result<StateVector<T>> {
    if frames.is_empty() {
        return Err(MetricsError::EmptySegment);
    }
    let mut acc = [T::zero(); 4];
    for f in frames {
        for (a, v) in acc.iter_mut().zip(StateVector::from(f).to_array()) {
            *a += v;
        }
    }
    let n = T::from_count(frames.len());
    Ok(StateVector::from_array(acc.map(|a| a / n)))
}

/// Signed weighted terms α₁·r_gaze, −α₂·r_jump, −α₃·r_noise, +α₄·r_nd.
pub fn reward_terms<T: Scalar>(state: &StateVector<T>, w: &RewardWeights<T>) -> RewardTerms<T> {
    RewardTerms {
        gaze: w.alpha1 * state.r_gaze,
        jump: -(w.alpha2 * state.r_jump),
        noise: -(w.alpha3 * state.r_noise),
        noise_delta: w.alpha4 * state.r_nd,
    }
}

/// r = α₁·r_gaze − α₂·r_jump − α₃·r_noise + α₄·r_nd + ltl_reward.
pub fn total_reward<T: Scalar>(
    state: &StateVector<T>,
    w: &RewardWeights<T>,
    ltl_reward: T,
) -> Result<T> {
    let inputs = state.to_array();
    let weights = [w.alpha1, w.alpha2, w.alpha3, w.alpha4];
    if inputs.iter().chain(&weights).chain([&ltl_reward]).any(|v| !v.is_finite()) {
        return Err(MetricsError::InvalidInput("reward input is not finite".into()));
    }
    Ok(w.alpha1 * state.r_gaze - w.alpha2 * state.r_jump - w.alpha3 * state.r_noise
        + w.alpha4 * state.r_nd
        + ltl_reward)
}
