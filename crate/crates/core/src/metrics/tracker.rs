use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{
    gaze_reward, jumpiness, noise_derivative, noise_window, FacePosition, FrameMetrics,
    FrameObservation, MetricsError, Result,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct MetricsConfig<T> {
    pub frame_width: T,
    pub frame_height: T,
    /// Matching radius for jumpiness; `None` means a quarter of the frame diagonal.
    pub d_max: Option<T>,
    /// Length of the rolling noise window in seconds.
    pub noise_window_s: T,
}

impl<T: Scalar> Default for MetricsConfig<T> {
    fn default() -> Self {
        MetricsConfig {
            frame_width: T::lit(640.0),
            frame_height: T::lit(480.0),
            d_max: None,
            noise_window_s: T::one(),
        }
    }
}

impl<T: Scalar> MetricsConfig<T> {
    pub fn d_max(&self) -> T {
        self.d_max
            .unwrap_or_else(|| T::lit(0.25) * self.frame_width.hypot(self.frame_height))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_width > T::zero() && self.frame_height > T::zero()) {
            return Err(MetricsError::InvalidConfig("frame size must be positive".into()));
        }
        if !(self.d_max() > T::zero()) {
            return Err(MetricsError::InvalidConfig("d_max must be > 0".into()));
        }
        if !(self.noise_window_s > T::zero()) {
            return Err(MetricsError::InvalidConfig("noise window must be > 0".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> FacePosition<T> {
        let half = T::lit(0.5);
        FacePosition::new(self.frame_width * half, self.frame_height * half)
    }
}

/// Turns a stream of observations into per-frame metrics.
///
/// Holds the previous frame's faces for jumpiness, the rolling noise
/// window, and the history of window means used for the noise derivative.
#[derive(Debug, Clone)]
pub struct MetricsTracker<T> {
    config: MetricsConfig<T>,
    prev_faces: Option<Vec<FacePosition<T>>>,
    last_t: Option<T>,
    samples: VecDeque<(T, T)>,
    // (timestamp, window mean) pairs, oldest first
    means: VecDeque<(T, T)>,
}

impl<T: Scalar> MetricsTracker<T> {
    pub fn new(config: MetricsConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(MetricsTracker {
            config,
            prev_faces: None,
            last_t: None,
            samples: VecDeque::new(),
            means: VecDeque::new(),
        })
    }

    pub fn config(&self) -> &MetricsConfig<T> {
        &self.config
    }

    fn validate(&self, obs: &FrameObservation<T>) -> Result<()> {
        if !obs.timestamp.is_finite() {
            return Err(MetricsError::InvalidInput("timestamp is not finite".into()));
        }
        if let Some(last) = self.last_t {
            if obs.timestamp <= last {
                return Err(MetricsError::InvalidInput(format!(
                    "timestamp {} does not increase past {}",
                    obs.timestamp, last
                )));
            }
        }
        if !(obs.noise_sample >= T::zero()) || !obs.noise_sample.is_finite() {
            return Err(MetricsError::InvalidInput(format!(
                "noise sample {} must be finite and nonnegative",
                obs.noise_sample
            )));
        }
        for face in &obs.faces {
            face.gaze.validate()?;
            let p = face.position;
            let inside = p.x >= T::zero()
                && p.y >= T::zero()
                && p.x <= self.config.frame_width
                && p.y <= self.config.frame_height;
            if !inside {
                return Err(MetricsError::InvalidInput(format!(
                    "face at ({}, {}) outside the frame",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }

    pub fn observe(&mut self, obs: &FrameObservation<T>) -> Result<FrameMetrics<T>> {
        self.validate(obs)?;
        let now = obs.timestamp;
        let window = self.config.noise_window_s;
        let positions = obs.positions();

        let r_gaze = gaze_reward(&obs.gazes())?;
        let r_jump = match &self.prev_faces {
            Some(prev) => jumpiness(prev, &positions, self.config.d_max())?,
            None => T::zero(),
        };

        self.samples.push_back((now, obs.noise_sample));
        while self.samples.front().is_some_and(|(t, _)| *t <= now - window) {
            self.samples.pop_front();
        }
        let samples: Vec<_> = self.samples.iter().copied().collect();
        let r_noise = noise_window(&samples, window)?;

        // Derivative against the window mean from one window ago, or the
        // oldest mean available early in the stream.
        while self.means.len() >= 2 && self.means[1].0 <= now - window {
            self.means.pop_front();
        }
        let r_nd = match self.means.front() {
            Some(&(t0, m0)) => noise_derivative(m0, r_noise, now - t0)?,
            None => T::zero(),
        };
        self.means.push_back((now, r_noise));

        self.prev_faces = Some(positions);
        self.last_t = Some(now);
        Ok(FrameMetrics {
            n_faces: obs.faces.len(),
            r_gaze,
            r_jump,
            r_noise,
            r_nd,
        })
    }
}
