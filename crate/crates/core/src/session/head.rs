use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::FacePosition;

pub const PAN_RANGE: f64 = 45.0;
pub const TILT_RANGE: f64 = 20.0;

/// Simulated head servo pose in degrees. Positive pan turns right,
/// positive tilt looks down (image y grows downward).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ServoPose {
    pub pan: f64,
    pub tilt: f64,
}

impl ServoPose {
    /// Builds a pose clamped to the servo ranges.
    pub fn new(pan: f64, tilt: f64) -> Self {
        ServoPose {
            pan: pan.clamp(-PAN_RANGE, PAN_RANGE),
            tilt: tilt.clamp(-TILT_RANGE, TILT_RANGE),
        }
    }

    pub fn in_range(&self) -> bool {
        self.pan.abs() <= PAN_RANGE && self.tilt.abs() <= TILT_RANGE
    }
}

/// One proportional step toward centering the face centroid.
///
/// The centroid offset from the frame center, normalized by the frame size,
/// is scaled by the gain and the servo range. No faces leaves the pose alone.
pub fn head_tracker(
    faces: &[FacePosition<f64>],
    pose: ServoPose,
    gain: f64,
    frame_width: f64,
    frame_height: f64,
) -> ServoPose {
    if faces.is_empty() || !(gain > 0.0) {
        return pose;
    }
    let n = faces.len() as f64;
    let cx = faces.iter().map(|f| f.x).sum::<f64>() / n;
    let cy = faces.iter().map(|f| f.y).sum::<f64>() / n;
    let ex = (cx - frame_width / 2.0) / frame_width;
    let ey = (cy - frame_height / 2.0) / frame_height;
    ServoPose::new(pose.pan + gain * ex * PAN_RANGE, pose.tilt + gain * ey * TILT_RANGE)
}

/// Random head-and-arm gesture: `n` poses drawn uniformly over the ranges.
pub fn gesture<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<ServoPose> {
    (0..n.max(1))
        .map(|_| ServoPose::new(rng.random_range(-PAN_RANGE..=PAN_RANGE), rng.random_range(-TILT_RANGE..=TILT_RANGE)))
        .collect()
}
