//! Recorded perception tracks: JSON Lines, one [`FrameObservation`] per line.

use std::io::BufRead;
use std::path::Path;

use super::{FrameObservation, MetricsError, Result};
use crate::scalar::Scalar;

pub fn read_tracks_from<T: Scalar, R: BufRead>(reader: R) -> Result<Vec<FrameObservation<T>>> {
    let mut frames = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| MetricsError::InvalidInput(format!("read error: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let obs: FrameObservation<T> = serde_json::from_str(&line).map_err(|e| {
            MetricsError::InvalidInput(format!("track line {}: {e}", lineno + 1))
        })?;
        frames.push(obs);
    }
    Ok(frames)
}

pub fn read_tracks<T: Scalar>(path: &Path) -> Result<Vec<FrameObservation<T>>> {
    let file = std::fs::File::open(path)
        .map_err(|e| MetricsError::InvalidInput(format!("{}: {e}", path.display())))?;
    read_tracks_from(std::io::BufReader::new(file))
}

/// Splits frames into consecutive time windows of the given durations,
/// starting at the first frame's timestamp. Frames past the last window are
/// dropped.
pub fn segment_frames_by_time<'a, T: Scalar>(
    frames: &'a [FrameObservation<T>],
    durations: &[T],
) -> Vec<&'a [FrameObservation<T>]> {
    let Some(first) = frames.first() else {
        return durations.iter().map(|_| &frames[0..0]).collect();
    };
    let mut out = Vec::with_capacity(durations.len());
    let mut start_idx = 0;
    let mut end_t = first.timestamp;
    for d in durations {
        end_t += *d;
        let len = frames[start_idx..]
            .iter()
            .take_while(|f| f.timestamp < end_t)
            .count();
        out.push(&frames[start_idx..start_idx + len]);
        start_idx += len;
    }
    out
}
