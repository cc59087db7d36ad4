use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, SessionError};

/// One prerecorded story unit. `media_ref` is an opaque label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub id: String,
    pub duration_s: f64,
    #[serde(default)]
    pub media_ref: String,
    #[serde(default)]
    pub questions: Vec<String>,
}

/// Segmented story; segments play in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryManifest {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub segments: Vec<Segment>,
}

impl StoryManifest {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(SessionError::schema("id", "must be nonempty"));
        }
        if self.segments.is_empty() {
            return Err(SessionError::schema("segments", "at least one segment is required"));
        }
        let mut seen = HashSet::new();
        for (i, seg) in self.segments.iter().enumerate() {
            if !(seg.duration_s > 0.0) || !seg.duration_s.is_finite() {
                return Err(SessionError::schema(
                    &format!("segments[{i}].duration_s"),
                    &format!("must be > 0, got {}", seg.duration_s),
                ));
            }
            if !seen.insert(seg.id.as_str()) {
                return Err(SessionError::DuplicateSegment(seg.id.clone()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let story: StoryManifest =
            serde_json::from_str(text).map_err(|e| SessionError::schema("manifest", &e.to_string()))?;
        story.validate()?;
        Ok(story)
    }

    /// A generated story of `n` equal segments, each with `questions`
    /// placeholder questions.
    pub fn synthetic(id: &str, n: usize, duration_s: f64, questions: usize) -> Self {
        StoryManifest {
            id: id.to_string(),
            title: format!("synthetic story ({n} segments)"),
            segments: (0..n)
                .map(|i| Segment {
                    id: format!("p{}", i + 1),
                    duration_s,
                    media_ref: format!("p{}.mp4", i + 1),
                    questions: (0..questions).map(|q| format!("Question {} about page {}?", q + 1, i + 1)).collect(),
                })
                .collect(),
        }
    }

    pub fn durations(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.duration_s).collect()
    }
}

pub fn load_story(path: &Path) -> Result<StoryManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| SessionError::io(path, e))?;
    StoryManifest::from_json(&text).map_err(|e| match e {
        SessionError::Schema { field, message } => SessionError::Schema {
            field,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}
