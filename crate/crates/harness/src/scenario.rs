//! Scenario scripts.
//!
//! A scenario is a TOML file listing user utterances on a millisecond
//! timeline:
//!
//! ```toml
//! name = "weather"
//! seed = 7
//! length_ms = 12000          # optional; defaults to last event end + tail
//!
//! [[events]]
//! t_ms = 1000
//! kind = "user_utterance"
//! duration_ms = 1200
//! label = "complete"          # complete | incomplete | backchannel | interruption | non_target
//! text = "what's the weather tomorrow"
//! reply = "Sunny, with a light breeze."   # optional scripted agent reply
//! expected = "respond"        # optional; defaults from the label
//! ```

use std::path::Path;
use std::sync::Arc;

use duplex_core::audio::pcm::tone_sample;
use duplex_core::audio::{AudioFrame, Source, FRAME_MS, FRAME_SAMPLES, SAMPLE_RATE};
use duplex_core::config::HarnessConfig;
use duplex_core::script::{ScriptLabel, ScriptTable, ScriptedUtterance};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    UserUtterance,
}

/// Behavior the agent is expected to show in response to an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expected {
    Respond,
    Wait,
    ContinueSpeaking,
    CancelAndListen,
    Ignore,
}

impl Expected {
    pub fn for_label(label: ScriptLabel) -> Self {
        match label {
            ScriptLabel::Complete => Expected::Respond,
            ScriptLabel::Incomplete => Expected::Wait,
            ScriptLabel::Backchannel => Expected::ContinueSpeaking,
            ScriptLabel::Interruption => Expected::CancelAndListen,
            ScriptLabel::NonTarget => Expected::Ignore,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEvent {
    pub t_ms: u64,
    pub kind: EventKind,
    pub duration_ms: u64,
    pub label: ScriptLabel,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

impl ScenarioEvent {
    pub fn end_ms(&self) -> u64 {
        self.t_ms + self.duration_ms
    }

    pub fn expected(&self) -> Expected {
        self.expected.unwrap_or_else(|| Expected::for_label(self.label))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_ms: Option<u64>,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("event {index}: {message}")]
    Invalid { index: usize, message: String },
    #[error("scenario: {0}")]
    Scenario(String),
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |index, message: String| Err(ScenarioError::Invalid { index, message });
        if self.name.trim().is_empty() {
            return Err(ScenarioError::Scenario("name is empty".into()));
        }
        let mut prev_end = 0;
        for (i, e) in self.events.iter().enumerate() {
            if e.duration_ms < FRAME_MS {
                return invalid(i, format!("duration_ms {} is shorter than one frame", e.duration_ms));
            }
            if i > 0 && e.t_ms < prev_end {
                return invalid(i, format!("starts at {} before the previous event ends at {prev_end}", e.t_ms));
            }
            if e.label == ScriptLabel::NonTarget && e.expected() != Expected::Ignore {
                return invalid(i, "non-target events can only be ignored".into());
            }
            if e.text.trim().is_empty() {
                return invalid(i, "text is empty".into());
            }
            if let Some(len) = self.length_ms {
                if e.end_ms() > len {
                    return invalid(i, format!("ends at {} past length_ms {len}", e.end_ms()));
                }
            }
            prev_end = e.end_ms();
        }
        Ok(())
    }

    pub fn length_ms(&self, tail_ms: u64) -> u64 {
        let len = self
            .length_ms
            .unwrap_or_else(|| self.events.last().map_or(0, |e| e.end_ms()) + tail_ms);
        len.div_ceil(FRAME_MS) * FRAME_MS
    }

    pub fn script_table(&self) -> Arc<ScriptTable> {
        Arc::new(ScriptTable::new(
            self.events
                .iter()
                .map(|e| ScriptedUtterance {
                    id: e.id.clone(),
                    t_start: e.t_ms,
                    t_end: e.end_ms(),
                    label: e.label,
                    text: e.text.clone(),
                    reply: e.reply.clone(),
                })
                .collect(),
        ))
    }

    /// User microphone signal: a tone burst per event (target speaker pitch,
    /// or the non-target pitch for `non_target` events) over digital silence.
    pub fn frames(&self, harness: &HarnessConfig) -> Vec<AudioFrame> {
        let per_ms = u64::from(SAMPLE_RATE) / 1000;
        let total = self.length_ms(harness.tail_ms);
        let mut next_event = 0;
        (0..total / FRAME_MS)
            .map(|k| {
                let t0 = k * FRAME_MS;
                let mut samples = [0i16; FRAME_SAMPLES];
                while next_event < self.events.len() && self.events[next_event].end_ms() <= t0 {
                    next_event += 1;
                }
                for e in self.events[next_event..].iter().take_while(|e| e.t_ms < t0 + FRAME_MS) {
                    let hz = if e.label == ScriptLabel::NonTarget {
                        harness.nontarget_hz
                    } else {
                        harness.target_hz
                    };
                    let from = e.t_ms.max(t0) - t0;
                    let to = e.end_ms().min(t0 + FRAME_MS) - t0;
                    for i in (from * per_ms)..(to * per_ms) {
                        let n = t0 * per_ms + i;
                        samples[i as usize] = tone_sample(hz, harness.amplitude, n);
                    }
                }
                AudioFrame::new(samples, t0, Source::User)
            })
            .collect()
    }
}
