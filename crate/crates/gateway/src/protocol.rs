//! Wire protocol. Binary messages are single 640-byte PCM16LE frames; text
//! messages are JSON objects with a `type` discriminator and a `t_ms`
//! session timestamp.

use duplex_core::trace::SessionStats;
use duplex_core::{Config, DialogueState, TraceEvent, TraceRecord, TransitionKind};
use serde::{Deserialize, Serialize};

/// Tone-profile stand-in for an enrolled speaker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvProfile {
    pub target_hz: f64,
    #[serde(default = "default_sv_threshold")]
    pub threshold: f32,
}

fn default_sv_threshold() -> f32 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        sample_rate: u32,
        #[serde(default)]
        sv_profile: Option<SvProfile>,
        /// Partial config merged over the server config.
        #[serde(default)]
        config: Option<serde_json::Value>,
    },
    Bye,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnsupportedRate,
    Protocol,
    BadFrame,
    BadConfig,
    BadMessage,
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByeReason {
    Client,
    Idle,
    Shutdown,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Ready {
        session_id: String,
        config: Box<Config>,
    },
    State {
        state: DialogueState,
        unit: u64,
    },
    Transition {
        kind: TransitionKind,
        unit: u64,
    },
    Transcript {
        segment_id: u64,
        text: String,
    },
    TtsStart {
        utterance_id: u64,
        text: String,
    },
    TtsCancel {
        utterance_id: u64,
    },
    TtsEnd {
        utterance_id: u64,
    },
    Overrun {
        dropped_frames: u64,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
    Bye {
        reason: ByeReason,
        stats: SessionStats,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub t_ms: u64,
    #[serde(flatten)]
    pub message: ServerMessage,
}

impl Envelope {
    pub fn new(t_ms: u64, message: ServerMessage) -> Self {
        Self { t_ms, message }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

fn state_after(kind: TransitionKind) -> DialogueState {
    match kind {
        TransitionKind::KeepListen | TransitionKind::SpeakToListen => DialogueState::Listen,
        TransitionKind::ListenToSpeak | TransitionKind::KeepSpeak => DialogueState::Speak,
    }
}

/// Client-facing messages for one trace record, in order.
pub fn publish(record: &TraceRecord) -> Vec<Envelope> {
    let t = record.t;
    let msgs = match &record.event {
        TraceEvent::Transition { kind, unit_index, .. } => vec![
            ServerMessage::Transition {
                kind: *kind,
                unit: *unit_index,
            },
            ServerMessage::State {
                state: state_after(*kind),
                unit: *unit_index,
            },
        ],
        TraceEvent::AsrComplete { segment_id, text } => vec![ServerMessage::Transcript {
            segment_id: *segment_id,
            text: text.clone(),
        }],
        TraceEvent::PlaybackStart { utterance_id, text, .. } => vec![ServerMessage::TtsStart {
            utterance_id: *utterance_id,
            text: text.clone(),
        }],
        TraceEvent::PlaybackCancel { utterance_id, .. } => vec![ServerMessage::TtsCancel {
            utterance_id: *utterance_id,
        }],
        TraceEvent::PlaybackComplete { utterance_id } => vec![ServerMessage::TtsEnd {
            utterance_id: *utterance_id,
        }],
        _ => vec![],
    };
    msgs.into_iter().map(|m| Envelope::new(t, m)).collect()
}
