//! Session trace: every observable engine step, timestamped on the session
//! clock, exportable as line-delimited JSON.

use serde::{Deserialize, Serialize};

use crate::audio::VadKind;
use crate::decision::DegradationKind;
use crate::dialogue::{Action, Dialogue, DialogueState, TransitionKind, UtteranceLabel};
use crate::error::ContractViolation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionCause {
    Decision,
    PlaybackComplete,
    SynthesisFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceEvent {
    SessionStart {
        session_id: String,
    },
    Vad {
        kind: VadKind,
        at: u64,
    },
    Segment {
        segment_id: u64,
        t_start: u64,
        t_end: u64,
        frames: usize,
        partial: bool,
        accepted: bool,
        sv_score: Option<f64>,
    },
    OverlapTrigger {
        segment_id: u64,
    },
    AsrSubmit {
        segment_id: u64,
        cycle: u64,
    },
    AsrComplete {
        segment_id: u64,
        text: String,
    },
    AsrFailed {
        segment_id: u64,
    },
    DecisionRequest {
        cycle: u64,
        state: DialogueState,
        segment_id: u64,
        segment_start: u64,
        segment_end: u64,
        transcripts: usize,
    },
    DecisionOutcome {
        cycle: u64,
        action: Action,
        label: UtteranceLabel,
        response_text: Option<String>,
        latency_ms: u64,
        fallback: bool,
    },
    Transition {
        kind: TransitionKind,
        unit_index: u64,
        cause: TransitionCause,
        cycle: Option<u64>,
    },
    PlaybackStart {
        utterance_id: u64,
        cycle: u64,
        text: String,
        first_frame_at: u64,
        duration_ms: u64,
    },
    AgentFrame {
        utterance_id: u64,
        index: u64,
    },
    PlaybackCancel {
        utterance_id: u64,
        cycle: u64,
        emitted_ms: u64,
    },
    PlaybackComplete {
        utterance_id: u64,
    },
    Degradation {
        kind: DegradationKind,
        detail: String,
    },
    Warning {
        detail: String,
    },
    IngressSummary {
        frames: u64,
        first_t: Option<u64>,
        last_t: Option<u64>,
    },
    SessionEnd {
        units: u64,
        decisions: u64,
        cancellations: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStats {
    pub units: u64,
    pub decisions: u64,
    pub cancellations: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionTrace {
    pub session_id: String,
    pub records: Vec<TraceRecord>,
}

impl SessionTrace {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, t: u64, event: TraceEvent) {
        self.records.push(TraceRecord { t, event });
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(session_id: &str, text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self {
            session_id: session_id.to_string(),
            records,
        })
    }

    pub fn transitions(&self) -> impl Iterator<Item = (u64, TransitionKind)> + '_ {
        self.records.iter().filter_map(|r| match r.event {
            TraceEvent::Transition { kind, .. } => Some((r.t, kind)),
            _ => None,
        })
    }

    /// Rebuilds the unit list from the recorded transitions.
    pub fn replay(&self, started_at: u64) -> Result<Dialogue, ContractViolation> {
        let mut dialogue = Dialogue::new(started_at);
        for (t, kind) in self.transitions() {
            dialogue.advance(t, kind)?;
        }
        Ok(dialogue)
    }

    pub fn stats(&self) -> SessionStats {
        let mut stats = SessionStats {
            units: 1,
            ..Default::default()
        };
        for r in &self.records {
            match r.event {
                TraceEvent::Transition {
                    kind: TransitionKind::SpeakToListen,
                    ..
                } => stats.units += 1,
                TraceEvent::DecisionOutcome { .. } => stats.decisions += 1,
                TraceEvent::PlaybackCancel { .. } => stats.cancellations += 1,
                _ => {}
            }
        }
        stats
    }
}
