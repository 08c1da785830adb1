use thiserror::Error;

use crate::dialogue::{DialogueState, TransitionKind, UtteranceLabel};

/// A caller broke a precondition of one of the engine's operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContractViolation {
    #[error("label {label} is not valid in the {state} state")]
    LabelInvalidForState {
        state: DialogueState,
        label: UtteranceLabel,
    },
    #[error("transition {transition} is illegal in the {state} state")]
    IllegalTransition {
        state: DialogueState,
        transition: TransitionKind,
    },
    #[error("timestamp {now} precedes previous timestamp {last}")]
    TimeWentBackwards { last: u64, now: u64 },
    #[error("audio frame has {0} samples, expected 320")]
    FrameLength(usize),
    #[error("expected a user frame")]
    NotUserFrame,
    #[error("user frame at {got} ms, expected {expected} ms")]
    FrameGap { expected: u64, got: u64 },
    #[error("a playback session is already playing (utterance {0})")]
    PlaybackBusy(u64),
    #[error("cannot synthesize empty text")]
    EmptyText,
    #[error("embedding dimension {got} does not match profile dimension {expected}")]
    EmbeddingDimension { expected: usize, got: usize },
    #[error("segment {0} was rejected by speaker verification")]
    RejectedSegment(u64),
    #[error("speech events out of order: {0}")]
    VadOrder(&'static str),
}

/// Failure reported by a pluggable backend (ASR, decision, TTS, embedder).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("no scripted label for segment")]
    MissingLabel,
    #[error("injected failure")]
    Injected,
}
