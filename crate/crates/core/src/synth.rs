//! Speech generation and playback control.
//!
//! A reply is synthesized into a [`SynthesisHandle`] plus PCM, then played on
//! the session clock one 20 ms agent frame at a time starting
//! `first_chunk_latency_ms` after playback begins. Cancelling freezes the
//! session: no frame timestamped after the cancel time is ever emitted.

use std::sync::mpsc::Receiver;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::pcm::tone_sample;
use crate::audio::{AudioFrame, Source, FRAME_MS, FRAME_SAMPLES, SAMPLE_RATE};
use crate::backend::Reply;
use crate::error::{BackendError, ContractViolation};

const SAMPLES_PER_MS: u64 = SAMPLE_RATE as u64 / 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisHandle {
    pub utterance_id: u64,
    pub text: String,
    pub total_duration_ms: u64,
    pub first_chunk_latency_ms: u64,
    pub chunk_ms: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error(transparent)]
    Contract(#[from] ContractViolation),
    #[error("synthesis failed: {0}")]
    Backend(#[from] BackendError),
}

/// Produces PCM16 16 kHz mono for a reply. The reply's latency is the time
/// until the first chunk is playable.
pub trait TtsBackend: Send {
    fn synthesize(&mut self, text: &str) -> Reply<Vec<i16>>;
}

#[derive(Debug, Clone)]
pub struct SynthesizedUtterance {
    pub handle: SynthesisHandle,
    pub audio: Arc<[i16]>,
}

impl SynthesizedUtterance {
    fn new(utterance_id: u64, text: &str, audio: Vec<i16>, first_chunk_latency_ms: u64) -> Self {
        let total_duration_ms = (audio.len() as u64).div_ceil(SAMPLES_PER_MS);
        Self {
            handle: SynthesisHandle {
                utterance_id,
                text: text.to_string(),
                total_duration_ms,
                first_chunk_latency_ms,
                chunk_ms: FRAME_MS,
            },
            audio: audio.into(),
        }
    }
}

pub enum Synthesis {
    Ready(SynthesizedUtterance),
    /// Remote synthesis in progress; finish with [`PendingSynthesis::finish`].
    Pending(PendingSynthesis),
}

pub struct PendingSynthesis {
    pub utterance_id: u64,
    pub text: String,
    rx: Receiver<Result<Vec<i16>, BackendError>>,
}

impl PendingSynthesis {
    pub fn try_finish(
        &self,
        first_chunk_latency_ms: u64,
    ) -> Option<Result<SynthesizedUtterance, SynthError>> {
        use std::sync::mpsc::TryRecvError;
        match self.rx.try_recv() {
            Ok(result) => Some(self.wrap(result, first_chunk_latency_ms)),
            Err(TryRecvError::Empty) => None,
            Err(TryRecvError::Disconnected) => Some(Err(SynthError::Backend(
                BackendError::Unavailable("synthesis worker vanished".into()),
            ))),
        }
    }

    pub fn finish(self, first_chunk_latency_ms: u64) -> Result<SynthesizedUtterance, SynthError> {
        let result = self
            .rx
            .recv()
            .unwrap_or_else(|_| Err(BackendError::Unavailable("synthesis worker vanished".into())));
        self.wrap(result, first_chunk_latency_ms)
    }

    fn wrap(
        &self,
        result: Result<Vec<i16>, BackendError>,
        first_chunk_latency_ms: u64,
    ) -> Result<SynthesizedUtterance, SynthError> {
        let audio = result?;
        if audio.is_empty() {
            return Err(BackendError::Malformed("empty audio".into()).into());
        }
        Ok(SynthesizedUtterance::new(
            self.utterance_id,
            &self.text,
            audio,
            first_chunk_latency_ms,
        ))
    }
}

pub fn synthesize(
    backend: &mut dyn TtsBackend,
    utterance_id: u64,
    text: &str,
) -> Result<Synthesis, SynthError> {
    if text.trim().is_empty() {
        return Err(ContractViolation::EmptyText.into());
    }
    match backend.synthesize(text) {
        Reply::Ready { result, latency_ms } => {
            let audio = result?;
            if audio.is_empty() {
                return Err(BackendError::Malformed("empty audio".into()).into());
            }
            Ok(Synthesis::Ready(SynthesizedUtterance::new(
                utterance_id,
                text,
                audio,
                latency_ms,
            )))
        }
        Reply::Deferred(rx) => Ok(Synthesis::Pending(PendingSynthesis {
            utterance_id,
            text: text.to_string(),
            rx,
        })),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockTtsConfig {
    pub ms_per_char: u64,
    pub first_chunk_latency_ms: u64,
    pub tone_hz: f64,
}

impl Default for MockTtsConfig {
    fn default() -> Self {
        Self {
            ms_per_char: 50,
            first_chunk_latency_ms: 150,
            tone_hz: 220.0,
        }
    }
}

/// Timing-only synthesizer: a 220 Hz tone lasting `ms_per_char` per character.
#[derive(Debug, Clone, Default)]
pub struct MockTts {
    pub config: MockTtsConfig,
    pub fail: bool,
}

impl MockTts {
    pub fn new(config: MockTtsConfig) -> Self {
        Self { config, fail: false }
    }

    pub fn duration_ms(&self, text: &str) -> u64 {
        self.config.ms_per_char * text.chars().count() as u64
    }
}

impl TtsBackend for MockTts {
    fn synthesize(&mut self, text: &str) -> Reply<Vec<i16>> {
        if self.fail {
            return Reply::ready(Err(BackendError::Unavailable("mock TTS disabled".into())), 0);
        }
        let n = self.duration_ms(text) * SAMPLES_PER_MS;
        let audio = (0..n).map(|i| tone_sample(self.config.tone_hz, 0.3, i)).collect();
        Reply::ready(Ok(audio), self.config.first_chunk_latency_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaybackStatus {
    Playing,
    Completed,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaybackSession {
    pub utterance_id: u64,
    pub started_at: u64,
    pub first_chunk_latency_ms: u64,
    pub total_duration_ms: u64,
    pub emitted_ms: u64,
    pub status: PlaybackStatus,
    pub cancelled_at: Option<u64>,
}

impl PlaybackSession {
    pub fn first_frame_at(&self) -> u64 {
        self.started_at + self.first_chunk_latency_ms
    }

    pub fn ends_at(&self) -> u64 {
        self.first_frame_at() + self.total_duration_ms
    }

    pub fn frame_count(&self) -> u64 {
        self.total_duration_ms.div_ceil(FRAME_MS)
    }

    pub fn frame_time(&self, index: u64) -> u64 {
        self.first_frame_at() + index * FRAME_MS
    }

    /// Milliseconds of audio played out by `now`; frozen once cancelled.
    pub fn progress(&self, now: u64) -> u64 {
        match self.status {
            PlaybackStatus::Cancelled => self.emitted_ms,
            _ => now
                .saturating_sub(self.first_frame_at())
                .min(self.total_duration_ms),
        }
    }

    /// Stops a playing session. Any other status is left untouched.
    pub fn cancel(&mut self, now: u64) -> bool {
        if self.status != PlaybackStatus::Playing {
            return false;
        }
        self.emitted_ms = self.progress(now);
        self.status = PlaybackStatus::Cancelled;
        self.cancelled_at = Some(now);
        true
    }

    pub fn complete(&mut self, now: u64) -> bool {
        if self.status != PlaybackStatus::Playing {
            return false;
        }
        self.emitted_ms = self.progress(now);
        self.status = PlaybackStatus::Completed;
        true
    }

    /// Whether frame `index` may still be emitted at time `now`.
    pub fn may_emit(&self, index: u64, now: u64) -> bool {
        self.status == PlaybackStatus::Playing
            && index < self.frame_count()
            && self.frame_time(index) <= now
    }
}

/// Owns the single playback slot of a dialogue session.
#[derive(Debug, Default)]
pub struct Player {
    current: Option<(PlaybackSession, Arc<[i16]>)>,
}

impl Player {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn start_playback(
        &mut self,
        utterance: &SynthesizedUtterance,
        now: u64,
    ) -> Result<&PlaybackSession, ContractViolation> {
        if let Some((s, _)) = &self.current {
            if s.status == PlaybackStatus::Playing {
                return Err(ContractViolation::PlaybackBusy(s.utterance_id));
            }
        }
        let session = PlaybackSession {
            utterance_id: utterance.handle.utterance_id,
            started_at: now,
            first_chunk_latency_ms: utterance.handle.first_chunk_latency_ms,
            total_duration_ms: utterance.handle.total_duration_ms,
            emitted_ms: 0,
            status: PlaybackStatus::Playing,
            cancelled_at: None,
        };
        self.current = Some((session, utterance.audio.clone()));
        Ok(&self.current.as_ref().expect("just set").0)
    }

    pub fn session(&self) -> Option<&PlaybackSession> {
        self.current.as_ref().map(|(s, _)| s)
    }

    pub fn session_mut(&mut self) -> Option<&mut PlaybackSession> {
        self.current.as_mut().map(|(s, _)| s)
    }

    pub fn is_playing(&self) -> bool {
        self.session().is_some_and(|s| s.status == PlaybackStatus::Playing)
    }

    pub fn cancel(&mut self, now: u64) -> Option<PlaybackSession> {
        let session = self.session_mut()?;
        session.cancel(now).then(|| session.clone())
    }

    /// Agent frame `index` of the current utterance, if it may be emitted at `now`.
    pub fn frame(&self, utterance_id: u64, index: u64, now: u64) -> Option<AudioFrame> {
        let (session, audio) = self.current.as_ref()?;
        if session.utterance_id != utterance_id || !session.may_emit(index, now) {
            return None;
        }
        let start = (index as usize) * FRAME_SAMPLES;
        let mut samples = [0i16; FRAME_SAMPLES];
        if start < audio.len() {
            let end = (start + FRAME_SAMPLES).min(audio.len());
            samples[..end - start].copy_from_slice(&audio[start..end]);
        }
        Some(AudioFrame::new(
            samples,
            session.frame_time(index),
            Source::Agent,
        ))
    }
}
