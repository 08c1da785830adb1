//! Voice-activity endpointing.
//!
//! [`EnergyVad`] is the reference detector: a frame is voiced when its RMS
//! level exceeds a threshold, and speech boundaries are declared with
//! hysteresis on run lengths of voiced and unvoiced frames.

use serde::{Deserialize, Serialize};

use super::frame::{rms_dbfs, AudioFrame, Source, FRAME_MS};
use crate::error::ContractViolation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VadKind {
    SpeechStart,
    SpeechEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VadEvent {
    pub kind: VadKind,
    pub t: u64,
}

/// Anything that turns a user frame stream into alternating start/end events.
///
/// External detectors plug in here; they must keep the alternation contract
/// and timestamp events on the frame timeline.
pub trait VoiceActivityDetector: Send {
    fn update(&mut self, frame: &AudioFrame) -> Result<Option<VadEvent>, ContractViolation>;

    fn in_speech(&self) -> bool;

    /// Closes an open utterance at end of stream.
    fn flush(&mut self, t_end: u64) -> Option<VadEvent>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    pub threshold_dbfs: f64,
    pub min_speech_ms: u64,
    pub min_silence_ms: u64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            threshold_dbfs: -35.0,
            min_speech_ms: 100,
            min_silence_ms: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnergyVad {
    config: VadConfig,
    in_speech: bool,
    run_frames: u64,
    run_start: u64,
}

impl EnergyVad {
    pub fn new(config: VadConfig) -> Self {
        Self {
            config,
            in_speech: false,
            run_frames: 0,
            run_start: 0,
        }
    }

    pub fn config(&self) -> &VadConfig {
        &self.config
    }

    pub fn is_voiced(&self, frame: &AudioFrame) -> bool {
        rms_dbfs(frame) > self.config.threshold_dbfs
    }
}

impl VoiceActivityDetector for EnergyVad {
    fn update(&mut self, frame: &AudioFrame) -> Result<Option<VadEvent>, ContractViolation> {
        if frame.source != Source::User {
            return Err(ContractViolation::NotUserFrame);
        }
        let voiced = self.is_voiced(frame);
        // `run_*` tracks the current run of frames that argue for leaving the
        // present state: voiced frames while silent, unvoiced while speaking.
        let against = voiced != self.in_speech;
        if !against {
            self.run_frames = 0;
            return Ok(None);
        }
        if self.run_frames == 0 {
            self.run_start = frame.t_start;
        }
        self.run_frames += 1;
        let needed = if self.in_speech {
            self.config.min_silence_ms
        } else {
            self.config.min_speech_ms
        };
        if self.run_frames * FRAME_MS < needed {
            return Ok(None);
        }
        self.in_speech = !self.in_speech;
        self.run_frames = 0;
        let kind = if self.in_speech {
            VadKind::SpeechStart
        } else {
            VadKind::SpeechEnd
        };
        Ok(Some(VadEvent {
            kind,
            t: self.run_start,
        }))
    }

    fn in_speech(&self) -> bool {
        self.in_speech
    }

    fn flush(&mut self, t_end: u64) -> Option<VadEvent> {
        if !self.in_speech {
            self.run_frames = 0;
            return None;
        }
        let t = if self.run_frames > 0 { self.run_start } else { t_end };
        self.in_speech = false;
        self.run_frames = 0;
        Some(VadEvent {
            kind: VadKind::SpeechEnd,
            t,
        })
    }
}
