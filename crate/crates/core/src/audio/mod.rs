//! Audio acquisition: frames, endpointing, speaker gating, segment assembly.

mod frame;
pub mod pcm;
mod segment;
mod sv;
mod vad;

pub use frame::{rms_dbfs, AudioFrame, Source, FRAME_BYTES, FRAME_MS, FRAME_SAMPLES, SAMPLE_RATE, SILENCE_FLOOR_DBFS};
pub use segment::{assemble_segment, AssemblyWarning, FrameRing, SegmentAssembler, SpeechSegment};
pub use sv::{similarity, sv_gate, GateWarning, SpeakerEmbedder, SpeakerProfile, ToneEmbedder};
pub use vad::{EnergyVad, VadConfig, VadEvent, VadKind, VoiceActivityDetector};
