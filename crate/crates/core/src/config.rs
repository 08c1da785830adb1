//! Configuration file schema.
//!
//! One TOML file configures every component. All keys are optional; missing
//! keys take the defaults below. See `config/default.toml` at the repository
//! root for the fully spelled-out file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{VadConfig, FRAME_MS};
use crate::decision::OracleConfig;
use crate::synth::MockTtsConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("applying overrides: {0}")]
    Override(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub audio: AudioConfig,
    pub context: ContextConfig,
    pub decision: DecisionConfig,
    pub tts: TtsConfig,
    pub orchestrator: OrchestratorConfig,
    pub harness: HarnessConfig,
    pub gateway: GatewayConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub sample_rate: u32,
    pub threshold_dbfs: f64,
    pub min_speech_ms: u64,
    pub min_silence_ms: u64,
    pub pre_roll_ms: u64,
    /// History retained for segment assembly.
    pub ring_ms: u64,
    pub sv: SvConfig,
}

impl Default for AudioConfig {
    fn default() -> Self {
        let vad = VadConfig::default();
        Self {
            sample_rate: 16_000,
            threshold_dbfs: vad.threshold_dbfs,
            min_speech_ms: vad.min_speech_ms,
            min_silence_ms: vad.min_silence_ms,
            pre_roll_ms: 200,
            ring_ms: 30_000,
            sv: SvConfig::default(),
        }
    }
}

impl AudioConfig {
    pub fn vad(&self) -> VadConfig {
        VadConfig {
            threshold_dbfs: self.threshold_dbfs,
            min_speech_ms: self.min_speech_ms,
            min_silence_ms: self.min_silence_ms,
        }
    }
}

/// Speaker verification in simulation uses the reference tone embedder with a
/// profile built from `target_hz`. Live sessions take their profile from the
/// client handshake instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvConfig {
    pub enabled: bool,
    pub threshold: f32,
    pub target_hz: f64,
}

impl Default for SvConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: 0.7,
            target_hz: 440.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsrBackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextConfig {
    pub backend: AsrBackendKind,
    /// Mock ASR processing latency.
    pub latency_ms: u64,
    pub max_segments: usize,
    pub remote_url: Option<String>,
    pub timeout_ms: u64,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            backend: AsrBackendKind::Mock,
            latency_ms: 300,
            max_segments: 10,
            remote_url: None,
            timeout_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionBackendKind {
    Scripted,
    Heuristic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionConfig {
    pub backend: DecisionBackendKind,
    pub timeout_ms: u64,
    /// Trailing user audio sent with each request.
    pub window_ms: u64,
    pub latency_ms: u64,
    pub latency_jitter_ms: u64,
    pub error_rate: f64,
    pub adversarial: bool,
    pub remote_url: Option<String>,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        let oracle = OracleConfig::default();
        Self {
            backend: DecisionBackendKind::Scripted,
            timeout_ms: 1500,
            window_ms: 8000,
            latency_ms: oracle.latency_ms,
            latency_jitter_ms: oracle.latency_jitter_ms,
            error_rate: oracle.error_rate,
            adversarial: oracle.adversarial,
            remote_url: None,
        }
    }
}

impl DecisionConfig {
    pub fn oracle(&self) -> OracleConfig {
        OracleConfig {
            latency_ms: self.latency_ms,
            latency_jitter_ms: self.latency_jitter_ms,
            error_rate: self.error_rate,
            adversarial: self.adversarial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtsBackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtsConfig {
    pub backend: TtsBackendKind,
    pub ms_per_char: u64,
    pub first_chunk_latency_ms: u64,
    pub remote_url: Option<String>,
    pub timeout_ms: u64,
}

impl Default for TtsConfig {
    fn default() -> Self {
        let mock = MockTtsConfig::default();
        Self {
            backend: TtsBackendKind::Mock,
            ms_per_char: mock.ms_per_char,
            first_chunk_latency_ms: mock.first_chunk_latency_ms,
            remote_url: None,
            timeout_ms: 5000,
        }
    }
}

impl TtsConfig {
    pub fn mock(&self) -> MockTtsConfig {
        MockTtsConfig {
            ms_per_char: self.ms_per_char,
            first_chunk_latency_ms: self.first_chunk_latency_ms,
            ..MockTtsConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrchestratorConfig {
    /// Sustained user speech during playback before a Speak-state decision.
    pub min_overlap_ms: u64,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self { min_overlap_ms: 150 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    /// Interruption credit window, from the interrupting speech onset.
    pub t_stop_ms: u64,
    pub target_hz: f64,
    pub nontarget_hz: f64,
    pub amplitude: f64,
    /// Silence appended after the last scripted event.
    pub tail_ms: u64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            t_stop_ms: 1000,
            target_hz: 440.0,
            nontarget_hz: 880.0,
            amplitude: 0.5,
            tail_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub port: u16,
    pub idle_timeout_ms: u64,
    pub inbound_buffer_ms: u64,
    /// Agent frames allowed to queue per client before the oldest are dropped.
    pub outbound_audio_frames: usize,
    pub static_dir: Option<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            idle_timeout_ms: 120_000,
            inbound_buffer_ms: 5000,
            outbound_audio_frames: 50,
            static_dir: None,
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Deep-merges a JSON object of overrides onto this config.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<Self, ConfigError> {
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, overrides);
        let config: Config = serde_json::from_value(base)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.audio.sample_rate != 16_000 {
            return invalid("audio.sample_rate must be 16000");
        }
        if self.audio.min_speech_ms < FRAME_MS || self.audio.min_silence_ms < FRAME_MS {
            return invalid("audio.min_speech_ms and audio.min_silence_ms must be at least one frame");
        }
        if self.audio.ring_ms < self.audio.pre_roll_ms + FRAME_MS {
            return invalid("audio.ring_ms must exceed audio.pre_roll_ms");
        }
        if !(0.0..=1.0).contains(&self.decision.error_rate) {
            return invalid("decision.error_rate must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.audio.sv.threshold) {
            return invalid("audio.sv.threshold must lie in [0, 1]");
        }
        if self.tts.ms_per_char == 0 {
            return invalid("tts.ms_per_char must be positive");
        }
        Ok(())
    }
}

fn merge(base: &mut serde_json::Value, over: &serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k.clone()).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, o) => *b = o.clone(),
    }
}
