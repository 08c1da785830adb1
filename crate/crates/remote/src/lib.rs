//! HTTP adapters for remote recognizers, decision models and synthesizers.
//!
//! Every call runs on its own worker thread and hands the engine a
//! [`Reply::Deferred`] channel, so a slow endpoint never blocks the session.
//! The blocking client is built lazily on first use because it may not be
//! created from inside an async runtime.
//!
//! Wire contracts:
//!
//! - decision: `POST {state, prompt, audio_b64, sample_rate}` → `{text}`,
//!   where `text` starts with a `DECISION: <label>` line;
//! - ASR: `POST` raw PCM16LE with `?sample_rate=16000` → `{text, confidence}`;
//! - TTS: `POST {text}` → PCM16LE body at 16 kHz.

use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use duplex_core::audio::{SpeechSegment, SAMPLE_RATE};
use duplex_core::config::{ContextConfig, DecisionConfig, TtsConfig};
use duplex_core::context::AsrBackend;
use duplex_core::decision::{parse_backend_reply, BackendDecision, DecisionBackend, DecisionRequest};
use duplex_core::synth::TtsBackend;
use duplex_core::{BackendError, DialogueState, Reply};
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPayload {
    pub state: DialogueState,
    pub prompt: String,
    pub audio_b64: String,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionReply {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrReply {
    pub text: String,
    #[serde(default)]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsPayload {
    pub text: String,
}

/// Shared plumbing: endpoint, timeout and a lazily built client.
#[derive(Debug)]
struct Endpoint {
    url: String,
    timeout_ms: u64,
    client: Option<Client>,
}

impl Endpoint {
    fn new(url: Option<&str>, timeout_ms: u64, what: &str) -> Result<Self, BackendError> {
        let url = url
            .filter(|u| !u.is_empty())
            .ok_or_else(|| BackendError::Unavailable(format!("no remote_url configured for {what}")))?;
        Ok(Self {
            url: url.to_string(),
            timeout_ms,
            client: None,
        })
    }

    fn client(&mut self) -> Result<Client, BackendError> {
        if let Some(c) = &self.client {
            return Ok(c.clone());
        }
        let c = Client::builder()
            .timeout(Duration::from_millis(self.timeout_ms))
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        self.client = Some(c.clone());
        Ok(c)
    }

    /// Runs `call` on a worker thread.
    fn spawn<T, F>(&mut self, call: F) -> Reply<T>
    where
        T: Send + 'static,
        F: FnOnce(Client, String, u64) -> Result<T, BackendError> + Send + 'static,
    {
        let client = match self.client() {
            Ok(c) => c,
            Err(e) => return Reply::ready(Err(e), 0),
        };
        let (tx, rx) = mpsc::channel();
        let url = self.url.clone();
        let timeout_ms = self.timeout_ms;
        thread::spawn(move || {
            let _ = tx.send(call(client, url, timeout_ms));
        });
        Reply::Deferred(rx)
    }
}

fn http_error(e: reqwest::Error, timeout_ms: u64) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout(timeout_ms)
    } else if e.is_decode() {
        BackendError::Malformed(e.to_string())
    } else {
        BackendError::Unavailable(e.to_string())
    }
}

fn pcm_bytes(samples: impl Iterator<Item = i16>) -> Vec<u8> {
    samples.flat_map(i16::to_le_bytes).collect()
}

#[derive(Debug)]
pub struct RemoteDecision {
    endpoint: Endpoint,
}

impl RemoteDecision {
    pub fn new(url: &str, timeout_ms: u64) -> Result<Self, BackendError> {
        Ok(Self {
            endpoint: Endpoint::new(Some(url), timeout_ms, "decision")?,
        })
    }

    pub fn from_config(c: &DecisionConfig) -> Result<Self, BackendError> {
        Ok(Self {
            endpoint: Endpoint::new(c.remote_url.as_deref(), c.timeout_ms, "decision")?,
        })
    }
}

impl DecisionBackend for RemoteDecision {
    fn decide(&mut self, request: &DecisionRequest, prompt: &str) -> Reply<BackendDecision> {
        let audio = pcm_bytes(request.audio.iter().flat_map(|f| f.samples().iter().copied()));
        let payload = DecisionPayload {
            state: request.state,
            prompt: prompt.to_string(),
            audio_b64: base64::engine::general_purpose::STANDARD.encode(audio),
            sample_rate: SAMPLE_RATE,
        };
        self.endpoint.spawn(move |client, url, timeout_ms| {
            let reply: DecisionReply = client
                .post(url)
                .json(&payload)
                .send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.json())
                .map_err(|e| http_error(e, timeout_ms))?;
            let (label, rest) = parse_backend_reply(&reply.text)?;
            Ok(BackendDecision {
                label,
                response_text: (!rest.is_empty()).then_some(rest),
            })
        })
    }
}

#[derive(Debug)]
pub struct RemoteAsr {
    endpoint: Endpoint,
}

impl RemoteAsr {
    pub fn new(url: &str, timeout_ms: u64) -> Result<Self, BackendError> {
        Ok(Self {
            endpoint: Endpoint::new(Some(url), timeout_ms, "ASR")?,
        })
    }

    pub fn from_config(c: &ContextConfig) -> Result<Self, BackendError> {
        Ok(Self {
            endpoint: Endpoint::new(c.remote_url.as_deref(), c.timeout_ms, "ASR")?,
        })
    }
}

impl AsrBackend for RemoteAsr {
    fn transcribe(&mut self, segment: &SpeechSegment) -> Reply<String> {
        let body = pcm_bytes(segment.frames.iter().flat_map(|f| f.samples().iter().copied()));
        self.endpoint.spawn(move |client, url, timeout_ms| {
            let reply: AsrReply = client
                .post(url)
                .query(&[("sample_rate", SAMPLE_RATE)])
                .header("content-type", "application/octet-stream")
                .body(body)
                .send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.json())
                .map_err(|e| http_error(e, timeout_ms))?;
            Ok(reply.text)
        })
    }
}

#[derive(Debug)]
pub struct RemoteTts {
    endpoint: Endpoint,
}

impl RemoteTts {
    pub fn new(url: &str, timeout_ms: u64) -> Result<Self, BackendError> {
        Ok(Self {
            endpoint: Endpoint::new(Some(url), timeout_ms, "TTS")?,
        })
    }

    pub fn from_config(c: &TtsConfig) -> Result<Self, BackendError> {
        Ok(Self {
            endpoint: Endpoint::new(c.remote_url.as_deref(), c.timeout_ms, "TTS")?,
        })
    }
}

impl TtsBackend for RemoteTts {
    fn synthesize(&mut self, text: &str) -> Reply<Vec<i16>> {
        let payload = TtsPayload { text: text.to_string() };
        self.endpoint.spawn(move |client, url, timeout_ms| {
            let bytes = client
                .post(url)
                .json(&payload)
                .send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.bytes())
                .map_err(|e| http_error(e, timeout_ms))?;
            if bytes.len() % 2 != 0 {
                return Err(BackendError::Malformed(format!("odd PCM length {}", bytes.len())));
            }
            Ok(bytes
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect())
        })
    }
}
