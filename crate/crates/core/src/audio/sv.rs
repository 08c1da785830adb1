//! Optional speaker-verification gate.

use serde::{Deserialize, Serialize};

use super::frame::{rms_dbfs, SAMPLE_RATE};
use super::segment::SpeechSegment;
use crate::error::{BackendError, ContractViolation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    embedding: Vec<f32>,
    pub threshold: f32,
}

impl SpeakerProfile {
    /// Normalizes `embedding` to unit length.
    pub fn new(embedding: Vec<f32>, threshold: f32) -> Option<Self> {
        let norm = l2_norm(&embedding);
        if embedding.is_empty() || !norm.is_finite() || norm == 0.0 {
            return None;
        }
        Some(Self {
            embedding: embedding.iter().map(|v| v / norm).collect(),
            threshold: threshold.clamp(0.0, 1.0),
        })
    }

    pub fn embedding(&self) -> &[f32] {
        &self.embedding
    }
}

fn l2_norm(v: &[f32]) -> f32 {
    v.iter().map(|x| x * x).sum::<f32>().sqrt()
}

pub trait SpeakerEmbedder: Send {
    fn embed(&mut self, segment: &SpeechSegment) -> Result<Vec<f32>, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateWarning {
    pub segment_id: u64,
    pub detail: String,
}

/// Cosine similarity clamped into the unit interval.
pub fn similarity(a: &[f32], b: &[f32]) -> Result<f64, ContractViolation> {
    if a.len() != b.len() {
        return Err(ContractViolation::EmbeddingDimension {
            expected: b.len(),
            got: a.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na = f64::from(l2_norm(a));
    let nb = f64::from(l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Scores `segment` against `profile` and sets `accepted`.
///
/// Without a profile every segment is accepted. An embedder failure accepts
/// the segment with no score and returns a warning.
pub fn sv_gate(
    mut segment: SpeechSegment,
    profile: Option<&SpeakerProfile>,
    embedder: &mut dyn SpeakerEmbedder,
) -> (SpeechSegment, Option<GateWarning>) {
    let Some(profile) = profile else {
        segment.sv_score = None;
        segment.accepted = true;
        return (segment, None);
    };
    let scored = embedder
        .embed(&segment)
        .map_err(|e| e.to_string())
        .and_then(|emb| similarity(&emb, profile.embedding()).map_err(|e| e.to_string()));
    match scored {
        Ok(score) => {
            segment.sv_score = Some(score);
            segment.accepted = score >= f64::from(profile.threshold);
            (segment, None)
        }
        Err(detail) => {
            let warning = GateWarning {
                segment_id: segment.segment_id,
                detail,
            };
            segment.sv_score = None;
            segment.accepted = true;
            (segment, Some(warning))
        }
    }
}

const TONE_BINS: usize = 16;
const TONE_BIN_HZ: f64 = 100.0;
const TONE_SIGMA_HZ: f64 = 60.0;

/// Reference embedder for synthetic audio: estimates pitch from zero
/// crossings over the voiced frames and spreads it over a soft 16-bin
/// histogram (0–1600 Hz). Tones an octave apart come out nearly orthogonal.
#[derive(Debug, Clone)]
pub struct ToneEmbedder {
    pub voiced_dbfs: f64,
}

impl Default for ToneEmbedder {
    fn default() -> Self {
        Self { voiced_dbfs: -35.0 }
    }
}

impl ToneEmbedder {
    pub fn embedding_for_hz(hz: f64) -> Vec<f32> {
        let raw: Vec<f64> = (0..TONE_BINS)
            .map(|i| {
                let center = TONE_BIN_HZ * (i as f64 + 0.5);
                (-((hz - center) / TONE_SIGMA_HZ).powi(2) / 2.0).exp()
            })
            .collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        raw.iter().map(|v| (v / norm) as f32).collect()
    }

    pub fn profile_for_hz(hz: f64, threshold: f32) -> SpeakerProfile {
        SpeakerProfile::new(Self::embedding_for_hz(hz), threshold).expect("nonzero embedding")
    }

    pub fn estimate_hz(&self, segment: &SpeechSegment) -> Option<f64> {
        let mut crossings = 0u64;
        let mut samples = 0u64;
        for frame in segment.frames.iter().filter(|f| rms_dbfs(f) > self.voiced_dbfs) {
            let s = frame.samples();
            crossings += s
                .windows(2)
                .filter(|w| (w[0] >= 0) != (w[1] >= 0))
                .count() as u64;
            samples += s.len() as u64;
        }
        if samples == 0 {
            return None;
        }
        Some(crossings as f64 * f64::from(SAMPLE_RATE) / (2.0 * samples as f64))
    }
}

impl SpeakerEmbedder for ToneEmbedder {
    fn embed(&mut self, segment: &SpeechSegment) -> Result<Vec<f32>, BackendError> {
        let hz = self
            .estimate_hz(segment)
            .ok_or_else(|| BackendError::Unavailable("no voiced audio to embed".into()))?;
        Ok(Self::embedding_for_hz(hz))
    }
}
