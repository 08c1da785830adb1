use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ContractViolation;

pub const SAMPLE_RATE: u32 = 16_000;
pub const FRAME_MS: u64 = 20;
pub const FRAME_SAMPLES: usize = 320;
pub const FRAME_BYTES: usize = FRAME_SAMPLES * 2;

/// Level reported for an all-zero frame.
pub const SILENCE_FLOOR_DBFS: f64 = -120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    User,
    Agent,
}

/// 20 ms of 16 kHz mono PCM16. Sample storage is shared, so clones are cheap.
#[derive(Clone, PartialEq, Eq)]
pub struct AudioFrame {
    samples: Arc<[i16; FRAME_SAMPLES]>,
    pub t_start: u64,
    pub source: Source,
}

impl fmt::Debug for AudioFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AudioFrame")
            .field("t_start", &self.t_start)
            .field("source", &self.source)
            .finish_non_exhaustive()
    }
}

impl AudioFrame {
    pub fn new(samples: [i16; FRAME_SAMPLES], t_start: u64, source: Source) -> Self {
        Self {
            samples: Arc::new(samples),
            t_start,
            source,
        }
    }

    pub fn from_slice(samples: &[i16], t_start: u64, source: Source) -> Result<Self, ContractViolation> {
        let arr: [i16; FRAME_SAMPLES] = samples
            .try_into()
            .map_err(|_| ContractViolation::FrameLength(samples.len()))?;
        Ok(Self::new(arr, t_start, source))
    }

    /// Decodes one wire frame (640 bytes of PCM16LE).
    pub fn from_le_bytes(bytes: &[u8], t_start: u64, source: Source) -> Result<Self, ContractViolation> {
        if bytes.len() != FRAME_BYTES {
            return Err(ContractViolation::FrameLength(bytes.len() / 2));
        }
        let mut samples = [0i16; FRAME_SAMPLES];
        for (s, chunk) in samples.iter_mut().zip(bytes.chunks_exact(2)) {
            *s = i16::from_le_bytes([chunk[0], chunk[1]]);
        }
        Ok(Self::new(samples, t_start, source))
    }

    pub fn silence(t_start: u64, source: Source) -> Self {
        Self::new([0; FRAME_SAMPLES], t_start, source)
    }

    pub fn samples(&self) -> &[i16; FRAME_SAMPLES] {
        &self.samples
    }

    pub fn t_end(&self) -> u64 {
        self.t_start + FRAME_MS
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.samples.iter().flat_map(|s| s.to_le_bytes()).collect()
    }
}

/// `20·log10(rms / 32768)` over the frame, floored at [`SILENCE_FLOOR_DBFS`].
pub fn rms_dbfs(frame: &AudioFrame) -> f64 {
    samples_dbfs(frame.samples())
}

fn samples_dbfs(samples: &[i16]) -> f64 {
    if samples.is_empty() {
        return SILENCE_FLOOR_DBFS;
    }
    let sum_sq: f64 = samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
    let rms = (sum_sq / samples.len() as f64).sqrt();
    if rms == 0.0 {
        return SILENCE_FLOOR_DBFS;
    }
    (20.0 * (rms / 32768.0).log10()).max(SILENCE_FLOOR_DBFS)
}
