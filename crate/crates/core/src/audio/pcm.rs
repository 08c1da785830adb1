//! Raw audio file ingestion.
//!
//! Two inputs are accepted: headerless PCM16LE mono 16 kHz, and RIFF/WAVE
//! files carrying exactly that format (format tag 1, one channel, 16000 Hz,
//! 16 bits per sample). Other WAV variants are refused rather than converted.

use std::f64::consts::PI;

use thiserror::Error;

use super::frame::{AudioFrame, Source, FRAME_MS, FRAME_SAMPLES, SAMPLE_RATE};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PcmError {
    #[error("odd byte count {0} in PCM16 payload")]
    OddLength(usize),
    #[error("not a RIFF/WAVE file")]
    NotWav,
    #[error("unsupported WAV format: {0}")]
    Unsupported(String),
    #[error("WAV file has no data chunk")]
    MissingData,
}

pub fn read_pcm16le(bytes: &[u8]) -> Result<Vec<i16>, PcmError> {
    if !bytes.len().is_multiple_of(2) {
        return Err(PcmError::OddLength(bytes.len()));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect())
}

pub fn read_wav(bytes: &[u8]) -> Result<Vec<i16>, PcmError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(PcmError::NotWav);
    }
    let mut pos = 12;
    let mut format_ok = false;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(len).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(PcmError::Unsupported("short fmt chunk".into()));
                }
                let tag = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes([body[14], body[15]]);
                if tag != 1 || channels != 1 || rate != SAMPLE_RATE || bits != 16 {
                    return Err(PcmError::Unsupported(format!(
                        "tag {tag}, {channels} ch, {rate} Hz, {bits} bit"
                    )));
                }
                format_ok = true;
            }
            b"data" => {
                if !format_ok {
                    return Err(PcmError::Unsupported("data before fmt".into()));
                }
                let even = body.len() - body.len() % 2;
                return read_pcm16le(&body[..even]);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_start + len + (len % 2);
    }
    Err(PcmError::MissingData)
}

/// Splits samples into consecutive user frames starting at `t0`, zero
/// padding the tail.
pub fn frames_from_samples(samples: &[i16], t0: u64) -> Vec<AudioFrame> {
    samples
        .chunks(FRAME_SAMPLES)
        .enumerate()
        .map(|(i, chunk)| {
            let mut buf = [0i16; FRAME_SAMPLES];
            buf[..chunk.len()].copy_from_slice(chunk);
            AudioFrame::new(buf, t0 + i as u64 * FRAME_MS, Source::User)
        })
        .collect()
}

/// Writes a minimal 16 kHz mono PCM16 WAV file image.
pub fn encode_wav(samples: &[i16]) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Sample `n` (absolute, at 16 kHz) of a sine tone with amplitude in `[0, 1]`.
pub fn tone_sample(hz: f64, amplitude: f64, n: u64) -> i16 {
    let v = amplitude * 32767.0 * (2.0 * PI * hz * n as f64 / f64::from(SAMPLE_RATE)).sin();
    v.round().clamp(-32768.0, 32767.0) as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip() {
        let samples: Vec<i16> = (0..1000).map(|n| tone_sample(440.0, 0.5, n)).collect();
        assert_eq!(read_wav(&encode_wav(&samples)).unwrap(), samples);
    }

    #[test]
    fn wav_rejects_other_formats() {
        let mut wav = encode_wav(&[0; 10]);
        wav[24..28].copy_from_slice(&44100u32.to_le_bytes());
        assert!(matches!(read_wav(&wav), Err(PcmError::Unsupported(_))));
        assert_eq!(read_wav(b"not a wav file at all"), Err(PcmError::NotWav));
    }

    #[test]
    fn raw_pcm_frames() {
        assert_eq!(read_pcm16le(&[1, 0, 2]), Err(PcmError::OddLength(3)));
        let samples = read_pcm16le(&[1, 0, 0xff, 0xff]).unwrap();
        assert_eq!(samples, vec![1, -1]);
        let frames = frames_from_samples(&vec![5i16; 700], 1000);
        assert_eq!(frames.len(), 3);
        assert_eq!(frames[2].t_start, 1040);
        assert_eq!(frames[2].samples()[59], 5);
        assert_eq!(frames[2].samples()[60], 0);
    }
}
