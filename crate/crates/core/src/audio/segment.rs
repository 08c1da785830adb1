use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::frame::{AudioFrame, FRAME_MS};
use super::vad::{VadEvent, VadKind};
use crate::error::ContractViolation;

/// One user utterance as delimited by the VAD, plus pre-roll.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechSegment {
    pub segment_id: u64,
    pub frames: Vec<AudioFrame>,
    pub t_start: u64,
    pub t_end: u64,
    pub sv_score: Option<f64>,
    pub accepted: bool,
}

impl SpeechSegment {
    pub fn duration_ms(&self) -> u64 {
        self.t_end - self.t_start
    }

    pub fn interval(&self) -> (u64, u64) {
        (self.t_start, self.t_end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyWarning {
    pub segment_id: u64,
    pub requested_start: u64,
    pub actual_start: u64,
}

/// Bounded history of user frames.
#[derive(Debug, Clone)]
pub struct FrameRing {
    frames: VecDeque<AudioFrame>,
    capacity: usize,
    session_start: Option<u64>,
}

impl FrameRing {
    pub fn with_capacity_ms(ms: u64) -> Self {
        let capacity = (ms / FRAME_MS).max(1) as usize;
        Self {
            frames: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
            session_start: None,
        }
    }

    pub fn push(&mut self, frame: AudioFrame) {
        self.session_start.get_or_insert(frame.t_start);
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn oldest_t(&self) -> Option<u64> {
        self.frames.front().map(|f| f.t_start)
    }

    pub fn session_start(&self) -> Option<u64> {
        self.session_start
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames whose start lies in `[from, to)`.
    pub fn range(&self, from: u64, to: u64) -> Vec<AudioFrame> {
        self.frames
            .iter()
            .filter(|f| f.t_start >= from && f.t_start < to)
            .cloned()
            .collect()
    }
}

/// Cuts `[start.t − pre_roll_ms, end_t)` out of the ring.
///
/// The start is clamped to the session start; if the ring has already
/// evicted the requested history the segment begins at the oldest retained
/// frame and a warning is returned.
pub fn assemble_segment(
    ring: &FrameRing,
    segment_id: u64,
    start: VadEvent,
    end_t: u64,
    pre_roll_ms: u64,
) -> Result<(SpeechSegment, Option<AssemblyWarning>), ContractViolation> {
    if start.kind != VadKind::SpeechStart {
        return Err(ContractViolation::VadOrder("segment must open on a speech start"));
    }
    if end_t <= start.t {
        return Err(ContractViolation::VadOrder("speech end precedes speech start"));
    }
    let session_start = ring.session_start().unwrap_or(0);
    let requested = start.t.saturating_sub(pre_roll_ms).max(session_start);
    let oldest = ring.oldest_t().unwrap_or(requested);
    let (t_start, warning) = if requested < oldest {
        (
            oldest,
            Some(AssemblyWarning {
                segment_id,
                requested_start: requested,
                actual_start: oldest,
            }),
        )
    } else {
        (requested, None)
    };
    let frames = ring.range(t_start, end_t);
    let t_end = t_start + frames.len() as u64 * FRAME_MS;
    Ok((
        SpeechSegment {
            segment_id,
            frames,
            t_start,
            t_end,
            sv_score: None,
            accepted: false,
        },
        warning,
    ))
}

/// Tracks the open utterance between VAD events and hands out gapless ids.
#[derive(Debug, Clone, Default)]
pub struct SegmentAssembler {
    next_id: u64,
    open: Option<(u64, VadEvent)>,
    pre_roll_ms: u64,
}

impl SegmentAssembler {
    pub fn new(pre_roll_ms: u64) -> Self {
        Self {
            next_id: 0,
            open: None,
            pre_roll_ms,
        }
    }

    /// Opens an utterance and returns its segment id.
    pub fn begin(&mut self, start: VadEvent) -> Result<u64, ContractViolation> {
        if start.kind != VadKind::SpeechStart || self.open.is_some() {
            return Err(ContractViolation::VadOrder("speech start while an utterance is open"));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.open = Some((id, start));
        Ok(id)
    }

    pub fn open(&self) -> Option<(u64, VadEvent)> {
        self.open
    }

    /// View of the open utterance up to `now`, without closing it.
    pub fn peek(
        &self,
        ring: &FrameRing,
        now: u64,
    ) -> Option<Result<(SpeechSegment, Option<AssemblyWarning>), ContractViolation>> {
        let (id, start) = self.open?;
        Some(assemble_segment(ring, id, start, now, self.pre_roll_ms))
    }

    pub fn finish(
        &mut self,
        ring: &FrameRing,
        end: VadEvent,
    ) -> Result<(SpeechSegment, Option<AssemblyWarning>), ContractViolation> {
        if end.kind != VadKind::SpeechEnd {
            return Err(ContractViolation::VadOrder("utterance must close on a speech end"));
        }
        let (id, start) = self
            .open
            .take()
            .ok_or(ContractViolation::VadOrder("speech end without speech start"))?;
        assemble_segment(ring, id, start, end.t, self.pre_roll_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::frame::Source;

    fn ring_until(ms: u64, cap_ms: u64) -> FrameRing {
        let mut ring = FrameRing::with_capacity_ms(cap_ms);
        for i in 0..ms / FRAME_MS {
            ring.push(AudioFrame::silence(i * FRAME_MS, Source::User));
        }
        ring
    }

    fn ev(kind: VadKind, t: u64) -> VadEvent {
        VadEvent { kind, t }
    }

    #[test]
    fn pre_roll_arithmetic() {
        let ring = ring_until(3000, 30_000);
        let (seg, warn) =
            assemble_segment(&ring, 0, ev(VadKind::SpeechStart, 1000), 2000, 200).unwrap();
        assert_eq!((seg.t_start, seg.t_end), (800, 2000));
        assert_eq!(seg.frames.len(), 60);
        assert!(warn.is_none());
    }

    #[test]
    fn clamps_to_session_start() {
        let ring = ring_until(1000, 30_000);
        let (seg, warn) =
            assemble_segment(&ring, 0, ev(VadKind::SpeechStart, 100), 600, 200).unwrap();
        assert_eq!(seg.t_start, 0);
        assert_eq!(seg.duration_ms(), 20 * seg.frames.len() as u64);
        assert!(warn.is_none());
    }

    #[test]
    fn underrun_starts_at_oldest_frame() {
        let ring = ring_until(5000, 1000);
        let (seg, warn) =
            assemble_segment(&ring, 3, ev(VadKind::SpeechStart, 3000), 4800, 200).unwrap();
        assert_eq!(seg.t_start, 4000);
        assert_eq!(
            warn,
            Some(AssemblyWarning { segment_id: 3, requested_start: 2800, actual_start: 4000 })
        );
    }

    #[test]
    fn ids_are_gapless() {
        let ring = ring_until(5000, 30_000);
        let mut asm = SegmentAssembler::new(200);
        assert_eq!(asm.begin(ev(VadKind::SpeechStart, 1000)).unwrap(), 0);
        assert!(asm.begin(ev(VadKind::SpeechStart, 1100)).is_err());
        let (a, _) = asm.finish(&ring, ev(VadKind::SpeechEnd, 1500)).unwrap();
        assert_eq!(asm.begin(ev(VadKind::SpeechStart, 2500)).unwrap(), 1);
        let (b, _) = asm.finish(&ring, ev(VadKind::SpeechEnd, 3000)).unwrap();
        assert_eq!((a.segment_id, b.segment_id), (0, 1));
        assert!(asm.finish(&ring, ev(VadKind::SpeechEnd, 3500)).is_err());
    }
}
