//! Asynchronous transcript cache.
//!
//! Accepted segments are sent to an ASR backend as soon as they close. The
//! resulting text is kept here and only handed to decision cycles that start
//! after the one during which the segment was submitted.

use std::collections::BTreeMap;
use std::sync::mpsc::TryRecvError;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::audio::SpeechSegment;
use crate::backend::Reply;
use crate::error::{BackendError, ContractViolation};
use crate::script::ScriptTable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub segment_id: u64,
    pub text: String,
    pub submitted_cycle: u64,
    pub completed_at: u64,
    pub visible_from_cycle: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsrStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsrJob {
    pub segment_id: u64,
    pub enqueued_at: u64,
    pub latency_ms: Option<u64>,
    pub status: AsrStatus,
}

pub trait AsrBackend: Send {
    fn transcribe(&mut self, segment: &SpeechSegment) -> Reply<String>;
}

#[derive(Debug, Clone)]
struct Slot {
    job: AsrJob,
    submitted_cycle: u64,
    text: Option<String>,
}

/// Shared transcript store. Reads take a consistent point-in-time view.
#[derive(Debug, Default)]
pub struct TranscriptCache {
    slots: RwLock<BTreeMap<u64, Slot>>,
}

impl TranscriptCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&self, job: AsrJob, submitted_cycle: u64) {
        let mut slots = self.slots.write().expect("transcript cache poisoned");
        slots.insert(
            job.segment_id,
            Slot {
                job,
                submitted_cycle,
                text: None,
            },
        );
    }

    fn complete(&self, segment_id: u64, text: String, completed_at: u64) -> Option<AsrJob> {
        let mut slots = self.slots.write().expect("transcript cache poisoned");
        let slot = slots.get_mut(&segment_id)?;
        if slot.job.status != AsrStatus::Pending {
            return None;
        }
        slot.job.status = AsrStatus::Done;
        slot.job.latency_ms = Some(completed_at.saturating_sub(slot.job.enqueued_at));
        slot.text = Some(text);
        Some(slot.job.clone())
    }

    fn fail(&self, segment_id: u64) -> Option<AsrJob> {
        let mut slots = self.slots.write().expect("transcript cache poisoned");
        let slot = slots.get_mut(&segment_id)?;
        slot.job.status = AsrStatus::Failed;
        Some(slot.job.clone())
    }

    pub fn job(&self, segment_id: u64) -> Option<AsrJob> {
        let slots = self.slots.read().expect("transcript cache poisoned");
        slots.get(&segment_id).map(|s| s.job.clone())
    }

    pub fn entry(&self, segment_id: u64) -> Option<TranscriptEntry> {
        let slots = self.slots.read().expect("transcript cache poisoned");
        slots.get(&segment_id).and_then(to_entry)
    }

    /// Done entries with `completed_at ≤ now` and `visible_from_cycle ≤ cycle`,
    /// ordered by segment id.
    pub fn snapshot(&self, cycle: u64, now: u64) -> Vec<TranscriptEntry> {
        let slots = self.slots.read().expect("transcript cache poisoned");
        slots
            .values()
            .filter_map(to_entry)
            .filter(|e| e.completed_at <= now && e.visible_from_cycle <= cycle)
            .collect()
    }
}

fn to_entry(slot: &Slot) -> Option<TranscriptEntry> {
    if slot.job.status != AsrStatus::Done {
        return None;
    }
    Some(TranscriptEntry {
        segment_id: slot.job.segment_id,
        text: slot.text.clone().unwrap_or_default(),
        submitted_cycle: slot.submitted_cycle,
        completed_at: slot.job.enqueued_at + slot.job.latency_ms.unwrap_or(0),
        visible_from_cycle: slot.submitted_cycle + 1,
    })
}

struct InFlight {
    segment_id: u64,
    rx: std::sync::mpsc::Receiver<Result<String, BackendError>>,
}

/// Submission side of the context module: owns the ASR backend and writes
/// results into a [`TranscriptCache`].
pub struct ContextModule {
    cache: Arc<TranscriptCache>,
    backend: Box<dyn AsrBackend>,
    in_flight: Vec<InFlight>,
}

impl ContextModule {
    pub fn new(backend: Box<dyn AsrBackend>) -> Self {
        Self {
            cache: Arc::new(TranscriptCache::new()),
            backend,
            in_flight: Vec::new(),
        }
    }

    pub fn cache(&self) -> &Arc<TranscriptCache> {
        &self.cache
    }

    /// Hands the segment to the ASR backend without waiting for the text.
    ///
    /// `current_cycle` is the decision cycle the submission belongs to; the
    /// transcript becomes visible from the cycle after it.
    pub fn submit(
        &mut self,
        segment: &SpeechSegment,
        current_cycle: u64,
        now: u64,
    ) -> Result<AsrJob, ContractViolation> {
        if !segment.accepted {
            return Err(ContractViolation::RejectedSegment(segment.segment_id));
        }
        let job = AsrJob {
            segment_id: segment.segment_id,
            enqueued_at: now,
            latency_ms: None,
            status: AsrStatus::Pending,
        };
        self.cache.insert(job, current_cycle);
        let job = match self.backend.transcribe(segment) {
            Reply::Ready {
                result: Ok(text),
                latency_ms,
            } => self
                .cache
                .complete(segment.segment_id, text, now + latency_ms)
                .expect("slot just inserted"),
            Reply::Ready { result: Err(_), .. } => {
                self.cache.fail(segment.segment_id).expect("slot just inserted")
            }
            Reply::Deferred(rx) => {
                self.in_flight.push(InFlight {
                    segment_id: segment.segment_id,
                    rx,
                });
                self.cache.job(segment.segment_id).expect("slot just inserted")
            }
        };
        Ok(job)
    }

    /// Collects results of deferred jobs that arrived by `now`.
    pub fn poll(&mut self, now: u64) -> Vec<AsrJob> {
        let mut finished = Vec::new();
        self.in_flight.retain(|job| match job.rx.try_recv() {
            Ok(Ok(text)) => {
                finished.extend(self.cache.complete(job.segment_id, text, now));
                false
            }
            Ok(Err(_)) | Err(TryRecvError::Disconnected) => {
                finished.extend(self.cache.fail(job.segment_id));
                false
            }
            Err(TryRecvError::Empty) => true,
        });
        finished
    }

    pub fn has_pending(&self) -> bool {
        !self.in_flight.is_empty()
    }

    /// Blocks until every deferred job has reported (used when draining).
    pub fn wait_all(&mut self, now: u64) -> Vec<AsrJob> {
        let mut finished = Vec::new();
        for job in self.in_flight.drain(..) {
            match job.rx.recv() {
                Ok(Ok(text)) => finished.extend(self.cache.complete(job.segment_id, text, now)),
                _ => finished.extend(self.cache.fail(job.segment_id)),
            }
        }
        finished
    }

    pub fn snapshot(&self, cycle: u64, now: u64) -> Vec<TranscriptEntry> {
        self.cache.snapshot(cycle, now)
    }

    /// The snapshot restricted to the `max_segments` most recent segments.
    pub fn recent(&self, cycle: u64, now: u64, max_segments: usize) -> Vec<TranscriptEntry> {
        let mut all = self.cache.snapshot(cycle, now);
        let skip = all.len().saturating_sub(max_segments);
        all.drain(..skip);
        all
    }
}

/// Deterministic stand-in for a speech recognizer: returns the scripted text
/// of the utterance the segment overlaps, after a fixed latency.
#[derive(Debug, Clone)]
pub struct MockAsr {
    script: Option<Arc<ScriptTable>>,
    pub latency_ms: u64,
    pub available: bool,
}

impl MockAsr {
    pub fn new(script: Option<Arc<ScriptTable>>, latency_ms: u64) -> Self {
        Self {
            script,
            latency_ms,
            available: true,
        }
    }

    pub fn unavailable() -> Self {
        Self {
            script: None,
            latency_ms: 0,
            available: false,
        }
    }

    pub fn lookup(&self, segment: &SpeechSegment) -> String {
        self.script
            .as_ref()
            .and_then(|s| s.lookup(segment.t_start, segment.t_end))
            .map(|u| u.text.clone())
            .unwrap_or_default()
    }
}

impl AsrBackend for MockAsr {
    fn transcribe(&mut self, segment: &SpeechSegment) -> Reply<String> {
        if !self.available {
            return Reply::ready(Err(BackendError::Unavailable("mock ASR disabled".into())), 0);
        }
        Reply::ready(Ok(self.lookup(segment)), self.latency_ms)
    }
}
