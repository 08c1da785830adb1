//! Session orchestrator.
//!
//! [`Engine`] is sans-IO: the driver pushes user frames and moves time
//! forward, the engine answers with trace records and agent audio. All
//! latency is modelled on the engine's own scheduler, so a virtual-clock
//! driver replays a session deterministically and a wall-clock driver runs it
//! live.
//!
//! Per unit the loop is: listen for a segment, ask the decision backend
//! whether it is complete, keep listening (kl) or reply (l2s). While the
//! reply plays, sustained user speech triggers a Speak-state decision that
//! either keeps speaking (ks) or cancels playback and reopens Listen (s2l).
//! Playback running to completion also ends the unit with an s2l.

use std::collections::{BTreeMap, VecDeque};
use std::sync::mpsc::{Receiver, TryRecvError};

use thiserror::Error;

use crate::audio::{
    sv_gate, AudioFrame, EnergyVad, FrameRing, SegmentAssembler, SpeakerEmbedder,
    SpeakerProfile, SpeechSegment, Source, ToneEmbedder, VadEvent, VadKind,
    VoiceActivityDetector, FRAME_MS,
};
use crate::backend::Reply;
use crate::config::Config;
use crate::context::{AsrBackend, AsrStatus, ContextModule};
use crate::decision::{
    render_prompt, resolve_outcome, BackendDecision, DecisionBackend, DecisionOutcome,
    DecisionRequest, Degradation, DegradationKind, Role, SegmentRef, Turn,
};
use crate::dialogue::{apply_action, Dialogue, DialogueState, TransitionKind};
use crate::clock::{Clock, ClockMode, Scheduler};
use crate::error::{BackendError, ContractViolation};
use crate::synth::{synthesize, PendingSynthesis, Player, Synthesis, SynthError, TtsBackend};
use crate::trace::{SessionStats, SessionTrace, TraceEvent, TraceRecord, TransitionCause};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineSettings {
    pub pre_roll_ms: u64,
    pub ring_ms: u64,
    pub max_segments: usize,
    pub decision_timeout_ms: u64,
    pub window_ms: u64,
    pub min_overlap_ms: u64,
    pub tts_timeout_ms: u64,
    /// Record one trace entry per agent frame.
    pub trace_agent_frames: bool,
    /// Queue records and agent audio for [`Engine::drain_outputs`].
    pub collect_outputs: bool,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self::from_config(&Config::default())
    }
}

impl EngineSettings {
    pub fn from_config(config: &Config) -> Self {
        Self {
            pre_roll_ms: config.audio.pre_roll_ms,
            ring_ms: config.audio.ring_ms,
            max_segments: config.context.max_segments,
            decision_timeout_ms: config.decision.timeout_ms,
            window_ms: config.decision.window_ms,
            min_overlap_ms: config.orchestrator.min_overlap_ms,
            tts_timeout_ms: config.tts.timeout_ms,
            trace_agent_frames: true,
            collect_outputs: false,
        }
    }
}

pub struct SpeakerGate {
    pub embedder: Box<dyn SpeakerEmbedder>,
    pub profile: SpeakerProfile,
}

impl SpeakerGate {
    /// Reference gate for synthetic tone audio.
    pub fn tone(target_hz: f64, threshold: f32) -> Self {
        Self {
            embedder: Box::new(ToneEmbedder::default()),
            profile: ToneEmbedder::profile_for_hz(target_hz, threshold),
        }
    }
}

pub struct Backends {
    pub vad: Box<dyn VoiceActivityDetector>,
    pub sv: Option<SpeakerGate>,
    pub asr: Box<dyn AsrBackend>,
    pub decision: Box<dyn DecisionBackend>,
    pub tts: Box<dyn TtsBackend>,
}

impl Backends {
    pub fn with_energy_vad(
        config: &Config,
        sv: Option<SpeakerGate>,
        asr: Box<dyn AsrBackend>,
        decision: Box<dyn DecisionBackend>,
        tts: Box<dyn TtsBackend>,
    ) -> Self {
        Self {
            vad: Box::new(EnergyVad::new(config.audio.vad())),
            sv,
            asr,
            decision,
            tts,
        }
    }
}

#[derive(Debug, Clone)]
pub enum EngineOutput {
    Record(TraceRecord),
    Audio { utterance_id: u64, frame: AudioFrame },
}

#[derive(Debug, Error)]
#[error("session aborted: {error}")]
pub struct SessionAborted {
    pub error: ContractViolation,
    pub trace: SessionTrace,
}

#[derive(Debug)]
enum Scheduled {
    DecisionDue { cycle: u64 },
    AsrDone { segment_id: u64 },
    PlaybackFrame { utterance_id: u64, index: u64 },
    PlaybackComplete { utterance_id: u64 },
    SynthesisDue { utterance_id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Overlap {
    Untriggered,
    Rejected,
    Pending,
    Continued,
    Switched,
    Dropped,
}

#[derive(Debug)]
struct Utterance {
    onset: u64,
    overlap: Overlap,
    stash: Option<SpeechSegment>,
    open: bool,
    ignored: bool,
}

#[derive(Debug)]
enum Input {
    Final(SpeechSegment),
    Overlap(SpeechSegment),
}

impl Input {
    fn segment(&self) -> &SpeechSegment {
        match self {
            Input::Final(s) | Input::Overlap(s) => s,
        }
    }
}

enum PendingReply {
    Ready {
        result: Result<BackendDecision, BackendError>,
        latency_ms: u64,
    },
    Deferred(Receiver<Result<BackendDecision, BackendError>>),
}

struct InFlight {
    cycle: u64,
    state: DialogueState,
    input: Input,
    requested_at: u64,
    reply: PendingReply,
}

struct SynthInFlight {
    pending: PendingSynthesis,
    requested_at: u64,
    cycle: u64,
}

pub struct Engine {
    settings: EngineSettings,
    vad: Box<dyn VoiceActivityDetector>,
    sv: Option<SpeakerGate>,
    decision: Box<dyn DecisionBackend>,
    tts: Box<dyn TtsBackend>,
    context: ContextModule,
    player: Player,
    dialogue: Dialogue,
    scheduler: Scheduler<Scheduled>,
    trace: SessionTrace,
    outbox: Vec<EngineOutput>,
    ring: FrameRing,
    assembler: SegmentAssembler,
    utterances: BTreeMap<u64, Utterance>,
    queue: VecDeque<Input>,
    in_flight: Option<InFlight>,
    synth: Option<SynthInFlight>,
    /// Completion or synthesis failure that arrived while a decision was out.
    deferred_s2l: Option<TransitionCause>,
    next_cycle: u64,
    next_utterance: u64,
    speak_entered: u64,
    pending_start: Option<u64>,
    history: Vec<Turn>,
    now: u64,
    expected_t: Option<u64>,
    frames_in: u64,
    first_t: Option<u64>,
    input_closed: bool,
    stats: SessionStats,
}

impl Engine {
    pub fn new(session_id: &str, settings: EngineSettings, backends: Backends, started_at: u64) -> Self {
        let mut engine = Self {
            ring: FrameRing::with_capacity_ms(settings.ring_ms),
            assembler: SegmentAssembler::new(settings.pre_roll_ms),
            settings,
            vad: backends.vad,
            sv: backends.sv,
            decision: backends.decision,
            tts: backends.tts,
            context: ContextModule::new(backends.asr),
            player: Player::new(),
            dialogue: Dialogue::new(started_at),
            scheduler: Scheduler::new(),
            trace: SessionTrace::new(session_id),
            outbox: Vec::new(),
            utterances: BTreeMap::new(),
            queue: VecDeque::new(),
            in_flight: None,
            synth: None,
            deferred_s2l: None,
            next_cycle: 0,
            next_utterance: 0,
            speak_entered: started_at,
            pending_start: None,
            history: Vec::new(),
            now: started_at,
            expected_t: None,
            frames_in: 0,
            first_t: None,
            input_closed: false,
            stats: SessionStats {
                units: 1,
                ..Default::default()
            },
        };
        engine.record(TraceEvent::SessionStart {
            session_id: session_id.to_string(),
        });
        engine
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn state(&self) -> DialogueState {
        self.dialogue.state()
    }

    pub fn dialogue(&self) -> &Dialogue {
        &self.dialogue
    }

    pub fn trace(&self) -> &SessionTrace {
        &self.trace
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    pub fn history(&self) -> &[Turn] {
        &self.history
    }

    pub fn drain_outputs(&mut self) -> Vec<EngineOutput> {
        std::mem::take(&mut self.outbox)
    }

    pub fn next_due(&self) -> Option<u64> {
        self.scheduler.next_due()
    }

    /// Nothing scheduled, queued or outstanding.
    pub fn is_idle(&self) -> bool {
        self.scheduler.is_empty()
            && self.queue.is_empty()
            && self.in_flight.is_none()
            && self.synth.is_none()
            && !self.context.has_pending()
    }

    fn record(&mut self, event: TraceEvent) {
        let record = TraceRecord { t: self.now, event };
        if self.settings.collect_outputs {
            self.outbox.push(EngineOutput::Record(record.clone()));
        }
        self.trace.records.push(record);
    }

    /// Ingests one user frame. The frame is processed once it has fully
    /// arrived, at its end time.
    pub fn push_frame(&mut self, frame: AudioFrame) -> Result<(), ContractViolation> {
        if frame.source != Source::User {
            return Err(ContractViolation::NotUserFrame);
        }
        if let Some(expected) = self.expected_t {
            if frame.t_start != expected {
                return Err(ContractViolation::FrameGap {
                    expected,
                    got: frame.t_start,
                });
            }
        } else if frame.t_start < self.now {
            return Err(ContractViolation::TimeWentBackwards {
                last: self.now,
                now: frame.t_start,
            });
        }
        self.expected_t = Some(frame.t_end());
        self.first_t.get_or_insert(frame.t_start);
        self.frames_in += 1;
        self.advance_to(frame.t_end())?;

        self.ring.push(frame.clone());
        if let Some(event) = self.vad.update(&frame)? {
            self.on_vad(event)?;
        }
        self.check_overlap()?;
        self.settle()
    }

    /// Ends the input stream, closing any open utterance.
    pub fn finish_input(&mut self) -> Result<(), ContractViolation> {
        if self.input_closed {
            return Ok(());
        }
        self.input_closed = true;
        if let Some(event) = self.vad.flush(self.now) {
            self.on_vad(event)?;
        }
        self.record(TraceEvent::IngressSummary {
            frames: self.frames_in,
            first_t: self.first_t,
            last_t: self.expected_t,
        });
        self.settle()
    }

    /// Moves the session clock to `t`, firing everything due on the way.
    pub fn advance_to(&mut self, t: u64) -> Result<(), ContractViolation> {
        if t < self.now {
            return Err(ContractViolation::TimeWentBackwards { last: self.now, now: t });
        }
        self.poll_deferred()?;
        while let Some((at, event)) = self.scheduler.pop_due(t) {
            self.now = self.now.max(at);
            self.fire(event)?;
            self.pump()?;
            self.poll_deferred()?;
        }
        self.now = t;
        self.pump()
    }

    /// Blocks on outstanding recognizer jobs; used when a virtual-clock
    /// driver has nothing left to jump to.
    pub fn wait_pending_asr(&mut self) -> Result<(), ContractViolation> {
        let jobs = self.context.wait_all(self.now);
        for job in jobs {
            self.on_asr_job(job.segment_id, job.status);
        }
        self.settle()
    }

    /// Closes the trace.
    pub fn close(mut self) -> SessionTrace {
        self.record(TraceEvent::SessionEnd {
            units: self.stats.units,
            decisions: self.stats.decisions,
            cancellations: self.stats.cancellations,
        });
        self.trace
    }

    fn settle(&mut self) -> Result<(), ContractViolation> {
        let now = self.now;
        self.advance_to(now)
    }

    fn poll_deferred(&mut self) -> Result<(), ContractViolation> {
        for job in self.context.poll(self.now) {
            self.on_asr_job(job.segment_id, job.status);
        }
        if let Some(f) = &self.in_flight {
            if let PendingReply::Deferred(rx) = &f.reply {
                let got = match rx.try_recv() {
                    Ok(r) => Some(r),
                    Err(TryRecvError::Empty) => None,
                    Err(TryRecvError::Disconnected) => {
                        Some(Err(BackendError::Unavailable("decision worker vanished".into())))
                    }
                };
                if let Some(result) = got {
                    let latency = self.now - f.requested_at;
                    self.complete_decision(result, latency)?;
                    self.pump()?;
                }
            }
        }
        if let Some(s) = &self.synth {
            if let Some(result) = s.pending.try_finish(self.now - s.requested_at) {
                self.on_synthesis(result)?;
            }
        }
        Ok(())
    }

    fn fire(&mut self, event: Scheduled) -> Result<(), ContractViolation> {
        match event {
            Scheduled::DecisionDue { cycle } => {
                let Some(f) = &mut self.in_flight else {
                    return Ok(());
                };
                if f.cycle != cycle {
                    return Ok(());
                }
                let timeout = self.settings.decision_timeout_ms;
                let (result, latency) = match &mut f.reply {
                    PendingReply::Ready { result, latency_ms } => {
                        (std::mem::replace(result, Err(BackendError::MissingLabel)), *latency_ms)
                    }
                    PendingReply::Deferred(rx) => match rx.try_recv() {
                        Ok(r) => (r, self.now - f.requested_at),
                        Err(TryRecvError::Empty) => (Err(BackendError::Timeout(timeout)), timeout),
                        Err(TryRecvError::Disconnected) => (
                            Err(BackendError::Unavailable("decision worker vanished".into())),
                            self.now - f.requested_at,
                        ),
                    },
                };
                self.complete_decision(result, latency)
            }
            Scheduled::AsrDone { segment_id } => {
                self.on_asr_job(segment_id, AsrStatus::Done);
                Ok(())
            }
            Scheduled::PlaybackFrame { utterance_id, index } => {
                if let Some(frame) = self.player.frame(utterance_id, index, self.now) {
                    if self.settings.trace_agent_frames {
                        self.record(TraceEvent::AgentFrame { utterance_id, index });
                    }
                    if self.settings.collect_outputs {
                        self.outbox.push(EngineOutput::Audio { utterance_id, frame });
                    }
                    let session = self.player.session().expect("frame implies session");
                    if index + 1 < session.frame_count() {
                        let at = session.frame_time(index + 1);
                        self.scheduler.schedule(
                            at,
                            Scheduled::PlaybackFrame {
                                utterance_id,
                                index: index + 1,
                            },
                        );
                    }
                }
                Ok(())
            }
            Scheduled::PlaybackComplete { utterance_id } => {
                let now = self.now;
                let Some(session) = self.player.session_mut() else {
                    return Ok(());
                };
                if session.utterance_id != utterance_id || !session.complete(now) {
                    return Ok(());
                }
                self.record(TraceEvent::PlaybackComplete { utterance_id });
                self.auto_s2l(TransitionCause::PlaybackComplete)
            }
            Scheduled::SynthesisDue { utterance_id } => {
                let Some(s) = &self.synth else {
                    return Ok(());
                };
                if s.pending.utterance_id != utterance_id {
                    return Ok(());
                }
                let result = s
                    .pending
                    .try_finish(self.now - s.requested_at)
                    .unwrap_or(Err(SynthError::Backend(BackendError::Timeout(
                        self.settings.tts_timeout_ms,
                    ))));
                self.on_synthesis(result)
            }
        }
    }

    fn on_vad(&mut self, event: VadEvent) -> Result<(), ContractViolation> {
        self.record(TraceEvent::Vad {
            kind: event.kind,
            at: event.t,
        });
        match event.kind {
            VadKind::SpeechStart => {
                let id = self.assembler.begin(event)?;
                self.utterances.insert(
                    id,
                    Utterance {
                        onset: event.t,
                        overlap: Overlap::Untriggered,
                        stash: None,
                        open: true,
                        ignored: false,
                    },
                );
                Ok(())
            }
            VadKind::SpeechEnd => {
                let (segment, warning) = self.assembler.finish(&self.ring, event)?;
                if let Some(w) = warning {
                    self.record(TraceEvent::Warning {
                        detail: format!(
                            "segment {} pre-roll truncated: wanted {} got {}",
                            w.segment_id, w.requested_start, w.actual_start
                        ),
                    });
                }
                self.on_segment(segment)
            }
        }
    }

    fn gate(&mut self, segment: SpeechSegment, partial: bool) -> SpeechSegment {
        let (segment, warning) = match &mut self.sv {
            Some(gate) => sv_gate(segment, Some(&gate.profile), gate.embedder.as_mut()),
            None => sv_gate(segment, None, &mut ToneEmbedder::default()),
        };
        if let Some(w) = warning {
            self.record(TraceEvent::Degradation {
                kind: DegradationKind::SpeakerVerificationFailed,
                detail: w.detail,
            });
        }
        self.record(TraceEvent::Segment {
            segment_id: segment.segment_id,
            t_start: segment.t_start,
            t_end: segment.t_end,
            frames: segment.frames.len(),
            partial,
            accepted: segment.accepted,
            sv_score: segment.sv_score,
        });
        segment
    }

    fn on_segment(&mut self, segment: SpeechSegment) -> Result<(), ContractViolation> {
        let segment = self.gate(segment, false);
        let id = segment.segment_id;
        let Some(utt) = self.utterances.get_mut(&id) else {
            return Ok(());
        };
        utt.open = false;
        if !segment.accepted {
            utt.ignored = true;
            self.prune();
            return Ok(());
        }
        let state = self.dialogue.state();
        // the cycle this segment's own decision will run in, at the earliest
        let own_cycle = self.next_cycle + self.queue.len() as u64;
        match utt.overlap {
            Overlap::Untriggered if state == DialogueState::Speak => utt.ignored = true,
            Overlap::Rejected | Overlap::Continued => utt.ignored = true,
            Overlap::Pending => utt.stash = Some(segment.clone()),
            Overlap::Untriggered | Overlap::Switched | Overlap::Dropped => {
                self.queue.push_back(Input::Final(segment.clone()))
            }
        }
        let job = self.context.submit(&segment, own_cycle, self.now)?;
        self.record(TraceEvent::AsrSubmit {
            segment_id: id,
            cycle: own_cycle,
        });
        match job.status {
            AsrStatus::Done => {
                let at = job.enqueued_at + job.latency_ms.unwrap_or(0);
                self.scheduler.schedule(at, Scheduled::AsrDone { segment_id: id });
            }
            AsrStatus::Failed => self.on_asr_job(id, AsrStatus::Failed),
            AsrStatus::Pending => {}
        }
        self.prune();
        Ok(())
    }

    fn on_asr_job(&mut self, segment_id: u64, status: AsrStatus) {
        match status {
            AsrStatus::Done => {
                let Some(entry) = self.context.cache().entry(segment_id) else {
                    return;
                };
                let ignored = self
                    .utterances
                    .get(&segment_id)
                    .is_some_and(|u| u.ignored || u.overlap == Overlap::Continued);
                if !ignored && !entry.text.trim().is_empty() {
                    self.history.push(Turn {
                        role: Role::User,
                        text: entry.text.clone(),
                    });
                }
                self.record(TraceEvent::AsrComplete {
                    segment_id,
                    text: entry.text,
                });
            }
            AsrStatus::Failed => {
                self.record(TraceEvent::AsrFailed { segment_id });
                self.record(TraceEvent::Degradation {
                    kind: DegradationKind::AsrFailed,
                    detail: format!("no transcript for segment {segment_id}"),
                });
            }
            AsrStatus::Pending => {}
        }
    }

    fn prune(&mut self) {
        // keep recent records for late ASR completions
        while self.utterances.len() > 64 {
            let Some((&id, u)) = self.utterances.iter().next() else {
                break;
            };
            if u.open || u.overlap == Overlap::Pending {
                break;
            }
            self.utterances.remove(&id);
        }
    }

    fn check_overlap(&mut self) -> Result<(), ContractViolation> {
        if self.dialogue.state() != DialogueState::Speak {
            return Ok(());
        }
        let Some((id, _)) = self.assembler.open() else {
            return Ok(());
        };
        let Some(utt) = self.utterances.get(&id) else {
            return Ok(());
        };
        if utt.overlap != Overlap::Untriggered {
            return Ok(());
        }
        let since = utt.onset.max(self.speak_entered);
        if self.now < since + self.settings.min_overlap_ms {
            return Ok(());
        }
        let Some(partial) = self.assembler.peek(&self.ring, self.now) else {
            return Ok(());
        };
        let (partial, _) = partial?;
        let partial = self.gate(partial, true);
        let utt = self.utterances.get_mut(&id).expect("checked above");
        if !partial.accepted {
            utt.overlap = Overlap::Rejected;
            return Ok(());
        }
        utt.overlap = Overlap::Pending;
        self.record(TraceEvent::OverlapTrigger { segment_id: id });
        self.queue.push_back(Input::Overlap(partial));
        Ok(())
    }

    /// Starts the next queued decision if none is in flight.
    fn pump(&mut self) -> Result<(), ContractViolation> {
        while self.in_flight.is_none() {
            let Some(input) = self.queue.pop_front() else {
                return Ok(());
            };
            let state = self.dialogue.state();
            if let Input::Overlap(partial) = &input {
                if state == DialogueState::Listen {
                    // the floor came back before this overlap was judged
                    let utt = self.utterances.get_mut(&partial.segment_id);
                    if let Some(utt) = utt {
                        utt.overlap = Overlap::Dropped;
                        if let Some(seg) = utt.stash.take() {
                            self.queue.push_front(Input::Final(seg));
                        }
                    }
                    continue;
                }
            }
            self.dispatch(input, state)?;
        }
        Ok(())
    }

    fn dispatch(&mut self, input: Input, state: DialogueState) -> Result<(), ContractViolation> {
        let cycle = self.next_cycle;
        self.next_cycle += 1;
        let seg = input.segment();
        let segment = SegmentRef {
            segment_id: seg.segment_id,
            t_start: seg.t_start,
            t_end: seg.t_end,
        };
        let audio = match state {
            DialogueState::Listen => {
                let from = self
                    .pending_start
                    .map_or(seg.t_start, |p| p.min(seg.t_start))
                    .max(seg.t_end.saturating_sub(self.settings.window_ms));
                self.ring.range(from, seg.t_end)
            }
            DialogueState::Speak => seg.frames.clone(),
        };
        let transcripts = self.context.recent(cycle, self.now, self.settings.max_segments);
        let request = DecisionRequest {
            cycle,
            state,
            segment,
            audio,
            transcripts,
            history: self.history.clone(),
        };
        self.record(TraceEvent::DecisionRequest {
            cycle,
            state,
            segment_id: segment.segment_id,
            segment_start: segment.t_start,
            segment_end: segment.t_end,
            transcripts: request.transcripts.len(),
        });
        let prompt = render_prompt(state, &request.transcripts, &request.history);
        let timeout = self.settings.decision_timeout_ms;
        let (reply, due) = match self.decision.decide(&request, &prompt) {
            Reply::Ready { result, latency_ms } => (
                PendingReply::Ready { result, latency_ms },
                self.now + latency_ms.min(timeout),
            ),
            Reply::Deferred(rx) => (PendingReply::Deferred(rx), self.now + timeout),
        };
        self.in_flight = Some(InFlight {
            cycle,
            state,
            input,
            requested_at: self.now,
            reply,
        });
        self.scheduler.schedule(due, Scheduled::DecisionDue { cycle });
        Ok(())
    }

    fn complete_decision(
        &mut self,
        result: Result<BackendDecision, BackendError>,
        latency_ms: u64,
    ) -> Result<(), ContractViolation> {
        let f = self.in_flight.take().expect("decision in flight");
        let (outcome, degradation) =
            resolve_outcome(f.state, result, latency_ms, self.settings.decision_timeout_ms);
        if let Some(Degradation { kind, detail }) = degradation.clone() {
            self.record(TraceEvent::Degradation { kind, detail });
        }
        self.record(TraceEvent::DecisionOutcome {
            cycle: f.cycle,
            action: outcome.action,
            label: outcome.label,
            response_text: outcome.response_text.clone(),
            latency_ms: outcome.backend_latency_ms,
            fallback: degradation.is_some(),
        });
        self.stats.decisions += 1;
        self.apply(f, outcome)?;
        if let Some(cause) = self.deferred_s2l.take() {
            if self.dialogue.state() == DialogueState::Speak {
                self.auto_s2l(cause)?;
            }
        }
        Ok(())
    }

    fn transition(
        &mut self,
        kind: TransitionKind,
        cause: TransitionCause,
        cycle: Option<u64>,
    ) -> Result<(), ContractViolation> {
        self.dialogue.advance(self.now, kind)?;
        if kind == TransitionKind::SpeakToListen {
            self.stats.units += 1;
        }
        self.record(TraceEvent::Transition {
            kind,
            unit_index: self.dialogue.unit_index(),
            cause,
            cycle,
        });
        Ok(())
    }

    fn apply(&mut self, f: InFlight, outcome: DecisionOutcome) -> Result<(), ContractViolation> {
        let (_, kind) = apply_action(f.state, outcome.action);
        let id = f.input.segment().segment_id;
        match kind {
            TransitionKind::KeepListen => {
                let start = f.input.segment().t_start;
                self.pending_start = Some(self.pending_start.map_or(start, |p| p.min(start)));
                self.transition(kind, TransitionCause::Decision, Some(f.cycle))
            }
            TransitionKind::ListenToSpeak => {
                self.pending_start = None;
                self.transition(kind, TransitionCause::Decision, Some(f.cycle))?;
                self.speak_entered = self.now;
                let text = outcome
                    .response_text
                    .expect("resolved Switch in Listen carries a reply");
                self.history.push(Turn {
                    role: Role::Assistant,
                    text: text.clone(),
                });
                self.start_reply(&text, f.cycle)
            }
            TransitionKind::KeepSpeak => {
                if let Some(utt) = self.utterances.get_mut(&id) {
                    utt.overlap = Overlap::Continued;
                    utt.ignored = true;
                    utt.stash = None;
                }
                self.transition(kind, TransitionCause::Decision, Some(f.cycle))
            }
            TransitionKind::SpeakToListen => {
                self.stop_reply(f.cycle);
                self.transition(kind, TransitionCause::Decision, Some(f.cycle))?;
                let reoffer = match f.input {
                    Input::Final(seg) => Some(seg),
                    Input::Overlap(_) => self
                        .utterances
                        .get_mut(&id)
                        .and_then(|u| u.stash.take()),
                };
                if let Some(utt) = self.utterances.get_mut(&id) {
                    utt.overlap = Overlap::Switched;
                    utt.ignored = false;
                }
                if let Some(seg) = reoffer {
                    self.queue.push_front(Input::Final(seg));
                }
                Ok(())
            }
        }
    }

    fn start_reply(&mut self, text: &str, cycle: u64) -> Result<(), ContractViolation> {
        let utterance_id = self.next_utterance;
        self.next_utterance += 1;
        match synthesize(self.tts.as_mut(), utterance_id, text) {
            Ok(Synthesis::Ready(u)) => self.begin_playback(u, self.now, cycle),
            Ok(Synthesis::Pending(pending)) => {
                self.scheduler.schedule(
                    self.now + self.settings.tts_timeout_ms,
                    Scheduled::SynthesisDue { utterance_id },
                );
                self.synth = Some(SynthInFlight {
                    pending,
                    requested_at: self.now,
                    cycle,
                });
                Ok(())
            }
            Err(e) => self.synthesis_failed(e),
        }
    }

    fn on_synthesis(
        &mut self,
        result: Result<crate::synth::SynthesizedUtterance, SynthError>,
    ) -> Result<(), ContractViolation> {
        let s = self.synth.take().expect("synthesis in flight");
        match result {
            Ok(u) => self.begin_playback(u, s.requested_at, s.cycle),
            Err(e) => self.synthesis_failed(e),
        }
    }

    fn begin_playback(
        &mut self,
        u: crate::synth::SynthesizedUtterance,
        started_at: u64,
        cycle: u64,
    ) -> Result<(), ContractViolation> {
        let session = self.player.start_playback(&u, started_at)?.clone();
        self.record(TraceEvent::PlaybackStart {
            utterance_id: session.utterance_id,
            cycle,
            text: u.handle.text.clone(),
            first_frame_at: session.first_frame_at(),
            duration_ms: session.total_duration_ms,
        });
        if session.frame_count() > 0 {
            self.scheduler.schedule(
                session.first_frame_at(),
                Scheduled::PlaybackFrame {
                    utterance_id: session.utterance_id,
                    index: 0,
                },
            );
        }
        self.scheduler.schedule(
            session.ends_at().max(self.now),
            Scheduled::PlaybackComplete {
                utterance_id: session.utterance_id,
            },
        );
        Ok(())
    }

    fn synthesis_failed(&mut self, e: SynthError) -> Result<(), ContractViolation> {
        if let SynthError::Contract(c) = &e {
            if *c != ContractViolation::EmptyText {
                return Err(c.clone());
            }
        }
        self.record(TraceEvent::Degradation {
            kind: DegradationKind::SynthesisFailed,
            detail: e.to_string(),
        });
        self.auto_s2l(TransitionCause::SynthesisFailed)
    }

    /// Cancels whatever is playing or being synthesized.
    fn stop_reply(&mut self, cycle: u64) {
        self.synth = None;
        if let Some(session) = self.player.cancel(self.now) {
            self.stats.cancellations += 1;
            self.record(TraceEvent::PlaybackCancel {
                utterance_id: session.utterance_id,
                cycle,
                emitted_ms: session.emitted_ms,
            });
        }
    }

    /// End of the agent's turn without a user decision.
    fn auto_s2l(&mut self, cause: TransitionCause) -> Result<(), ContractViolation> {
        if self.dialogue.state() != DialogueState::Speak {
            return Ok(());
        }
        if self.in_flight.is_some() {
            self.deferred_s2l = Some(cause);
            return Ok(());
        }
        self.transition(TransitionKind::SpeakToListen, cause, None)
    }
}

/// Drives an [`Engine`] over a finite frame source and drains all pending
/// work. With a virtual clock the run takes no wall time beyond compute.
pub fn run_session(
    session_id: &str,
    frames: impl IntoIterator<Item = AudioFrame>,
    backends: Backends,
    settings: EngineSettings,
    clock: &mut Clock,
) -> Result<SessionTrace, Box<SessionAborted>> {
    let mut engine = Engine::new(session_id, settings, backends, clock.now_ms());
    match drive(&mut engine, frames, clock) {
        Ok(()) => Ok(engine.close()),
        Err(error) => {
            engine.record(TraceEvent::Warning {
                detail: format!("aborted: {error}"),
            });
            Err(Box::new(SessionAborted {
                error,
                trace: engine.close(),
            }))
        }
    }
}

fn drive(
    engine: &mut Engine,
    frames: impl IntoIterator<Item = AudioFrame>,
    clock: &mut Clock,
) -> Result<(), ContractViolation> {
    for frame in frames {
        clock.wait_until(frame.t_end());
        engine.push_frame(frame)?;
    }
    engine.finish_input()?;
    while !engine.is_idle() {
        match clock.mode() {
            ClockMode::Virtual => match engine.next_due() {
                Some(t) => {
                    clock.wait_until(t);
                    engine.advance_to(t.max(engine.now()))?;
                }
                None => engine.wait_pending_asr()?,
            },
            ClockMode::Wall => {
                let step = engine.now() + FRAME_MS;
                let t = engine.next_due().map_or(step, |d| d.min(step));
                clock.wait_until(t);
                engine.advance_to(clock.now_ms().max(engine.now()))?;
            }
        }
    }
    Ok(())
}
