//! State-dependent decision layer.
//!
//! Each decision cycle sends the trailing user audio, cached transcripts and
//! conversation history to a backend together with a prompt specific to the
//! current state. The backend answers with a label; the label fixes the
//! action, so turn-taking and utterance classification share one decision
//! space. A backend that fails, stalls or answers nonsense yields the
//! fallback outcome: `Continue` in either state.

use std::sync::mpsc::RecvTimeoutError;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{rms_dbfs, AudioFrame, FRAME_MS};
use crate::backend::Reply;
use crate::context::TranscriptEntry;
use crate::dialogue::{label_to_action, Action, DialogueState, UtteranceLabel};
use crate::error::BackendError;
use crate::script::{ScriptLabel, ScriptTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

/// Segment that triggered a decision cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub segment_id: u64,
    pub t_start: u64,
    pub t_end: u64,
}

#[derive(Debug, Clone)]
pub struct DecisionRequest {
    pub cycle: u64,
    pub state: DialogueState,
    pub segment: SegmentRef,
    /// Trailing user audio: the triggering segment plus earlier pending audio.
    pub audio: Vec<AudioFrame>,
    pub transcripts: Vec<TranscriptEntry>,
    pub history: Vec<Turn>,
}

impl DecisionRequest {
    /// Prompt template follows the state.
    pub fn template(&self) -> DialogueState {
        self.state
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub action: Action,
    pub label: UtteranceLabel,
    pub response_text: Option<String>,
    pub backend_latency_ms: u64,
}

/// What a backend claims before validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendDecision {
    pub label: UtteranceLabel,
    pub response_text: Option<String>,
}

pub trait DecisionBackend: Send {
    fn decide(&mut self, request: &DecisionRequest, prompt: &str) -> Reply<BackendDecision>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    DecisionTimeout,
    DecisionFailed,
    DecisionMalformed,
    AsrFailed,
    SynthesisFailed,
    SpeakerVerificationFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degradation {
    pub kind: DegradationKind,
    pub detail: String,
}

pub fn fallback_outcome(state: DialogueState, latency_ms: u64) -> DecisionOutcome {
    DecisionOutcome {
        action: Action::Continue,
        label: UtteranceLabel::fallback_for(state),
        response_text: None,
        backend_latency_ms: latency_ms,
    }
}

/// Validates a backend answer against the decision-space invariants.
///
/// `latency_ms` beyond `timeout_ms` counts as a timeout regardless of what
/// the backend said.
pub fn resolve_outcome(
    state: DialogueState,
    result: Result<BackendDecision, BackendError>,
    latency_ms: u64,
    timeout_ms: u64,
) -> (DecisionOutcome, Option<Degradation>) {
    if latency_ms > timeout_ms {
        return (
            fallback_outcome(state, timeout_ms),
            Some(Degradation {
                kind: DegradationKind::DecisionTimeout,
                detail: format!("no answer within {timeout_ms} ms"),
            }),
        );
    }
    let degrade = |kind, detail: String| {
        (fallback_outcome(state, latency_ms), Some(Degradation { kind, detail }))
    };
    let reply = match result {
        Ok(reply) => reply,
        Err(BackendError::Timeout(ms)) => {
            return degrade(DegradationKind::DecisionTimeout, format!("backend timed out after {ms} ms"))
        }
        Err(e @ BackendError::Malformed(_)) => return degrade(DegradationKind::DecisionMalformed, e.to_string()),
        Err(e) => return degrade(DegradationKind::DecisionFailed, e.to_string()),
    };
    let action = match label_to_action(state, reply.label) {
        Ok(action) => action,
        Err(e) => return degrade(DegradationKind::DecisionMalformed, e.to_string()),
    };
    let wants_reply = state == DialogueState::Listen && action == Action::Switch;
    let response_text = reply
        .response_text
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty());
    if wants_reply && response_text.is_none() {
        return degrade(
            DegradationKind::DecisionMalformed,
            "complete utterance without a reply".into(),
        );
    }
    (
        DecisionOutcome {
            action,
            label: reply.label,
            response_text: if wants_reply { response_text } else { None },
            backend_latency_ms: latency_ms,
        },
        None,
    )
}

/// Runs one decision against `backend`, waiting for deferred replies up to
/// `timeout_ms`. Never fails: problems become the fallback outcome.
pub fn decide(
    backend: &mut dyn DecisionBackend,
    request: &DecisionRequest,
    timeout_ms: u64,
) -> (DecisionOutcome, Option<Degradation>) {
    let prompt = render_prompt(request.state, &request.transcripts, &request.history);
    match backend.decide(request, &prompt) {
        Reply::Ready { result, latency_ms } => {
            resolve_outcome(request.state, result, latency_ms, timeout_ms)
        }
        Reply::Deferred(rx) => {
            let started = std::time::Instant::now();
            match rx.recv_timeout(Duration::from_millis(timeout_ms)) {
                Ok(result) => {
                    let latency = started.elapsed().as_millis() as u64;
                    resolve_outcome(request.state, result, latency.min(timeout_ms), timeout_ms)
                }
                Err(RecvTimeoutError::Timeout) => resolve_outcome(
                    request.state,
                    Err(BackendError::Timeout(timeout_ms)),
                    timeout_ms,
                    timeout_ms,
                ),
                Err(RecvTimeoutError::Disconnected) => resolve_outcome(
                    request.state,
                    Err(BackendError::Unavailable("backend dropped the request".into())),
                    started.elapsed().as_millis() as u64,
                    timeout_ms,
                ),
            }
        }
    }
}

const LISTEN_PROMPT: &str = "\
You are the listening side of a full-duplex voice assistant. The user is \
speaking and you must decide whether their utterance, heard in the attached \
audio, is semantically complete.
Answer with a first line of exactly `DECISION: complete` or `DECISION: incomplete`.
If the utterance is complete, write the spoken reply on the following lines. \
If it is incomplete, write nothing else.";

const SPEAK_PROMPT: &str = "\
You are the speaking side of a full-duplex voice assistant. The user made a \
sound while you were talking, heard in the attached audio. Decide whether it \
is a backchannel (short listener feedback such as \"mm-hm\" or \"right\") or a \
genuine interruption that should stop your speech.
Answer with a single line of exactly `DECISION: backchannel` or `DECISION: interruption`.";

/// Deterministic prompt for `state`, embedding transcripts and history in
/// chronological order.
pub fn render_prompt(
    state: DialogueState,
    transcripts: &[TranscriptEntry],
    history: &[Turn],
) -> String {
    let mut out = String::from(match state {
        DialogueState::Listen => LISTEN_PROMPT,
        DialogueState::Speak => SPEAK_PROMPT,
    });
    out.push_str("\n\n## Conversation so far\n");
    if history.is_empty() {
        out.push_str("(none)\n");
    }
    for turn in history {
        let role = match turn.role {
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        out.push_str(&format!("{role}: {}\n", turn.text));
    }
    out.push_str("\n## Recent transcripts (may lag the audio)\n");
    if transcripts.is_empty() {
        out.push_str("(none)\n");
    }
    let mut ordered: Vec<&TranscriptEntry> = transcripts.iter().collect();
    ordered.sort_by_key(|t| (t.completed_at, t.segment_id));
    for t in ordered {
        out.push_str(&format!("[segment {}] {}\n", t.segment_id, t.text));
    }
    out
}

/// Reads a reply of the form `DECISION: <label>` followed by free text.
pub fn parse_backend_reply(raw: &str) -> Result<(UtteranceLabel, String), BackendError> {
    let mut lines = raw.lines().skip_while(|l| l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| BackendError::Malformed("empty reply".into()))?
        .trim();
    let malformed = || BackendError::Malformed(format!("bad decision header: {header:?}"));
    let (key, value) = header.split_once(':').ok_or_else(malformed)?;
    if !key.trim().eq_ignore_ascii_case("decision") {
        return Err(malformed());
    }
    let label = match value.trim().to_ascii_lowercase().as_str() {
        "complete" => UtteranceLabel::Complete,
        "incomplete" => UtteranceLabel::Incomplete,
        "backchannel" => UtteranceLabel::Backchannel,
        "interruption" => UtteranceLabel::Interruption,
        _ => return Err(malformed()),
    };
    let rest = lines.collect::<Vec<_>>().join("\n");
    Ok((label, rest.trim().to_string()))
}

/// Maps a scenario label onto the question asked in `state`.
///
/// An interruption heard while listening is a fresh request; anything but a
/// backchannel heard while speaking is an attempt to take the floor.
pub fn project_label(label: ScriptLabel, state: DialogueState) -> UtteranceLabel {
    match state {
        DialogueState::Listen => match label {
            ScriptLabel::Complete | ScriptLabel::Interruption => UtteranceLabel::Complete,
            ScriptLabel::Incomplete | ScriptLabel::Backchannel | ScriptLabel::NonTarget => {
                UtteranceLabel::Incomplete
            }
        },
        DialogueState::Speak => match label {
            ScriptLabel::Interruption | ScriptLabel::Complete | ScriptLabel::Incomplete => {
                UtteranceLabel::Interruption
            }
            ScriptLabel::Backchannel | ScriptLabel::NonTarget => UtteranceLabel::Backchannel,
        },
    }
}

fn flip(label: UtteranceLabel) -> UtteranceLabel {
    match label {
        UtteranceLabel::Complete => UtteranceLabel::Incomplete,
        UtteranceLabel::Incomplete => UtteranceLabel::Complete,
        UtteranceLabel::Backchannel => UtteranceLabel::Interruption,
        UtteranceLabel::Interruption => UtteranceLabel::Backchannel,
    }
}

pub fn default_reply(user_text: &str) -> String {
    if user_text.trim().is_empty() {
        "Okay, I'm listening.".to_string()
    } else {
        format!("You said: {}.", user_text.trim())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub latency_ms: u64,
    pub latency_jitter_ms: u64,
    pub error_rate: f64,
    pub adversarial: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            latency_ms: 300,
            latency_jitter_ms: 0,
            error_rate: 0.0,
            adversarial: false,
        }
    }
}

/// Simulation decision backend that answers from the scenario script.
#[derive(Debug, Clone)]
pub struct ScriptedOracle {
    script: Arc<ScriptTable>,
    config: OracleConfig,
    rng: ChaCha8Rng,
}

impl ScriptedOracle {
    pub fn new(script: Arc<ScriptTable>, config: OracleConfig, seed: u64) -> Self {
        Self {
            script,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn answer(&self, request: &DecisionRequest) -> Result<BackendDecision, BackendError> {
        let seg = request.segment;
        let entry = self
            .script
            .lookup(seg.t_start, seg.t_end)
            .ok_or(BackendError::MissingLabel)?;
        let mut label = project_label(entry.label, request.state);
        if self.config.adversarial {
            label = flip(label);
        }
        let response_text = (label == UtteranceLabel::Complete).then(|| {
            entry
                .reply
                .clone()
                .unwrap_or_else(|| default_reply(&entry.text))
        });
        Ok(BackendDecision {
            label,
            response_text,
        })
    }
}

impl DecisionBackend for ScriptedOracle {
    fn decide(&mut self, request: &DecisionRequest, _prompt: &str) -> Reply<BackendDecision> {
        // both draws happen every call so the stream stays aligned across configs
        let fail_draw: f64 = self.rng.random();
        let jitter = self.rng.random_range(0..=self.config.latency_jitter_ms);
        let latency = self.config.latency_ms + jitter;
        if fail_draw < self.config.error_rate {
            return Reply::ready(Err(BackendError::Injected), latency);
        }
        Reply::ready(self.answer(request), latency)
    }
}

/// Live-session stand-in that needs no script: long utterances count as
/// complete, loud overlap counts as an interruption.
#[derive(Debug, Clone)]
pub struct HeuristicBackend {
    pub latency_ms: u64,
    pub voiced_dbfs: f64,
    pub min_complete_ms: u64,
    pub interruption_dbfs: f64,
}

impl HeuristicBackend {
    pub fn new(latency_ms: u64) -> Self {
        Self {
            latency_ms,
            voiced_dbfs: -35.0,
            min_complete_ms: 600,
            interruption_dbfs: -20.0,
        }
    }

    fn voiced<'a>(&self, request: &'a DecisionRequest) -> Vec<(&'a AudioFrame, f64)> {
        let seg = request.segment;
        request
            .audio
            .iter()
            .filter(|f| f.t_start >= seg.t_start && f.t_start < seg.t_end)
            .map(|f| (f, rms_dbfs(f)))
            .filter(|(_, db)| *db > self.voiced_dbfs)
            .collect()
    }
}

impl DecisionBackend for HeuristicBackend {
    fn decide(&mut self, request: &DecisionRequest, _prompt: &str) -> Reply<BackendDecision> {
        let voiced = self.voiced(request);
        let decision = match request.state {
            DialogueState::Listen => {
                let ms = voiced.len() as u64 * FRAME_MS;
                if ms >= self.min_complete_ms {
                    BackendDecision {
                        label: UtteranceLabel::Complete,
                        response_text: Some(format!(
                            "I heard about {:.1} seconds of speech.",
                            ms as f64 / 1000.0
                        )),
                    }
                } else {
                    BackendDecision {
                        label: UtteranceLabel::Incomplete,
                        response_text: None,
                    }
                }
            }
            DialogueState::Speak => {
                let loud = !voiced.is_empty()
                    && voiced.iter().map(|(_, db)| db).sum::<f64>() / voiced.len() as f64
                        >= self.interruption_dbfs;
                BackendDecision {
                    label: if loud {
                        UtteranceLabel::Interruption
                    } else {
                        UtteranceLabel::Backchannel
                    },
                    response_text: None,
                }
            }
        };
        Reply::ready(Ok(decision), self.latency_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::ScriptedUtterance;

    fn request(state: DialogueState, t0: u64, t1: u64) -> DecisionRequest {
        DecisionRequest {
            cycle: 0,
            state,
            segment: SegmentRef { segment_id: 0, t_start: t0, t_end: t1 },
            audio: vec![],
            transcripts: vec![],
            history: vec![],
        }
    }

    fn script(label: ScriptLabel) -> Arc<ScriptTable> {
        Arc::new(ScriptTable::new(vec![ScriptedUtterance {
            id: None,
            t_start: 1000,
            t_end: 2000,
            label,
            text: "what's the weather tomorrow".into(),
            reply: Some("scripted reply".into()),
        }]))
    }

    struct Fails(BackendError, u64);
    impl DecisionBackend for Fails {
        fn decide(&mut self, _: &DecisionRequest, _: &str) -> Reply<BackendDecision> {
            Reply::ready(Err(self.0.clone()), self.1)
        }
    }

    #[test]
    fn oracle_echoes_labels() {
        let mut o = ScriptedOracle::new(script(ScriptLabel::Complete), OracleConfig::default(), 1);
        let (out, deg) = decide(&mut o, &request(DialogueState::Listen, 800, 2000), 1500);
        assert!(deg.is_none());
        assert_eq!(out.action, Action::Switch);
        assert_eq!(out.label, UtteranceLabel::Complete);
        assert_eq!(out.response_text.as_deref(), Some("scripted reply"));
        assert_eq!(out.backend_latency_ms, 300);

        let mut o = ScriptedOracle::new(script(ScriptLabel::Backchannel), OracleConfig::default(), 1);
        let (out, _) = decide(&mut o, &request(DialogueState::Speak, 800, 1200), 1500);
        assert_eq!((out.action, out.label, out.response_text), (Action::Continue, UtteranceLabel::Backchannel, None));

        let mut o = ScriptedOracle::new(script(ScriptLabel::Interruption), OracleConfig::default(), 1);
        let (out, _) = decide(&mut o, &request(DialogueState::Speak, 800, 1200), 1500);
        assert_eq!((out.action, out.label), (Action::Switch, UtteranceLabel::Interruption));

        let mut o = ScriptedOracle::new(script(ScriptLabel::Incomplete), OracleConfig::default(), 1);
        let (out, _) = decide(&mut o, &request(DialogueState::Listen, 800, 2000), 1500);
        assert_eq!((out.action, out.label), (Action::Continue, UtteranceLabel::Incomplete));
    }

    #[test]
    fn adversarial_flips_every_label() {
        let cfg = OracleConfig { adversarial: true, ..Default::default() };
        for (label, state, expected) in [
            (ScriptLabel::Complete, DialogueState::Listen, Action::Continue),
            (ScriptLabel::Incomplete, DialogueState::Listen, Action::Switch),
            (ScriptLabel::Backchannel, DialogueState::Speak, Action::Switch),
            (ScriptLabel::Interruption, DialogueState::Speak, Action::Continue),
        ] {
            let mut o = ScriptedOracle::new(script(label), cfg.clone(), 3);
            let (out, deg) = decide(&mut o, &request(state, 900, 1900), 1500);
            assert!(deg.is_none());
            assert_eq!(out.action, expected, "{label:?} in {state}");
        }
    }

    #[test]
    fn missing_label_falls_back() {
        let mut o = ScriptedOracle::new(script(ScriptLabel::Complete), OracleConfig::default(), 1);
        let (out, deg) = decide(&mut o, &request(DialogueState::Listen, 5000, 6000), 1500);
        assert_eq!(out, fallback_outcome(DialogueState::Listen, 300));
        assert_eq!(deg.unwrap().kind, DegradationKind::DecisionFailed);
    }

    #[test]
    fn timeout_falls_back_to_continue() {
        let cfg = OracleConfig { latency_ms: 2000, ..Default::default() };
        let mut o = ScriptedOracle::new(script(ScriptLabel::Complete), cfg, 1);
        let (out, deg) = decide(&mut o, &request(DialogueState::Listen, 800, 2000), 1500);
        assert_eq!((out.action, out.label, out.response_text.clone()), (Action::Continue, UtteranceLabel::Incomplete, None));
        assert_eq!(out.backend_latency_ms, 1500);
        assert_eq!(deg.unwrap().kind, DegradationKind::DecisionTimeout);

        let (out, deg) = decide(&mut Fails(BackendError::Timeout(10), 10), &request(DialogueState::Speak, 0, 1), 1500);
        assert_eq!(out.label, UtteranceLabel::Backchannel);
        assert_eq!(deg.unwrap().kind, DegradationKind::DecisionTimeout);
    }

    #[test]
    fn deferred_timeout_and_disconnect() {
        struct Stall(Option<std::sync::mpsc::Sender<Result<BackendDecision, BackendError>>>);
        impl DecisionBackend for Stall {
            fn decide(&mut self, _: &DecisionRequest, _: &str) -> Reply<BackendDecision> {
                let (tx, rx) = std::sync::mpsc::channel();
                self.0 = Some(tx);
                Reply::Deferred(rx)
            }
        }
        let mut b = Stall(None);
        let (out, deg) = decide(&mut b, &request(DialogueState::Listen, 0, 1), 20);
        assert_eq!(out.action, Action::Continue);
        assert_eq!(deg.unwrap().kind, DegradationKind::DecisionTimeout);
    }

    #[test]
    fn injected_errors_are_seeded() {
        let cfg = OracleConfig { error_rate: 0.5, latency_jitter_ms: 50, ..Default::default() };
        let run = |seed| {
            let mut o = ScriptedOracle::new(script(ScriptLabel::Complete), cfg.clone(), seed);
            (0..50)
                .map(|_| decide(&mut o, &request(DialogueState::Listen, 800, 2000), 1500))
                .map(|(o, d)| (o.action, o.backend_latency_ms, d.is_some()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        let failures = run(9).iter().filter(|r| r.2).count();
        assert!(failures > 10 && failures < 40, "{failures}");
        let mut all_fail = ScriptedOracle::new(script(ScriptLabel::Complete),
            OracleConfig { error_rate: 1.0, ..Default::default() }, 0);
        for _ in 0..20 {
            let (out, _) = decide(&mut all_fail, &request(DialogueState::Listen, 800, 2000), 1500);
            assert_eq!(out.action, Action::Continue);
        }
    }

    #[test]
    fn invalid_label_or_missing_reply_is_malformed() {
        struct Says(BackendDecision);
        impl DecisionBackend for Says {
            fn decide(&mut self, _: &DecisionRequest, _: &str) -> Reply<BackendDecision> {
                Reply::ready(Ok(self.0.clone()), 5)
            }
        }
        let mut b = Says(BackendDecision { label: UtteranceLabel::Backchannel, response_text: None });
        let (out, deg) = decide(&mut b, &request(DialogueState::Listen, 0, 1), 100);
        assert_eq!(out.action, Action::Continue);
        assert_eq!(deg.unwrap().kind, DegradationKind::DecisionMalformed);
        let mut b = Says(BackendDecision { label: UtteranceLabel::Complete, response_text: Some("  ".into()) });
        let (_, deg) = decide(&mut b, &request(DialogueState::Listen, 0, 1), 100);
        assert_eq!(deg.unwrap().kind, DegradationKind::DecisionMalformed);
        // reply text outside Listen/Switch is dropped
        let mut b = Says(BackendDecision { label: UtteranceLabel::Interruption, response_text: Some("x".into()) });
        let (out, deg) = decide(&mut b, &request(DialogueState::Speak, 0, 1), 100);
        assert!(deg.is_none() && out.response_text.is_none());
    }

    #[test]
    fn parses_replies() {
        assert_eq!(
            parse_backend_reply("DECISION: complete\nSure, tomorrow will be sunny.").unwrap(),
            (UtteranceLabel::Complete, "Sure, tomorrow will be sunny.".to_string())
        );
        assert_eq!(
            parse_backend_reply("decision: BACKCHANNEL").unwrap(),
            (UtteranceLabel::Backchannel, String::new())
        );
        assert!(matches!(parse_backend_reply("I think the user is done"), Err(BackendError::Malformed(_))));
        assert!(parse_backend_reply("DECISION: wait").is_err());
        assert!(parse_backend_reply("").is_err());
    }

    #[test]
    fn prompts_embed_context_in_order() {
        let empty = render_prompt(DialogueState::Listen, &[], &[]);
        assert!(empty.contains("DECISION: complete"));
        assert_eq!(empty.matches("(none)").count(), 2);

        let transcripts = vec![TranscriptEntry {
            segment_id: 4, text: "tell me a story".into(), submitted_cycle: 1, completed_at: 900, visible_from_cycle: 2,
        }];
        let history = vec![
            Turn { role: Role::User, text: "hello there".into() },
            Turn { role: Role::Assistant, text: "hi, how can I help".into() },
        ];
        let p = render_prompt(DialogueState::Speak, &transcripts, &history);
        assert!(p.contains("DECISION: interruption"));
        let a = p.find("hello there").unwrap();
        let b = p.find("hi, how can I help").unwrap();
        let c = p.find("tell me a story").unwrap();
        assert!(a < b && b < c);
        assert_eq!(p, render_prompt(DialogueState::Speak, &transcripts, &history));
    }

    #[test]
    fn projection_covers_states() {
        for label in [ScriptLabel::Complete, ScriptLabel::Incomplete, ScriptLabel::Backchannel,
                      ScriptLabel::Interruption, ScriptLabel::NonTarget] {
            for state in [DialogueState::Listen, DialogueState::Speak] {
                assert!(project_label(label, state).valid_in(state));
                assert!(flip(project_label(label, state)).valid_in(state));
            }
        }
    }
}
