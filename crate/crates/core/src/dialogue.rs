//! Unit-based listen/speak state machine.
//!
//! A dialogue is a sequence of units. Every unit opens in [`DialogueState::Listen`];
//! a `Switch` in Listen moves to Speak inside the same unit (`l2s`), and a
//! `Switch` in Speak closes the unit and opens the next one in Listen (`s2l`).
//! `Continue` keeps the current state (`kl` / `ks`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ContractViolation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogueState {
    Listen,
    Speak,
}

impl DialogueState {
    pub fn other(self) -> Self {
        match self {
            DialogueState::Listen => DialogueState::Speak,
            DialogueState::Speak => DialogueState::Listen,
        }
    }
}

impl fmt::Display for DialogueState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DialogueState::Listen => f.write_str("listen"),
            DialogueState::Speak => f.write_str("speak"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Continue,
    Switch,
}

/// The four transition kinds: keep-listen, listen-to-speak, keep-speak,
/// speak-to-listen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionKind {
    #[serde(rename = "kl")]
    KeepListen,
    #[serde(rename = "l2s")]
    ListenToSpeak,
    #[serde(rename = "ks")]
    KeepSpeak,
    #[serde(rename = "s2l")]
    SpeakToListen,
}

impl TransitionKind {
    pub const ALL: [TransitionKind; 4] = [
        TransitionKind::KeepListen,
        TransitionKind::ListenToSpeak,
        TransitionKind::KeepSpeak,
        TransitionKind::SpeakToListen,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            TransitionKind::KeepListen => "kl",
            TransitionKind::ListenToSpeak => "l2s",
            TransitionKind::KeepSpeak => "ks",
            TransitionKind::SpeakToListen => "s2l",
        }
    }

    /// State the transition must be taken from.
    pub fn source(self) -> DialogueState {
        match self {
            TransitionKind::KeepListen | TransitionKind::ListenToSpeak => DialogueState::Listen,
            TransitionKind::KeepSpeak | TransitionKind::SpeakToListen => DialogueState::Speak,
        }
    }

    pub fn target(self) -> DialogueState {
        match self {
            TransitionKind::KeepListen | TransitionKind::SpeakToListen => DialogueState::Listen,
            TransitionKind::ListenToSpeak | TransitionKind::KeepSpeak => DialogueState::Speak,
        }
    }

    pub fn is_switch(self) -> bool {
        matches!(
            self,
            TransitionKind::ListenToSpeak | TransitionKind::SpeakToListen
        )
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// What the decision layer concluded about the user's audio.
///
/// `Complete`/`Incomplete` answer the Listen-state question,
/// `Backchannel`/`Interruption` answer the Speak-state question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtteranceLabel {
    Complete,
    Incomplete,
    Backchannel,
    Interruption,
}

impl UtteranceLabel {
    pub fn valid_in(self, state: DialogueState) -> bool {
        match self {
            UtteranceLabel::Complete | UtteranceLabel::Incomplete => state == DialogueState::Listen,
            UtteranceLabel::Backchannel | UtteranceLabel::Interruption => {
                state == DialogueState::Speak
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UtteranceLabel::Complete => "complete",
            UtteranceLabel::Incomplete => "incomplete",
            UtteranceLabel::Backchannel => "backchannel",
            UtteranceLabel::Interruption => "interruption",
        }
    }

    /// The label a decision backend falls back to when it cannot answer.
    pub fn fallback_for(state: DialogueState) -> Self {
        match state {
            DialogueState::Listen => UtteranceLabel::Incomplete,
            DialogueState::Speak => UtteranceLabel::Backchannel,
        }
    }
}

impl fmt::Display for UtteranceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Continue keeps the state, Switch flips it.
pub fn apply_action(state: DialogueState, action: Action) -> (DialogueState, TransitionKind) {
    match (state, action) {
        (DialogueState::Listen, Action::Continue) => {
            (DialogueState::Listen, TransitionKind::KeepListen)
        }
        (DialogueState::Listen, Action::Switch) => {
            (DialogueState::Speak, TransitionKind::ListenToSpeak)
        }
        (DialogueState::Speak, Action::Continue) => (DialogueState::Speak, TransitionKind::KeepSpeak),
        (DialogueState::Speak, Action::Switch) => {
            (DialogueState::Listen, TransitionKind::SpeakToListen)
        }
    }
}

pub fn label_to_action(
    state: DialogueState,
    label: UtteranceLabel,
) -> Result<Action, ContractViolation> {
    if !label.valid_in(state) {
        return Err(ContractViolation::LabelInvalidForState { state, label });
    }
    Ok(match label {
        UtteranceLabel::Incomplete | UtteranceLabel::Backchannel => Action::Continue,
        UtteranceLabel::Complete | UtteranceLabel::Interruption => Action::Switch,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueUnit {
    pub unit_index: u64,
    pub started_at: u64,
    pub transitions: Vec<(u64, TransitionKind)>,
}

impl DialogueUnit {
    fn open(unit_index: u64, started_at: u64) -> Self {
        Self {
            unit_index,
            started_at,
            transitions: Vec::new(),
        }
    }

    /// State implied by the transitions recorded so far in this unit.
    pub fn state(&self) -> DialogueState {
        self.transitions
            .last()
            .map(|(_, kind)| kind.target())
            .unwrap_or(DialogueState::Listen)
    }
}

/// Ordered list of units; the last one is the open unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    units: Vec<DialogueUnit>,
}

impl Default for Dialogue {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Dialogue {
    pub fn new(started_at: u64) -> Self {
        Self {
            units: vec![DialogueUnit::open(0, started_at)],
        }
    }

    pub fn units(&self) -> &[DialogueUnit] {
        &self.units
    }

    pub fn current(&self) -> &DialogueUnit {
        self.units.last().expect("dialogue always has an open unit")
    }

    pub fn state(&self) -> DialogueState {
        self.current().state()
    }

    pub fn unit_index(&self) -> u64 {
        self.current().unit_index
    }

    /// Records `transition` at `now` in the open unit. An `s2l` closes the
    /// unit and opens the next one in Listen at `now`.
    pub fn advance(&mut self, now: u64, transition: TransitionKind) -> Result<(), ContractViolation> {
        let state = self.state();
        if transition.source() != state {
            return Err(ContractViolation::IllegalTransition { state, transition });
        }
        if let Some((last, _)) = self.current().transitions.last() {
            if now < *last {
                return Err(ContractViolation::TimeWentBackwards { last: *last, now });
            }
        }
        if now < self.current().started_at {
            return Err(ContractViolation::TimeWentBackwards {
                last: self.current().started_at,
                now,
            });
        }
        let unit = self.units.last_mut().expect("open unit");
        unit.transitions.push((now, transition));
        if transition == TransitionKind::SpeakToListen {
            let next = unit.unit_index + 1;
            self.units.push(DialogueUnit::open(next, now));
        }
        Ok(())
    }
}
