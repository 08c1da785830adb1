//! Ground truth for simulated backends.
//!
//! Mock ASR and the scripted decision oracle need to know what a segment
//! "says". They find it by time: the scripted utterance overlapping the
//! segment the most.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptLabel {
    Complete,
    Incomplete,
    Backchannel,
    Interruption,
    NonTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedUtterance {
    pub id: Option<String>,
    pub t_start: u64,
    pub t_end: u64,
    pub label: ScriptLabel,
    pub text: String,
    pub reply: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptTable {
    entries: Vec<ScriptedUtterance>,
}

impl ScriptTable {
    pub fn new(mut entries: Vec<ScriptedUtterance>) -> Self {
        entries.sort_by_key(|e| (e.t_start, e.t_end));
        Self { entries }
    }

    pub fn entries(&self) -> &[ScriptedUtterance] {
        &self.entries
    }

    /// Entry with the largest positive overlap with `[t_start, t_end)`;
    /// ties go to the earlier entry.
    pub fn lookup(&self, t_start: u64, t_end: u64) -> Option<&ScriptedUtterance> {
        let mut best: Option<(&ScriptedUtterance, u64)> = None;
        for e in &self.entries {
            let overlap = e.t_end.min(t_end).saturating_sub(e.t_start.max(t_start));
            if overlap > 0 && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((e, overlap));
            }
        }
        best.map(|(e, _)| e)
    }

    pub fn by_id(&self, id: &str) -> Option<&ScriptedUtterance> {
        self.entries.iter().find(|e| e.id.as_deref() == Some(id))
    }
}
