//! Behavioral metrics over a session trace.
//!
//! Every decision cycle is attributed to the scripted event its triggering
//! segment overlaps most (ties to the earlier event). Scores are binary per
//! event:
//!
//! - first response delay: for each `complete` event answered by an l2s,
//!   first agent frame of that reply minus the scripted utterance end;
//! - total delay: the same gap for every reply that produced audio,
//!   including replies that follow an interruption;
//! - interruption score: share of `interruption` events with an attributed
//!   s2l whose playback cancel lands within `t_stop_ms` of the event onset;
//! - rejection score: share of `backchannel` and `non_target` events with no
//!   attributed switch and no attributed cancel.

use std::collections::BTreeMap;

use duplex_core::script::ScriptLabel;
use duplex_core::{SessionTrace, TraceEvent, TransitionKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Expected, Scenario};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("trace does not match script: {0}")]
    Mismatch(String),
}

/// Integer sums behind the report means, so reports pool exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub frd_sum_ms: u64,
    pub frd_count: u64,
    pub total_delay_sum_ms: u64,
    pub total_delay_count: u64,
    pub interruptions_credited: u64,
    pub interruptions: u64,
    pub rejections_credited: u64,
    pub rejections: u64,
    pub violations: u64,
}

impl Totals {
    pub fn add(&mut self, o: &Totals) {
        self.frd_sum_ms += o.frd_sum_ms;
        self.frd_count += o.frd_count;
        self.total_delay_sum_ms += o.total_delay_sum_ms;
        self.total_delay_count += o.total_delay_count;
        self.interruptions_credited += o.interruptions_credited;
        self.interruptions += o.interruptions;
        self.rejections_credited += o.rejections_credited;
        self.rejections += o.rejections;
        self.violations += o.violations;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observed {
    Responded,
    Waited,
    ContinuedSpeaking,
    CancelledAndListened,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventOutcome {
    pub index: usize,
    pub id: Option<String>,
    pub t_ms: u64,
    pub label: ScriptLabel,
    pub expected: Expected,
    pub observed: Observed,
    pub met: bool,
    /// First response delay contribution, if any.
    pub response_delay_ms: Option<u64>,
    /// Interruption or rejection credit, for events that are scored.
    pub credited: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub first_response_delay_s: Option<f64>,
    pub total_delay_s: Option<f64>,
    pub interruption_total_score: Option<f64>,
    pub rejection_total_score: Option<f64>,
    pub totals: Totals,
    pub events: Vec<EventOutcome>,
}

fn mean_s(sum_ms: u64, n: u64) -> Option<f64> {
    (n > 0).then(|| sum_ms as f64 / n as f64 / 1000.0)
}

fn score(credited: u64, n: u64) -> Option<f64> {
    (n > 0).then(|| 100.0 * credited as f64 / n as f64)
}

impl MetricsReport {
    pub fn from_totals(name: impl Into<String>, totals: Totals, events: Vec<EventOutcome>) -> Self {
        Self {
            name: name.into(),
            first_response_delay_s: mean_s(totals.frd_sum_ms, totals.frd_count),
            total_delay_s: mean_s(totals.total_delay_sum_ms, totals.total_delay_count),
            interruption_total_score: score(totals.interruptions_credited, totals.interruptions),
            rejection_total_score: score(totals.rejections_credited, totals.rejections),
            totals,
            events,
        }
    }

    /// Pools several reports as if their events came from one run.
    pub fn pooled(name: impl Into<String>, reports: &[MetricsReport]) -> Self {
        let mut totals = Totals::default();
        for r in reports {
            totals.add(&r.totals);
        }
        Self::from_totals(name, totals, Vec::new())
    }

    pub fn violations(&self) -> u64 {
        self.totals.violations
    }
}

/// Index of the event with the largest positive overlap with `[t0, t1)`.
pub fn attribute(scenario: &Scenario, t0: u64, t1: u64) -> Option<usize> {
    let mut best: Option<(usize, u64)> = None;
    for (i, e) in scenario.events.iter().enumerate() {
        let overlap = e.end_ms().min(t1).saturating_sub(e.t_ms.max(t0));
        if overlap > 0 && best.is_none_or(|(_, b)| overlap > b) {
            best = Some((i, overlap));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Default)]
struct Cycle {
    event: Option<usize>,
    transition: Option<TransitionKind>,
    cancel_t: Option<u64>,
    utterance: Option<u64>,
}

pub fn compute_metrics(
    trace: &SessionTrace,
    scenario: &Scenario,
    t_stop_ms: u64,
) -> Result<MetricsReport, MetricsError> {
    let mut cycles: BTreeMap<u64, Cycle> = BTreeMap::new();
    let mut first_frame: BTreeMap<u64, u64> = BTreeMap::new();
    let mut playbacks: Vec<u64> = Vec::new();
    let known = |cycles: &BTreeMap<u64, Cycle>, c: u64| {
        if cycles.contains_key(&c) {
            Ok(())
        } else {
            Err(MetricsError::Mismatch(format!("cycle {c} was never requested")))
        }
    };
    let limit = scenario.events.last().map_or(0, |e| e.end_ms());
    for r in &trace.records {
        match &r.event {
            TraceEvent::IngressSummary { last_t, .. } if last_t.unwrap_or(0) < limit => {
                return Err(MetricsError::Mismatch(format!(
                    "audio stops at {} before the script ends at {limit}",
                    last_t.unwrap_or(0)
                )));
            }
            TraceEvent::DecisionRequest { cycle, segment_start, segment_end, .. } => {
                cycles.insert(
                    *cycle,
                    Cycle {
                        event: attribute(scenario, *segment_start, *segment_end),
                        ..Default::default()
                    },
                );
            }
            TraceEvent::DecisionOutcome { cycle, .. } => known(&cycles, *cycle)?,
            TraceEvent::Transition { kind, cycle: Some(c), .. } => {
                known(&cycles, *c)?;
                cycles.get_mut(c).expect("known").transition = Some(*kind);
            }
            TraceEvent::PlaybackStart { utterance_id, cycle, .. } => {
                known(&cycles, *cycle)?;
                cycles.get_mut(cycle).expect("known").utterance = Some(*utterance_id);
                playbacks.push(*cycle);
            }
            TraceEvent::PlaybackCancel { cycle, .. } => {
                known(&cycles, *cycle)?;
                cycles.get_mut(cycle).expect("known").cancel_t = Some(r.t);
            }
            TraceEvent::AgentFrame { utterance_id, .. } => {
                first_frame.entry(*utterance_id).or_insert(r.t);
            }
            _ => {}
        }
    }

    let mut totals = Totals::default();
    for cycle in &playbacks {
        let c = &cycles[cycle];
        let (Some(i), Some(u)) = (c.event, c.utterance) else {
            continue;
        };
        if let Some(onset) = first_frame.get(&u) {
            totals.total_delay_sum_ms += onset.saturating_sub(scenario.events[i].end_ms());
            totals.total_delay_count += 1;
        }
    }

    let mut outcomes = Vec::with_capacity(scenario.events.len());
    for (i, e) in scenario.events.iter().enumerate() {
        let mine: Vec<&Cycle> = cycles.values().filter(|c| c.event == Some(i)).collect();
        let has = |k: TransitionKind| mine.iter().any(|c| c.transition == Some(k));
        let switched = has(TransitionKind::ListenToSpeak) || has(TransitionKind::SpeakToListen);
        let cancelled = mine.iter().any(|c| c.cancel_t.is_some());
        let observed = if mine
            .iter()
            .any(|c| c.transition == Some(TransitionKind::SpeakToListen) && c.cancel_t.is_some())
        {
            Observed::CancelledAndListened
        } else if has(TransitionKind::ListenToSpeak) {
            Observed::Responded
        } else if has(TransitionKind::KeepSpeak) {
            Observed::ContinuedSpeaking
        } else if has(TransitionKind::KeepListen) {
            Observed::Waited
        } else {
            Observed::Ignored
        };
        let expected = e.expected();
        let met = match expected {
            Expected::Respond => has(TransitionKind::ListenToSpeak),
            Expected::CancelAndListen => observed == Observed::CancelledAndListened,
            Expected::Wait | Expected::ContinueSpeaking | Expected::Ignore => !switched && !cancelled,
        };
        if !met {
            totals.violations += 1;
        }

        let mut response_delay_ms = None;
        if e.label == ScriptLabel::Complete {
            let answer = mine
                .iter()
                .find(|c| c.transition == Some(TransitionKind::ListenToSpeak));
            if let Some(onset) = answer
                .and_then(|c| c.utterance)
                .and_then(|u| first_frame.get(&u))
            {
                let d = onset.saturating_sub(e.end_ms());
                totals.frd_sum_ms += d;
                totals.frd_count += 1;
                response_delay_ms = Some(d);
            }
        }

        let credited = match e.label {
            ScriptLabel::Interruption => {
                let ok = mine.iter().any(|c| {
                    c.transition == Some(TransitionKind::SpeakToListen)
                        && c.cancel_t.is_some_and(|t| t <= e.t_ms + t_stop_ms)
                });
                totals.interruptions += 1;
                totals.interruptions_credited += u64::from(ok);
                Some(ok)
            }
            ScriptLabel::Backchannel | ScriptLabel::NonTarget => {
                let ok = !switched && !cancelled;
                totals.rejections += 1;
                totals.rejections_credited += u64::from(ok);
                Some(ok)
            }
            ScriptLabel::Complete | ScriptLabel::Incomplete => None,
        };

        outcomes.push(EventOutcome {
            index: i,
            id: e.id.clone(),
            t_ms: e.t_ms,
            label: e.label,
            expected,
            observed,
            met,
            response_delay_ms,
            credited,
        });
    }
    Ok(MetricsReport::from_totals(scenario.name.clone(), totals, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use duplex_core::dialogue::{Action, DialogueState, UtteranceLabel};
    use duplex_core::trace::TransitionCause;

    fn scenario(events: &[(u64, u64, &str)]) -> Scenario {
        let mut text = String::from("name = \"t\"\n");
        for (t, d, label) in events {
            text.push_str(&format!(
                "[[events]]\nt_ms = {t}\nkind = \"user_utterance\"\nduration_ms = {d}\nlabel = \"{label}\"\ntext = \"x\"\n"
            ));
        }
        Scenario::from_toml_str(&text).unwrap()
    }

    fn request(trace: &mut SessionTrace, t: u64, cycle: u64, seg: (u64, u64), state: DialogueState) {
        trace.push(t, TraceEvent::DecisionRequest {
            cycle, state, segment_id: cycle, segment_start: seg.0, segment_end: seg.1, transcripts: 0,
        });
    }

    fn outcome(trace: &mut SessionTrace, t: u64, cycle: u64, action: Action, label: UtteranceLabel, kind: TransitionKind) {
        trace.push(t, TraceEvent::DecisionOutcome { cycle, action, label, response_text: None, latency_ms: 300, fallback: false });
        trace.push(t, TraceEvent::Transition { kind, unit_index: 0, cause: TransitionCause::Decision, cycle: Some(cycle) });
    }

    #[test]
    fn frd_is_first_frame_minus_utterance_end() {
        let s = scenario(&[(1000, 1000, "complete")]);
        let mut trace = SessionTrace::new("t");
        request(&mut trace, 2500, 0, (800, 2000), DialogueState::Listen);
        outcome(&mut trace, 3000, 0, Action::Switch, UtteranceLabel::Complete, TransitionKind::ListenToSpeak);
        trace.push(3000, TraceEvent::PlaybackStart { utterance_id: 0, cycle: 0, text: "hi".into(), first_frame_at: 3500, duration_ms: 100 });
        trace.push(3500, TraceEvent::AgentFrame { utterance_id: 0, index: 0 });
        let m = compute_metrics(&trace, &s, 1000).unwrap();
        assert_eq!(m.first_response_delay_s, Some(1.5));
        assert_eq!(m.total_delay_s, Some(1.5));
        assert_eq!(m.interruption_total_score, None);
        assert_eq!(m.rejection_total_score, None);
        assert!(m.events[0].met);
    }

    #[test]
    fn interruption_credit_needs_timely_cancel() {
        let s = scenario(&[(4000, 800, "interruption")]);
        for (cancel_at, credited) in [(4300, true), (5000, true), (5001, false)] {
            let mut trace = SessionTrace::new("t");
            request(&mut trace, 4160, 3, (3800, 4160), DialogueState::Speak);
            trace.push(cancel_at, TraceEvent::PlaybackCancel { utterance_id: 0, cycle: 3, emitted_ms: 0 });
            outcome(&mut trace, cancel_at, 3, Action::Switch, UtteranceLabel::Interruption, TransitionKind::SpeakToListen);
            let m = compute_metrics(&trace, &s, 1000).unwrap();
            assert_eq!(m.events[0].credited, Some(credited), "cancel at {cancel_at}");
            assert_eq!(m.events[0].observed, Observed::CancelledAndListened);
        }
    }

    #[test]
    fn rejection_credit_and_ignore() {
        let s = scenario(&[(1000, 300, "backchannel"), (3000, 500, "non_target")]);
        let mut trace = SessionTrace::new("t");
        request(&mut trace, 1800, 0, (800, 1300), DialogueState::Listen);
        outcome(&mut trace, 2100, 0, Action::Continue, UtteranceLabel::Incomplete, TransitionKind::KeepListen);
        let m = compute_metrics(&trace, &s, 1000).unwrap();
        assert_eq!(m.rejection_total_score, Some(100.0));
        assert_eq!(m.events[0].observed, Observed::Waited);
        assert_eq!(m.events[1].observed, Observed::Ignored);

        request(&mut trace, 3500, 1, (2800, 3500), DialogueState::Listen);
        outcome(&mut trace, 3800, 1, Action::Switch, UtteranceLabel::Complete, TransitionKind::ListenToSpeak);
        let m = compute_metrics(&trace, &s, 1000).unwrap();
        assert_eq!(m.rejection_total_score, Some(50.0));
        assert_eq!(m.violations(), 1);
    }

    #[test]
    fn empty_trace_reports_absent_means() {
        let m = compute_metrics(&SessionTrace::new("t"), &scenario(&[]), 1000).unwrap();
        assert_eq!(
            (m.first_response_delay_s, m.total_delay_s, m.interruption_total_score, m.rejection_total_score),
            (None, None, None, None)
        );
    }

    #[test]
    fn mismatched_traces_are_refused() {
        let mut trace = SessionTrace::new("t");
        outcome(&mut trace, 10, 9, Action::Continue, UtteranceLabel::Incomplete, TransitionKind::KeepListen);
        assert!(compute_metrics(&trace, &scenario(&[]), 1000).is_err());
        let mut short = SessionTrace::new("t");
        short.push(1000, TraceEvent::IngressSummary { frames: 50, first_t: Some(0), last_t: Some(1000) });
        assert!(compute_metrics(&short, &scenario(&[(1000, 1000, "complete")]), 1000).is_err());
    }

    #[test]
    fn pooling_weights_by_event() {
        let a = MetricsReport::from_totals("a", Totals { interruptions: 1, interruptions_credited: 1, ..Default::default() }, vec![]);
        let b = MetricsReport::from_totals("b", Totals { interruptions: 3, ..Default::default() }, vec![]);
        assert_eq!(MetricsReport::pooled("all", &[a, b]).interruption_total_score, Some(25.0));
    }
}
