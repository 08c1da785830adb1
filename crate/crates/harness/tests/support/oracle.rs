//! Brute-force reimplementation of the behavioral metrics. Works on the raw
//! JSONL trace and re-scans it for every question it asks.

#![allow(dead_code)]

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEvent {
    pub t_ms: u64,
    pub end_ms: u64,
    pub label: String,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub first_response_delay_s: Option<f64>,
    pub total_delay_s: Option<f64>,
    pub interruption_total_score: Option<f64>,
    pub rejection_total_score: Option<f64>,
    pub credited: Vec<Option<bool>>,
    pub violations: u64,
}

fn records(jsonl: &str) -> Vec<Value> {
    jsonl
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("trace line is json"))
        .collect()
}

fn u(v: &Value, key: &str) -> u64 {
    v[key].as_u64().unwrap_or_else(|| panic!("{key} missing in {v}"))
}

fn is(v: &Value, ty: &str) -> bool {
    v["type"] == ty
}

fn overlap(a0: u64, a1: u64, b0: u64, b1: u64) -> u64 {
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    hi.saturating_sub(lo)
}

/// Event owning a decision request: strictly largest overlap, first wins ties.
fn owner(events: &[OracleEvent], s0: u64, s1: u64) -> Option<usize> {
    let overlaps: Vec<u64> = events.iter().map(|e| overlap(e.t_ms, e.end_ms, s0, s1)).collect();
    let best = *overlaps.iter().max()?;
    if best == 0 {
        return None;
    }
    overlaps.iter().position(|o| *o == best)
}

fn cycles_of(recs: &[Value], events: &[OracleEvent], i: usize) -> Vec<u64> {
    recs.iter()
        .filter(|r| is(r, "decision_request"))
        .filter(|r| owner(events, u(r, "segment_start"), u(r, "segment_end")) == Some(i))
        .map(|r| u(r, "cycle"))
        .collect()
}

fn transition_of(recs: &[Value], cycle: u64) -> Option<String> {
    recs.iter()
        .filter(|r| is(r, "transition") && r["cycle"].as_u64() == Some(cycle))
        .map(|r| r["kind"].as_str().unwrap().to_string())
        .next_back()
}

fn cancel_time(recs: &[Value], cycle: u64) -> Option<u64> {
    recs.iter()
        .filter(|r| is(r, "playback_cancel") && u(r, "cycle") == cycle)
        .map(|r| u(r, "t"))
        .next_back()
}

fn utterance_of(recs: &[Value], cycle: u64) -> Option<u64> {
    recs.iter()
        .filter(|r| is(r, "playback_start") && u(r, "cycle") == cycle)
        .map(|r| u(r, "utterance_id"))
        .next_back()
}

fn first_frame(recs: &[Value], utterance: u64) -> Option<u64> {
    recs.iter()
        .filter(|r| is(r, "agent_frame") && u(r, "utterance_id") == utterance)
        .map(|r| u(r, "t"))
        .min()
}

pub fn oracle_metrics(jsonl: &str, events: &[OracleEvent], t_stop_ms: u64) -> OracleReport {
    let recs = records(jsonl);

    let (mut frd_sum, mut frd_n) = (0u64, 0u64);
    let (mut tot_sum, mut tot_n) = (0u64, 0u64);
    let (mut int_ok, mut int_n) = (0u64, 0u64);
    let (mut rej_ok, mut rej_n) = (0u64, 0u64);
    let mut credited = Vec::new();
    let mut violations = 0;

    // every reply that produced audio
    for r in recs.iter().filter(|r| is(r, "playback_start")) {
        let cycle = u(r, "cycle");
        let Some(req) = recs
            .iter()
            .find(|q| is(q, "decision_request") && u(q, "cycle") == cycle)
        else {
            continue;
        };
        let Some(i) = owner(events, u(req, "segment_start"), u(req, "segment_end")) else {
            continue;
        };
        if let Some(onset) = first_frame(&recs, u(r, "utterance_id")) {
            tot_sum += onset.saturating_sub(events[i].end_ms);
            tot_n += 1;
        }
    }

    for (i, e) in events.iter().enumerate() {
        let cycles = cycles_of(&recs, events, i);
        let kinds: Vec<String> = cycles.iter().filter_map(|c| transition_of(&recs, *c)).collect();
        let any_cancel = cycles.iter().any(|c| cancel_time(&recs, *c).is_some());
        let any_switch = kinds.iter().any(|k| k == "l2s" || k == "s2l");
        let cancel_and_listen = cycles
            .iter()
            .any(|c| transition_of(&recs, *c).as_deref() == Some("s2l") && cancel_time(&recs, *c).is_some());

        let met = match e.expected.as_str() {
            "respond" => kinds.iter().any(|k| k == "l2s"),
            "cancel_and_listen" => cancel_and_listen,
            _ => !any_switch && !any_cancel,
        };
        if !met {
            violations += 1;
        }

        if e.label == "complete" {
            let first_l2s = cycles
                .iter()
                .copied()
                .filter(|c| transition_of(&recs, *c).as_deref() == Some("l2s"))
                .min();
            if let Some(onset) = first_l2s
                .and_then(|c| utterance_of(&recs, c))
                .and_then(|uid| first_frame(&recs, uid))
            {
                frd_sum += onset.saturating_sub(e.end_ms);
                frd_n += 1;
            }
        }

        credited.push(match e.label.as_str() {
            "interruption" => {
                let ok = cycles.iter().any(|c| {
                    transition_of(&recs, *c).as_deref() == Some("s2l")
                        && cancel_time(&recs, *c).is_some_and(|t| t <= e.t_ms + t_stop_ms)
                });
                int_n += 1;
                int_ok += ok as u64;
                Some(ok)
            }
            "backchannel" | "non_target" => {
                let ok = !any_switch && !any_cancel;
                rej_n += 1;
                rej_ok += ok as u64;
                Some(ok)
            }
            _ => None,
        });
    }

    let mean = |s: u64, n: u64| if n == 0 { None } else { Some(s as f64 / n as f64 / 1000.0) };
    let pct = |k: u64, n: u64| if n == 0 { None } else { Some(100.0 * k as f64 / n as f64) };
    OracleReport {
        first_response_delay_s: mean(frd_sum, frd_n),
        total_delay_s: mean(tot_sum, tot_n),
        interruption_total_score: pct(int_ok, int_n),
        rejection_total_score: pct(rej_ok, rej_n),
        credited,
        violations,
    }
}
