#![allow(dead_code)]

pub mod oracle;

use duplex_harness::Scenario;
use oracle::OracleEvent;

fn name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).unwrap().as_str().unwrap().to_string()
}

pub fn oracle_events(s: &Scenario) -> Vec<OracleEvent> {
    s.events
        .iter()
        .map(|e| OracleEvent {
            t_ms: e.t_ms,
            end_ms: e.t_ms + e.duration_ms,
            label: name(&e.label),
            expected: name(&e.expected.unwrap_or(duplex_harness::Expected::for_label(e.label))),
        })
        .collect()
}
