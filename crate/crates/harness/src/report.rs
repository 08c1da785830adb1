use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::metrics::MetricsReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "md" | "markdown" => Ok(Self::Markdown),
            other => Err(format!("unknown report format `{other}` (expected json or md)")),
        }
    }
}

pub const COLUMNS: [&str; 4] = [
    "First Response Delay",
    "Interruption Total Score",
    "Rejection Total Score",
    "Total Delay",
];

/// Published challenge results, printed for context only: they were measured
/// on real recordings with judged response quality, which a desk simulation
/// cannot reproduce.
pub const REFERENCE_ROWS: [(&str, Option<f64>, f64, f64, f64); 3] = [
    ("reference: challenge baseline", Some(2.753), 80.2, 45.6, 2.436),
    ("reference: published system (dev)", Some(1.528), 89.7, 50.0, 1.698),
    ("reference: published system (test)", None, 89.7, 57.8, 1.632),
];

fn secs(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |s| format!("{s:.3}s"))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |s| format!("{s:.1}"))
}

/// Markdown table with the reference rows followed by one row per report.
pub fn markdown_table(reports: &[&MetricsReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| System | {} |", COLUMNS.join(" | "));
    let _ = writeln!(out, "|---|---|---|---|---|");
    for (name, frd, int, rej, total) in REFERENCE_ROWS {
        let _ = writeln!(
            out,
            "| {name} | {} | {} | {} | {} |",
            secs(frd),
            pct(Some(int)),
            pct(Some(rej)),
            secs(Some(total))
        );
    }
    for r in reports {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.name,
            secs(r.first_response_delay_s),
            pct(r.interruption_total_score),
            pct(r.rejection_total_score),
            secs(r.total_delay_s)
        );
    }
    out
}

pub fn markdown(reports: &[&MetricsReport]) -> String {
    let mut out = String::from("# Dialogue metrics\n\n");
    out.push_str(&markdown_table(reports));
    out.push_str(
        "\nReference rows are published results on recorded dialogues with judged \
         response quality; simulated rows score behavior only and are not directly \
         comparable. Total Delay here is the mean delay to the first agent audio of \
         every reply, including replies after an interruption.\n",
    );
    for r in reports {
        if r.events.is_empty() {
            continue;
        }
        let _ = writeln!(out, "\n## {}\n", r.name);
        let _ = writeln!(out, "| # | t (ms) | label | expected | observed | met | delay (ms) | credited |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|---|");
        for e in &r.events {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                e.index,
                e.t_ms,
                enum_name(&e.label),
                enum_name(&e.expected),
                enum_name(&e.observed),
                if e.met { "yes" } else { "no" },
                e.response_delay_ms.map_or("-".into(), |d| d.to_string()),
                e.credited.map_or("-", |c| if c { "yes" } else { "no" }),
            );
        }
        let _ = writeln!(out, "\nviolations: {}", r.violations());
    }
    out
}

fn enum_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn render(reports: &[&MetricsReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let text = if let [one] = reports {
                serde_json::to_string_pretty(one)
            } else {
                serde_json::to_string_pretty(reports)
            };
            text.expect("reports serialize") + "\n"
        }
        ReportFormat::Markdown => markdown(reports),
    }
}

pub fn emit_report(report: &MetricsReport, format: ReportFormat, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, render(&[report], format))
}

pub fn emit_comparison(reports: &[&MetricsReport], format: ReportFormat, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, render(reports, format))
}
