use std::path::Path;
use std::time::Instant;

use duplex_core::{Config, SessionTrace};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{compute_metrics, MetricsError, MetricsReport};
use crate::report::{markdown_table, ReportFormat};
use crate::scenario::{Scenario, ScenarioError};
use crate::sim::{simulate, SimError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Simulates and scores one scenario.
pub fn evaluate(scenario: &Scenario, config: &Config) -> Result<(SessionTrace, MetricsReport), HarnessError> {
    let trace = simulate(scenario, config)?;
    let report = compute_metrics(&trace, scenario, config.harness.t_stop_ms)?;
    Ok((trace, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub source: String,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub aggregate: MetricsReport,
    pub scenarios: Vec<BenchEntry>,
    pub wall_ms: u64,
}

impl BenchReport {
    /// Failed scenarios plus scenarios with expectation violations.
    pub fn failures(&self) -> usize {
        self.scenarios
            .iter()
            .filter(|e| e.report.as_ref().is_none_or(|r| r.violations() > 0))
            .count()
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => serde_json::to_string_pretty(self).expect("bench report serializes") + "\n",
            ReportFormat::Markdown => {
                let mut rows: Vec<&MetricsReport> = vec![&self.aggregate];
                rows.extend(self.scenarios.iter().filter_map(|e| e.report.as_ref()));
                let mut out = format!(
                    "# Bench: {} scenarios in {} ms\n\n{}",
                    self.scenarios.len(),
                    self.wall_ms,
                    markdown_table(&rows)
                );
                for e in &self.scenarios {
                    if let Some(err) = &e.error {
                        out.push_str(&format!("\n- {}: {err}", e.source));
                    }
                }
                out.push_str(&format!("\n\nscenarios with violations or errors: {}\n", self.failures()));
                out
            }
        }
    }
}

/// Runs every scenario on its own engine, in parallel.
pub fn bench(scenarios: &[(String, Result<Scenario, String>)], config: &Config) -> BenchReport {
    let started = Instant::now();
    let entries: Vec<BenchEntry> = scenarios
        .par_iter()
        .map(|(source, scenario)| {
            let result = scenario
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|s| evaluate(s, config).map_err(|e| e.to_string()));
            match result {
                Ok((_, report)) => BenchEntry { source: source.clone(), report: Some(report), error: None },
                Err(error) => BenchEntry { source: source.clone(), report: None, error: Some(error) },
            }
        })
        .collect();
    let reports: Vec<MetricsReport> = entries.iter().filter_map(|e| e.report.clone()).collect();
    BenchReport {
        aggregate: MetricsReport::pooled("all scenarios (simulated)", &reports),
        scenarios: entries,
        wall_ms: started.elapsed().as_millis() as u64,
    }
}

/// Loads every `*.toml` scenario in `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> std::io::Result<Vec<(String, Result<Scenario, String>)>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    Ok(paths
        .into_iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            (name, Scenario::load(&p).map_err(|e| e.to_string()))
        })
        .collect())
}
