use duplex_core::clock::Clock;
use duplex_core::config::DecisionBackendKind;
use duplex_core::context::MockAsr;
use duplex_core::decision::{DecisionBackend, HeuristicBackend, ScriptedOracle};
use duplex_core::synth::MockTts;
use duplex_core::{run_session, Backends, Config, EngineSettings, SessionAborted, SessionTrace, SpeakerGate};
use thiserror::Error;

use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("decision backend `{0}` cannot run in simulation")]
    UnsupportedBackend(&'static str),
    #[error(transparent)]
    Aborted(#[from] Box<SessionAborted>),
}

/// Runs `scenario` on the virtual clock with mock backends.
pub fn simulate(scenario: &Scenario, config: &Config) -> Result<SessionTrace, SimError> {
    scenario.validate()?;
    let script = scenario.script_table();
    let decision: Box<dyn DecisionBackend> = match config.decision.backend {
        DecisionBackendKind::Scripted => Box::new(ScriptedOracle::new(
            script.clone(),
            config.decision.oracle(),
            scenario.seed,
        )),
        DecisionBackendKind::Heuristic => Box::new(HeuristicBackend::new(config.decision.latency_ms)),
        DecisionBackendKind::Remote => return Err(SimError::UnsupportedBackend("remote")),
    };
    let sv = config
        .audio
        .sv
        .enabled
        .then(|| SpeakerGate::tone(config.audio.sv.target_hz, config.audio.sv.threshold));
    let backends = Backends::with_energy_vad(
        config,
        sv,
        Box::new(MockAsr::new(Some(script), config.context.latency_ms)),
        decision,
        Box::new(MockTts::new(config.tts.mock())),
    );
    let trace = run_session(
        &scenario.name,
        scenario.frames(&config.harness),
        backends,
        EngineSettings::from_config(config),
        &mut Clock::virtual_clock(),
    )?;
    Ok(trace)
}
