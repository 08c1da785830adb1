//! Full-duplex spoken dialogue engine.
//!
//! A session alternates between listening and speaking. Each unit starts in
//! Listen and ends with a speak-to-listen switch; within a unit the decision
//! backend picks one of four labels that both classify the user's speech and
//! fix the next action.

pub mod audio;
pub mod backend;
pub mod clock;
pub mod config;
pub mod context;
pub mod decision;
pub mod dialogue;
pub mod engine;
pub mod error;
pub mod script;
pub mod synth;
pub mod trace;

pub use backend::Reply;
pub use config::Config;
pub use dialogue::{Action, Dialogue, DialogueState, TransitionKind, UtteranceLabel};
pub use engine::{run_session, Backends, Engine, EngineOutput, EngineSettings, SessionAborted, SpeakerGate};
pub use error::{BackendError, ContractViolation};
pub use trace::{SessionTrace, TraceEvent, TraceRecord};
