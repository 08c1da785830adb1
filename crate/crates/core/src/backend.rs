use std::sync::mpsc::Receiver;

use crate::error::BackendError;

/// Result of handing work to a pluggable backend.
///
/// Simulated backends answer immediately and state how long the work would
/// have taken; the engine applies the result that much later on its clock.
/// Backends doing real I/O hand back a channel and the engine polls it.
#[derive(Debug)]
pub enum Reply<T> {
    Ready {
        result: Result<T, BackendError>,
        latency_ms: u64,
    },
    Deferred(Receiver<Result<T, BackendError>>),
}

impl<T> Reply<T> {
    pub fn ready(result: Result<T, BackendError>, latency_ms: u64) -> Self {
        Reply::Ready { result, latency_ms }
    }
}
