//! One live session: handshake, socket pumps and the paced engine thread.
//!
//! The engine consumes exactly one user frame per 20 ms of wall time from a
//! jitter buffer and substitutes silence when the client falls behind, so
//! frame timestamps stay contiguous on the session clock.

use std::sync::atomic::Ordering;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket};
use duplex_core::audio::{AudioFrame, Source, FRAME_BYTES, FRAME_MS};
use duplex_core::config::{AsrBackendKind, DecisionBackendKind, TtsBackendKind};
use duplex_core::context::{AsrBackend, MockAsr};
use duplex_core::decision::{DecisionBackend, HeuristicBackend};
use duplex_core::synth::{MockTts, TtsBackend};
use duplex_core::{Backends, Config, Engine, EngineOutput, EngineSettings, SpeakerGate};
use duplex_remote::{RemoteAsr, RemoteDecision, RemoteTts};
use futures::stream::{SplitSink, SplitStream};
use futures::{SinkExt, StreamExt};
use tokio::sync::{oneshot, watch};

use crate::buffers::{Inbound, Outbox, Outgoing};
use crate::protocol::{ByeReason, ClientMessage, Envelope, ErrorCode, ServerMessage, SvProfile};
use crate::Shared;

fn error(t_ms: u64, code: ErrorCode, message: impl Into<String>) -> Envelope {
    Envelope::new(
        t_ms,
        ServerMessage::Error {
            code,
            message: message.into(),
        },
    )
}

/// Live backends for `config`. Without a script the scripted oracle has
/// nothing to read, so live sessions fall back to the heuristic backend.
pub fn live_backends(config: &Config, sv: Option<SvProfile>) -> Result<Backends, String> {
    let asr: Box<dyn AsrBackend> = match config.context.backend {
        AsrBackendKind::Mock => Box::new(MockAsr::new(None, config.context.latency_ms)),
        AsrBackendKind::Remote => Box::new(RemoteAsr::from_config(&config.context).map_err(|e| e.to_string())?),
    };
    let decision: Box<dyn DecisionBackend> = match config.decision.backend {
        DecisionBackendKind::Scripted | DecisionBackendKind::Heuristic => {
            Box::new(HeuristicBackend::new(config.decision.latency_ms))
        }
        DecisionBackendKind::Remote => {
            Box::new(RemoteDecision::from_config(&config.decision).map_err(|e| e.to_string())?)
        }
    };
    let tts: Box<dyn TtsBackend> = match config.tts.backend {
        TtsBackendKind::Mock => Box::new(MockTts::new(config.tts.mock())),
        TtsBackendKind::Remote => Box::new(RemoteTts::from_config(&config.tts).map_err(|e| e.to_string())?),
    };
    let sv = sv
        .filter(|_| config.audio.sv.enabled)
        .map(|p| SpeakerGate::tone(p.target_hz, p.threshold));
    Ok(Backends::with_energy_vad(config, sv, asr, decision, tts))
}

async fn send_now(sink: &mut SplitSink<WebSocket, Message>, envelope: Envelope) {
    let _ = sink.send(Message::Text(envelope.to_json().into())).await;
}

async fn reject(mut sink: SplitSink<WebSocket, Message>, envelope: Envelope) {
    send_now(&mut sink, envelope).await;
    let _ = sink.send(Message::Close(None)).await;
}

struct Accepted {
    config: Config,
    sv: Option<SvProfile>,
}

async fn handshake(
    stream: &mut SplitStream<WebSocket>,
    shared: &Shared,
) -> Result<Accepted, Envelope> {
    let wait = Duration::from_millis(shared.config.gateway.idle_timeout_ms);
    let first = match tokio::time::timeout(wait, stream.next()).await {
        Ok(Some(Ok(m))) => m,
        _ => return Err(error(0, ErrorCode::Protocol, "expected hello")),
    };
    let Message::Text(text) = first else {
        return Err(error(0, ErrorCode::Protocol, "first message must be hello"));
    };
    let Ok(ClientMessage::Hello {
        sample_rate,
        sv_profile,
        config,
    }) = serde_json::from_str::<ClientMessage>(&text)
    else {
        return Err(error(0, ErrorCode::Protocol, "first message must be hello"));
    };
    if sample_rate != 16_000 {
        return Err(error(
            0,
            ErrorCode::UnsupportedRate,
            format!("sample_rate {sample_rate} unsupported, use 16000"),
        ));
    }
    let config = match config {
        Some(overrides) => shared
            .config
            .with_overrides(&overrides)
            .map_err(|e| error(0, ErrorCode::BadConfig, e.to_string()))?,
        None => shared.config.clone(),
    };
    Ok(Accepted {
        config,
        sv: sv_profile,
    })
}

struct SessionGuard(Arc<Shared>);

impl Drop for SessionGuard {
    fn drop(&mut self) {
        self.0.sessions.fetch_sub(1, Ordering::SeqCst);
    }
}

pub(crate) async fn run(socket: WebSocket, shared: Arc<Shared>, mut shutdown: watch::Receiver<bool>) {
    let (mut sink, mut stream) = socket.split();
    let accepted = match handshake(&mut stream, &shared).await {
        Ok(a) => a,
        Err(e) => return reject(sink, e).await,
    };
    let backends = match live_backends(&accepted.config, accepted.sv) {
        Ok(b) => b,
        Err(e) => return reject(sink, error(0, ErrorCode::BadConfig, e)).await,
    };
    shared.sessions.fetch_add(1, Ordering::SeqCst);
    let _guard = SessionGuard(shared.clone());

    let config = accepted.config;
    let session_id = uuid::Uuid::new_v4().to_string();
    let started = Instant::now();
    let elapsed = move || started.elapsed().as_millis() as u64;
    let outbox = Arc::new(Outbox::new(config.gateway.outbound_audio_frames));
    let inbound = Arc::new(Mutex::new(Inbound::new(
        (config.gateway.inbound_buffer_ms / FRAME_MS) as usize,
    )));
    let stop: Arc<Mutex<Option<ByeReason>>> = Arc::new(Mutex::new(None));
    let request_stop = |reason| {
        stop.lock().expect("stop flag poisoned").get_or_insert(reason);
    };

    outbox.text(Envelope::new(
        0,
        ServerMessage::Ready {
            session_id: session_id.clone(),
            config: Box::new(config.clone()),
        },
    ));
    outbox.text(Envelope::new(
        0,
        ServerMessage::State {
            state: duplex_core::DialogueState::Listen,
            unit: 0,
        },
    ));
    tracing::info!(session = %session_id, "session ready");

    let writer = tokio::spawn({
        let outbox = outbox.clone();
        async move {
            loop {
                let items = outbox.take();
                if items.is_empty() {
                    outbox.wait().await;
                    continue;
                }
                for item in items {
                    let msg = match item {
                        Outgoing::Text(e) => Message::Text(e.to_json().into()),
                        Outgoing::Audio(bytes) => Message::Binary(bytes.into()),
                        Outgoing::Close => {
                            let _ = sink.send(Message::Close(None)).await;
                            return;
                        }
                    };
                    if sink.send(msg).await.is_err() {
                        return;
                    }
                }
            }
        }
    });

    let (done_tx, mut done_rx) = oneshot::channel();
    let engine_thread = {
        let (inbound, outbox, stop) = (inbound.clone(), outbox.clone(), stop.clone());
        let session_id = session_id.clone();
        thread::Builder::new()
            .name(format!("session-{session_id}"))
            .spawn(move || {
                engine_loop(&session_id, &config, backends, &inbound, &outbox, &stop, started);
                let _ = done_tx.send(());
            })
            .expect("spawn session thread")
    };

    loop {
        tokio::select! {
            _ = &mut done_rx => break,
            _ = shutdown.changed() => {
                request_stop(ByeReason::Shutdown);
                break;
            }
            msg = stream.next() => match msg {
                Some(Ok(Message::Binary(bytes))) => {
                    if bytes.len() != FRAME_BYTES {
                        outbox.text(error(
                            elapsed(),
                            ErrorCode::BadFrame,
                            format!("frame has {} bytes, expected {FRAME_BYTES}", bytes.len()),
                        ));
                        continue;
                    }
                    let dropped = inbound.lock().expect("inbound poisoned").push(bytes.to_vec());
                    if dropped > 0 {
                        outbox.text(Envelope::new(elapsed(), ServerMessage::Overrun { dropped_frames: dropped }));
                    }
                }
                Some(Ok(Message::Text(text))) => match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(ClientMessage::Bye) => {
                        request_stop(ByeReason::Client);
                        break;
                    }
                    Ok(ClientMessage::Hello { .. }) => {
                        outbox.text(error(elapsed(), ErrorCode::Protocol, "duplicate hello"));
                    }
                    Err(e) => outbox.text(error(elapsed(), ErrorCode::BadMessage, e.to_string())),
                },
                Some(Ok(Message::Ping(_) | Message::Pong(_))) => {}
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => {
                    request_stop(ByeReason::Client);
                    break;
                }
            }
        }
    }
    let _ = tokio::task::spawn_blocking(move || engine_thread.join()).await;
    let _ = writer.await;
    tracing::info!(session = %session_id, "session closed");
}

fn forward(outbox: &Outbox, outputs: Vec<EngineOutput>) {
    for out in outputs {
        match out {
            EngineOutput::Record(r) => {
                for e in crate::protocol::publish(&r) {
                    outbox.text(e);
                }
            }
            EngineOutput::Audio { frame, .. } => outbox.push(Outgoing::Audio(frame.to_le_bytes())),
        }
    }
}

fn engine_loop(
    session_id: &str,
    config: &Config,
    backends: Backends,
    inbound: &Mutex<Inbound>,
    outbox: &Outbox,
    stop: &Mutex<Option<ByeReason>>,
    started: Instant,
) {
    let settings = EngineSettings {
        collect_outputs: true,
        ..EngineSettings::from_config(config)
    };
    let mut engine = Engine::new(session_id, settings, backends, 0);
    let idle_ms = config.gateway.idle_timeout_ms;
    let mut last_heard = 0;
    let mut n: u64 = 0;
    let reason = loop {
        if let Some(r) = *stop.lock().expect("stop flag poisoned") {
            break r;
        }
        let due = started + Duration::from_millis((n + 1) * FRAME_MS);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
        let t = n * FRAME_MS;
        let bytes = inbound.lock().expect("inbound poisoned").pop();
        let frame = match bytes {
            Some(b) => {
                last_heard = t;
                AudioFrame::from_le_bytes(&b, t, Source::User).expect("frame size checked on ingest")
            }
            None => AudioFrame::silence(t, Source::User),
        };
        if let Err(e) = engine.push_frame(frame) {
            outbox.text(error(engine.now(), ErrorCode::Internal, e.to_string()));
            break ByeReason::Error;
        }
        forward(outbox, engine.drain_outputs());
        n += 1;
        if t - last_heard >= idle_ms {
            break ByeReason::Idle;
        }
    };
    let _ = engine.finish_input();
    forward(outbox, engine.drain_outputs());
    let t_ms = engine.now();
    let stats = engine.stats();
    drop(engine.close());
    outbox.text(Envelope::new(t_ms, ServerMessage::Bye { reason, stats }));
    outbox.push(Outgoing::Close);
}
