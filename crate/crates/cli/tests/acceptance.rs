//! Acceptance gate: one PASS/FAIL line per primary criterion.
//!
//! Lines go straight to stdout so they show up even when the harness
//! captures test output.

#[path = "../../harness/tests/support/oracle.rs"]
mod oracle;

use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use duplex_core::audio::{SpeechSegment, FRAME_MS};
use duplex_core::context::{AsrBackend, ContextModule};
use duplex_core::dialogue::{apply_action, label_to_action};
use duplex_core::{
    Action, BackendError, Config, Dialogue, DialogueState, Reply, SessionTrace, TraceEvent, TransitionKind,
    UtteranceLabel,
};
use duplex_gateway::Gateway;
use duplex_harness::metrics::Totals;
use duplex_harness::{bench, evaluate, generate, simulate, Expected, GenOptions, MetricsReport, Mix, Scenario};
use futures::{SinkExt, StreamExt};
use oracle::{oracle_metrics, OracleEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1

fn state_machine() -> Check {
    use Action::*;
    use DialogueState::*;
    use TransitionKind::*;
    let table = [
        ((Listen, Continue), (Listen, KeepListen)),
        ((Listen, Switch), (Speak, ListenToSpeak)),
        ((Speak, Continue), (Speak, KeepSpeak)),
        ((Speak, Switch), (Listen, SpeakToListen)),
    ];
    for ((s, a), want) in table {
        ensure(apply_action(s, a) == want, || format!("({s:?}, {a:?}) gave {:?}", apply_action(s, a)))?;
    }
    let labels = [
        UtteranceLabel::Complete,
        UtteranceLabel::Incomplete,
        UtteranceLabel::Backchannel,
        UtteranceLabel::Interruption,
    ];
    for s in [Listen, Speak] {
        for l in labels {
            let got = label_to_action(s, l).ok();
            let want = match (s, l) {
                (Listen, UtteranceLabel::Complete) | (Speak, UtteranceLabel::Interruption) => Some(Switch),
                (Listen, UtteranceLabel::Incomplete) | (Speak, UtteranceLabel::Backchannel) => Some(Continue),
                _ => None,
            };
            ensure(got == want, || format!("label {l} in {s:?} gave {got:?}"))?;
        }
        for k in TransitionKind::ALL {
            let mut d = Dialogue::new(0);
            if s == Speak {
                d.advance(0, ListenToSpeak).unwrap();
            }
            let legal = d.advance(1, k).is_ok();
            ensure(legal == (k.source() == s), || format!("{k} accepted={legal} in {s:?}"))?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seq in 0..1000 {
        let mut d = Dialogue::new(0);
        let mut s2l = 0;
        for step in 0..rng.random_range(0..200u64) {
            let action = if rng.random_bool(0.5) { Switch } else { Continue };
            let (next, kind) = apply_action(d.state(), action);
            d.advance(step * 20, kind).map_err(|e| format!("sequence {seq}: {e}"))?;
            s2l += u64::from(kind == SpeakToListen);
            ensure(d.state() == next, || format!("sequence {seq}: state drift"))?;
        }
        ensure(d.unit_index() == s2l, || {
            format!("sequence {seq}: unit_index {} but {s2l} s2l", d.unit_index())
        })?;
    }
    Ok("4 (state, action) pairs, 8 (state, label) pairs, 1000 random sequences".into())
}

// 2

struct Chan(mpsc::Receiver<mpsc::Receiver<Result<String, BackendError>>>);

impl AsrBackend for Chan {
    fn transcribe(&mut self, _: &SpeechSegment) -> Reply<String> {
        Reply::Deferred(self.0.recv().expect("receiver queued"))
    }
}

fn segment(id: u64) -> SpeechSegment {
    SpeechSegment {
        segment_id: id,
        frames: vec![],
        t_start: id * 100,
        t_end: id * 100 + 60,
        sv_score: None,
        accepted: true,
    }
}

fn causality() -> Check {
    let mut violations = 0;
    let mut snapshots = 0;
    for seed in 0..500 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (feed, rx) = mpsc::channel();
        let mut ctx = ContextModule::new(Box::new(Chan(rx)));
        let mut pending: Vec<mpsc::Sender<Result<String, BackendError>>> = Vec::new();
        let (mut cycle, mut now, mut next_seg) = (0u64, 0u64, 0u64);
        for _ in 0..rng.random_range(5..60) {
            now += rng.random_range(0..50);
            match rng.random_range(0..5) {
                0 | 1 => {
                    let (tx, job_rx) = mpsc::channel();
                    feed.send(job_rx).unwrap();
                    ctx.submit(&segment(next_seg), cycle, now).unwrap();
                    next_seg += 1;
                    pending.push(tx);
                }
                2 if !pending.is_empty() => {
                    let i = rng.random_range(0..pending.len());
                    let _ = pending.swap_remove(i).send(Ok(format!("t{i}")));
                    ctx.poll(now);
                }
                3 => cycle += 1,
                _ => {
                    ctx.poll(now);
                    snapshots += 1;
                    let snap = ctx.snapshot(cycle, now);
                    violations += snap.iter().filter(|e| e.submitted_cycle >= cycle).count();
                }
            }
        }
    }

    // the engine never hands a decision more transcripts than were finished
    // in earlier cycles
    let config = Config::default();
    let mut requests = 0;
    for seed in 0..100 {
        let s = generate("causal", seed, &GenOptions::new(&config, 6));
        let trace = simulate(&s, &config).map_err(|e| e.to_string())?;
        let mut submitted: HashMap<u64, u64> = HashMap::new();
        let mut done: Vec<u64> = Vec::new();
        for r in &trace.records {
            match &r.event {
                TraceEvent::AsrSubmit { segment_id, cycle } => {
                    submitted.insert(*segment_id, *cycle);
                }
                TraceEvent::AsrComplete { segment_id, .. } => done.push(submitted[segment_id]),
                TraceEvent::DecisionRequest { cycle, transcripts, .. } => {
                    requests += 1;
                    let eligible = done.iter().filter(|c| *c < cycle).count();
                    if *transcripts > eligible {
                        violations += 1;
                    }
                }
                _ => {}
            }
        }
    }
    ensure(violations == 0, || format!("{violations} transcripts visible in their submission cycle"))?;
    Ok(format!("500 interleavings ({snapshots} snapshots), {requests} engine requests, 0 violations"))
}

// 3

fn barge_in() -> Check {
    let mut cancels = 0;
    let mut worst = 0i64;
    for seed in 0..200u64 {
        let mut config = Config::default();
        config.decision.latency_jitter_ms = (seed % 5) * 50;
        let mut opts = GenOptions::new(&config, 3);
        opts.mix = Mix::interruptions_only();
        let s = generate("barge", seed, &opts);
        let trace = simulate(&s, &config).map_err(|e| e.to_string())?;

        let mut trigger_at: HashMap<u64, u64> = HashMap::new();
        let mut cycle_seg: HashMap<u64, u64> = HashMap::new();
        let mut latency: HashMap<u64, u64> = HashMap::new();
        let mut cancelled: HashMap<u64, u64> = HashMap::new();
        for r in &trace.records {
            match &r.event {
                TraceEvent::OverlapTrigger { segment_id } => {
                    trigger_at.insert(*segment_id, r.t);
                }
                TraceEvent::DecisionRequest { cycle, segment_id, .. } => {
                    cycle_seg.insert(*cycle, *segment_id);
                }
                TraceEvent::DecisionOutcome { cycle, latency_ms, .. } => {
                    latency.insert(*cycle, *latency_ms);
                }
                TraceEvent::PlaybackCancel { utterance_id, cycle, .. } => {
                    cancels += 1;
                    cancelled.insert(*utterance_id, r.t);
                    let trig = trigger_at[&cycle_seg[cycle]];
                    let slack = r.t as i64 - trig as i64 - latency[cycle] as i64;
                    worst = worst.max(slack);
                    ensure(slack <= 20, || {
                        format!("seed {seed}: cancel {} ms after trigger, latency {}", r.t - trig, latency[cycle])
                    })?;
                }
                TraceEvent::AgentFrame { utterance_id, .. } => {
                    if let Some(at) = cancelled.get(utterance_id) {
                        return Err(format!("seed {seed}: frame of utterance {utterance_id} at {} after cancel at {at}", r.t));
                    }
                }
                _ => {}
            }
        }
        let interruptions = s.events.iter().filter(|e| e.expected() == Expected::CancelAndListen).count();
        ensure(cancelled.len() == interruptions, || {
            format!("seed {seed}: {} cancels for {interruptions} interruptions", cancelled.len())
        })?;
    }
    Ok(format!("200 scenarios, {cancels} cancels, worst slack {worst} ms (bound 20)"))
}

// 4

fn one_turn(config: &Config) -> Result<Option<f64>, String> {
    let s = Scenario::from_toml_str(
        "name = \"turn\"\n[[events]]\nt_ms = 1000\nkind = \"user_utterance\"\nduration_ms = 1200\n\
         label = \"complete\"\ntext = \"hi\"\nreply = \"hello there\"\n",
    )
    .map_err(|e| e.to_string())?;
    let (_, r) = evaluate(&s, config).map_err(|e| e.to_string())?;
    Ok(r.first_response_delay_s)
}

fn latency_decomposition() -> Check {
    let mut config = Config::default();
    config.audio.min_silence_ms = 500;
    config.decision.latency_ms = 300;
    config.tts.first_chunk_latency_ms = 150;
    let frd = one_turn(&config)?.ok_or("no response")?;
    ensure((frd - 0.950).abs() <= 0.001, || format!("FRD {frd} s"))?;
    for s in [300, 500, 700] {
        for l in [100, 300, 600] {
            for t in [50, 150, 300] {
                config.audio.min_silence_ms = s;
                config.decision.latency_ms = l;
                config.tts.first_chunk_latency_ms = t;
                let got = one_turn(&config)?;
                let want = (s + l + t) as f64 / 1000.0;
                ensure(got == Some(want), || format!("S={s} L={l} T={t}: {got:?} vs {want}"))?;
            }
        }
    }
    Ok(format!("FRD {frd:.3} s; 27/27 grid cells equal S + L + T"))
}

// 5

fn name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).unwrap().as_str().unwrap().to_string()
}

fn oracle_equivalence() -> Check {
    for seed in 0..100u64 {
        let mut config = Config::default();
        config.decision.error_rate = (seed % 4) as f64 * 0.15;
        config.decision.latency_jitter_ms = (seed % 3) * 150;
        let opts = GenOptions {
            chaotic: seed % 2 == 1,
            ..GenOptions::new(&config, 5)
        };
        let s = generate("eq", seed, &opts);
        let (trace, r) = evaluate(&s, &config).map_err(|e| e.to_string())?;
        let events: Vec<OracleEvent> = s
            .events
            .iter()
            .map(|e| OracleEvent {
                t_ms: e.t_ms,
                end_ms: e.end_ms(),
                label: name(&e.label),
                expected: name(&e.expected()),
            })
            .collect();
        let o = oracle_metrics(&trace.to_jsonl(), &events, config.harness.t_stop_ms);
        let same = r.first_response_delay_s == o.first_response_delay_s
            && r.total_delay_s == o.total_delay_s
            && r.interruption_total_score == o.interruption_total_score
            && r.rejection_total_score == o.rejection_total_score
            && r.violations() == o.violations
            && r.events.iter().map(|e| e.credited).collect::<Vec<_>>() == o.credited;
        ensure(same, || format!("seed {seed}: {r:?} vs {o:?}"))?;
    }
    Ok("100/100 scenarios identical".into())
}

// 6

fn pooled(config: &Config, mix: Mix) -> Result<MetricsReport, String> {
    let mut opts = GenOptions::new(config, 8);
    opts.mix = mix;
    let mut reports = Vec::new();
    for seed in 0..50 {
        let s = generate("x", seed, &opts);
        reports.push(evaluate(&s, config).map_err(|e| e.to_string())?.1);
    }
    Ok(MetricsReport::pooled("pooled", &reports))
}

fn extremes() -> Check {
    let perfect = pooled(&Config::default(), Mix::default())?;
    let mut adv = Config::default();
    adv.decision.adversarial = true;
    let adversarial = pooled(&adv, Mix::target_only())?;
    let Totals { interruptions, rejections, .. } = perfect.totals;
    let scores = |r: &MetricsReport| (r.interruption_total_score, r.rejection_total_score);
    ensure(scores(&perfect) == (Some(100.0), Some(100.0)), || format!("perfect {:?}", scores(&perfect)))?;
    ensure(scores(&adversarial) == (Some(0.0), Some(0.0)), || format!("adversarial {:?}", scores(&adversarial)))?;
    Ok(format!(
        "perfect 100/100 over {interruptions} interruptions and {rejections} rejections; adversarial 0/0"
    ))
}

// 7

fn fault_tolerance() -> Check {
    let mut config = Config::default();
    config.decision.error_rate = 1.0;
    let mut s = generate("faulty", 9, &GenOptions::new(&Config::default(), 30));
    s.events.retain(|e| e.end_ms() < 58_000);
    s.length_ms = Some(60_000);
    let trace = simulate(&s, &config).map_err(|e| e.to_string())?;
    let switches = trace.transitions().filter(|(_, k)| k.is_switch()).count();
    let decisions = trace
        .records
        .iter()
        .filter(|r| matches!(r.event, TraceEvent::DecisionOutcome { fallback: true, .. }))
        .count();
    ensure(switches == 0, || format!("{switches} switches"))?;
    ensure(decisions > 0, || "no decisions were attempted".into())?;
    let end = trace.records.last().map(|r| r.t).unwrap_or(0);
    ensure(end >= 60_000, || format!("session ended at {end} ms"))?;
    Ok(format!("60 s, {decisions} failed decisions fell back, 0 switches"))
}

// 8

fn sixty_seconds() -> Scenario {
    let mut s = generate("sixty", 3, &GenOptions::new(&Config::default(), 40));
    s.events.retain(|e| e.end_ms() < 58_000);
    s.length_ms = Some(60_000);
    s
}

fn performance() -> Check {
    let config = Config::default();
    let s = sixty_seconds();
    let started = Instant::now();
    let trace: SessionTrace = simulate(&s, &config).map_err(|e| e.to_string())?;
    let single = started.elapsed();
    ensure(trace.records.last().map(|r| r.t).unwrap_or(0) >= 60_000, || "short session".into())?;

    let scenarios: Vec<(String, Result<Scenario, String>)> = (0..200u64)
        .map(|seed| {
            let opts = GenOptions {
                chaotic: seed % 4 == 0,
                ..GenOptions::new(&config, 6)
            };
            (format!("{seed}"), Ok(generate("bench", seed, &opts)))
        })
        .collect();
    let started = Instant::now();
    let b = bench(&scenarios, &config);
    let all = started.elapsed();
    ensure(b.scenarios.iter().all(|e| e.report.is_some()), || "bench errors".into())?;
    ensure(single < Duration::from_secs(1), || format!("60 s scenario took {single:?}"))?;
    ensure(all < Duration::from_secs(60), || format!("bench took {all:?}"))?;
    Ok(format!("60 s scenario in {} ms; 200-scenario bench in {} ms", single.as_millis(), all.as_millis()))
}

// 9

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn recv(ws: &mut Ws) -> Option<Result<Value, usize>> {
    match tokio::time::timeout(Duration::from_secs(15), ws.next()).await.ok()?? {
        Ok(Message::Text(t)) => Some(Ok(serde_json::from_str(&t).ok()?)),
        Ok(Message::Binary(b)) => Some(Err(b.len())),
        _ => None,
    }
}

async fn text_until(ws: &mut Ws, stop: impl Fn(&Value) -> bool) -> Result<(Vec<Value>, Vec<usize>), String> {
    let (mut texts, mut audio) = (Vec::new(), Vec::new());
    loop {
        match recv(ws).await {
            Some(Ok(v)) => {
                let done = stop(&v);
                texts.push(v);
                if done {
                    return Ok((texts, audio));
                }
            }
            Some(Err(n)) => audio.push(n),
            None => return Err(format!("socket ended after {texts:?}")),
        }
    }
}

fn tone_frames(parts: &[(u64, bool)]) -> Vec<Vec<u8>> {
    let mut n = 0u64;
    let mut out = Vec::new();
    for (ms, on) in parts {
        for _ in 0..ms / FRAME_MS {
            let f: Vec<u8> = (0..320)
                .flat_map(|_| {
                    let s = if *on {
                        (0.5 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16000.0).sin() * 32767.0) as i16
                    } else {
                        0
                    };
                    n += 1;
                    s.to_le_bytes()
                })
                .collect();
            out.push(f);
        }
    }
    out
}

async fn gateway_session(addr: SocketAddr, speech_ms: u64) -> Result<(String, Vec<Value>), String> {
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws"))
        .await
        .map_err(|e| e.to_string())?;
    let send = |v: Value| Message::Text(v.to_string().into());
    ws.send(send(json!({"type": "hello", "sample_rate": 16000}))).await.map_err(|e| e.to_string())?;
    let (ready, _) = text_until(&mut ws, |v| v["type"] == "ready").await?;
    let id = ready[0]["session_id"].as_str().unwrap_or_default().to_string();

    for bad in [641usize, 639, 1280] {
        ws.send(Message::Binary(vec![0u8; bad].into())).await.map_err(|e| e.to_string())?;
        let (t, _) = text_until(&mut ws, |v| v["type"] == "error").await?;
        let code = &t.last().unwrap()["code"];
        ensure(code == "bad_frame", || format!("{bad}-byte frame gave {code}"))?;
    }
    for f in tone_frames(&[(speech_ms, true), (2000 - speech_ms, false), (600, true), (1400, false)]) {
        ws.send(Message::Binary(f.into())).await.map_err(|e| e.to_string())?;
    }
    let (log, audio) = text_until(&mut ws, |v| v["type"] == "transition" && v["kind"] == "s2l").await?;
    ensure(audio.iter().all(|n| *n == 640), || "agent frame of wrong size".into())?;
    ensure(!audio.is_empty(), || "no agent audio".into())?;
    let n = log.len();
    ensure(n >= 2 && log[n - 2]["type"] == "tts_cancel", || {
        format!("s2l not preceded by tts_cancel: {:?}", &log[n.saturating_sub(3)..])
    })?;
    ws.send(send(json!({"type": "bye"}))).await.map_err(|e| e.to_string())?;
    let (rest, _) = text_until(&mut ws, |v| v["type"] == "bye").await?;
    let mut all = log;
    all.extend(rest);
    ensure(all.iter().all(|v| v["t_ms"].is_u64() && v["type"].is_string()), || "message without type/t_ms".into())?;
    Ok((id, all))
}

fn gateway() -> Check {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        let gateway = Gateway::new(Config::default());
        let handle = gateway.shutdown_handle();
        tokio::spawn(gateway.serve(listener));

        let tasks: Vec<_> = (0..8u64)
            .map(|i| tokio::spawn(gateway_session(addr, 700 + 100 * i)))
            .collect();
        let mut ids = BTreeMap::new();
        for (i, t) in tasks.into_iter().enumerate() {
            let (id, log) = t.await.map_err(|e| e.to_string())??;
            let want = format!("I heard about {:.1} seconds of speech.", (700 + 100 * i) as f64 / 1000.0);
            let first = log.iter().find(|v| v["type"] == "tts_start").ok_or("no tts_start")?;
            ensure(first["text"] == want.as_str(), || format!("session {i} heard {}", first["text"]))?;
            ids.insert(id, i);
        }
        handle.shutdown();
        ensure(ids.len() == 8, || "session ids collide".into())?;
        Ok("bad_frame on 641/639/1280 bytes; tts_cancel before s2l; 8 concurrent sessions isolated".into())
    })
}

fn run(n: usize, label: &str, f: fn() -> Check) -> bool {
    let started = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let (tag, detail) = match &result {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    let line = format!(
        "{tag} [{n}] {label}: {detail} ({} ms)\n",
        started.elapsed().as_millis()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    result.is_ok()
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("state-machine conformance", state_machine),
        ("next-cycle causality", causality),
        ("barge-in bound", barge_in),
        ("latency decomposition", latency_decomposition),
        ("metric-oracle equivalence", oracle_equivalence),
        ("behavioral scoring extremes", extremes),
        ("fault tolerance", fault_tolerance),
        ("simulation performance", performance),
        ("gateway protocol", gateway),
    ];
    let passed = criteria
        .iter()
        .enumerate()
        .filter(|(i, (label, f))| run(i + 1, label, *f))
        .count();
    assert_eq!(passed, criteria.len(), "{passed}/{} criteria passed", criteria.len());
}
