//! Seeded random scenarios.
//!
//! Structured scenarios are laid out from the configured latencies so that
//! every overlap event lands while the agent is audibly speaking and every
//! decision finishes before the next utterance begins. Chaotic scenarios
//! ignore timing and only respect the script format.

use duplex_core::audio::FRAME_MS;
use duplex_core::script::ScriptLabel;
use duplex_core::Config;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scenario::{EventKind, Scenario, ScenarioEvent};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub min_silence_ms: u64,
    pub decision_ms: u64,
    pub jitter_ms: u64,
    pub first_chunk_ms: u64,
    pub ms_per_char: u64,
    pub min_overlap_ms: u64,
}

impl Timing {
    pub fn from_config(c: &Config) -> Self {
        Self {
            min_silence_ms: c.audio.min_silence_ms,
            decision_ms: c.decision.latency_ms,
            jitter_ms: c.decision.latency_jitter_ms,
            first_chunk_ms: c.tts.first_chunk_latency_ms,
            ms_per_char: c.tts.ms_per_char,
            min_overlap_ms: c.orchestrator.min_overlap_ms,
        }
    }
}

/// Per-episode probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mix {
    pub interruption: f64,
    pub backchannel: f64,
    pub non_target: f64,
    pub incomplete_prefix: f64,
    pub listen_backchannel: f64,
    pub listen_non_target: f64,
}

impl Default for Mix {
    fn default() -> Self {
        Self {
            interruption: 0.35,
            backchannel: 0.25,
            non_target: 0.15,
            incomplete_prefix: 0.25,
            listen_backchannel: 0.1,
            listen_non_target: 0.1,
        }
    }
}

impl Mix {
    /// Every episode carries a barge-in.
    pub fn interruptions_only() -> Self {
        Self {
            interruption: 1.0,
            backchannel: 0.0,
            non_target: 0.0,
            incomplete_prefix: 0.0,
            listen_backchannel: 0.0,
            listen_non_target: 0.0,
        }
    }

    /// Without non-target voices, whose rejection does not depend on the
    /// decision backend.
    pub fn target_only() -> Self {
        Self {
            non_target: 0.0,
            listen_non_target: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenOptions {
    pub episodes: usize,
    pub timing: Timing,
    pub mix: Mix,
    pub chaotic: bool,
}

impl GenOptions {
    pub fn new(config: &Config, episodes: usize) -> Self {
        Self {
            episodes,
            timing: Timing::from_config(config),
            mix: Mix::default(),
            chaotic: false,
        }
    }
}

const WORDS: [&str; 24] = [
    "weather", "tomorrow", "music", "play", "some", "please", "what", "about", "the", "news",
    "remind", "me", "call", "later", "okay", "train", "time", "dinner", "recipe", "light",
    "turn", "on", "off", "story",
];

fn snap(t: u64) -> u64 {
    t.div_ceil(FRAME_MS) * FRAME_MS
}

struct Gen {
    rng: ChaCha8Rng,
    events: Vec<ScenarioEvent>,
}

impl Gen {
    fn range(&mut self, lo: u64, hi: u64) -> u64 {
        snap(self.rng.random_range(lo..=hi.max(lo)))
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    fn words(&mut self, n: usize) -> String {
        (0..n)
            .map(|_| *WORDS.choose(&mut self.rng).expect("non-empty"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// A reply of exactly `chars` characters.
    fn reply(&mut self, chars: usize) -> String {
        let mut s = String::new();
        while s.len() < chars {
            if !s.is_empty() {
                s.push(' ');
            }
            s.push_str(WORDS.choose(&mut self.rng).expect("non-empty"));
        }
        s.truncate(chars);
        s.trim_end().to_string() + &".".repeat(chars - s.trim_end().len())
    }

    fn push(&mut self, t: u64, dur: u64, label: ScriptLabel, reply: Option<String>) -> u64 {
        let t = snap(t);
        let n = self.rng.random_range(2..6);
        let text = match label {
            ScriptLabel::Backchannel => ["mm-hm", "right", "yeah", "uh-huh"]
                .choose(&mut self.rng)
                .expect("non-empty")
                .to_string(),
            ScriptLabel::NonTarget => "(another voice nearby)".to_string(),
            _ => self.words(n),
        };
        let id = format!("e{}", self.events.len());
        self.events.push(ScenarioEvent {
            t_ms: t,
            kind: EventKind::UserUtterance,
            duration_ms: dur,
            label,
            text,
            reply,
            id: Some(id),
            expected: None,
        });
        t + dur
    }
}

pub fn generate(name: &str, seed: u64, opts: &GenOptions) -> Scenario {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        events: Vec::new(),
    };
    if opts.chaotic {
        chaotic(&mut g, opts);
    } else {
        structured(&mut g, opts);
    }
    Scenario {
        name: name.to_string(),
        seed,
        length_ms: None,
        events: g.events,
    }
}

fn chaotic(g: &mut Gen, opts: &GenOptions) {
    let labels = [
        ScriptLabel::Complete,
        ScriptLabel::Incomplete,
        ScriptLabel::Backchannel,
        ScriptLabel::Interruption,
        ScriptLabel::NonTarget,
    ];
    let mut t = g.range(0, 1500);
    for _ in 0..opts.episodes * 2 {
        let label = *labels.choose(&mut g.rng).expect("non-empty");
        let dur = g.range(60, 2000);
        let reply = g.chance(0.5).then(|| {
            let n = g.rng.random_range(3..60);
            g.reply(n)
        });
        let end = g.push(t, dur, label, reply);
        t = end + g.range(0, 3000);
    }
}

fn structured(g: &mut Gen, opts: &GenOptions) {
    let tm = opts.timing;
    let m = opts.mix;
    // utterance end to l2s, best and worst case
    let lmin = tm.min_silence_ms + tm.decision_ms;
    let lmax = lmin + tm.jitter_ms;
    // speech onset to Speak-state decision, worst case
    let trigger = snap(tm.min_overlap_ms) + FRAME_MS;
    let mut t = g.range(300, 1200);
    for _ in 0..opts.episodes {
        if g.chance(m.incomplete_prefix) {
            let dur = g.range(400, 900);
            let end = g.push(t, dur, ScriptLabel::Incomplete, None);
            t = end + lmax + g.range(100, 400);
        }
        if g.chance(m.listen_backchannel) {
            let dur = g.range(200, 400);
            let end = g.push(t, dur, ScriptLabel::Backchannel, None);
            t = end + lmax + g.range(100, 400);
        } else if g.chance(m.listen_non_target) {
            let dur = g.range(300, 800);
            let end = g.push(t, dur, ScriptLabel::NonTarget, None);
            t = end + lmax + g.range(100, 400);
        }

        let roll: f64 = g.rng.random();
        let overlap = if roll < m.interruption {
            Some(ScriptLabel::Interruption)
        } else if roll < m.interruption + m.backchannel {
            Some(ScriptLabel::Backchannel)
        } else if roll < m.interruption + m.backchannel + m.non_target {
            Some(ScriptLabel::NonTarget)
        } else {
            None
        };
        let chars = if overlap.is_some() {
            g.rng.random_range(50..=80)
        } else {
            g.rng.random_range(20..=50)
        };
        let dur = g.range(600, 1600);
        let reply = g.reply(chars);
        let e = g.push(t, dur, ScriptLabel::Complete, Some(reply));
        let play = chars as u64 * tm.ms_per_char;
        let first_max = e + lmax + tm.first_chunk_ms;
        let end_min = e + lmin + tm.first_chunk_ms + play;
        let end_max = first_max + play;
        let lo = first_max + 100;
        let hi = end_min.saturating_sub(trigger + tm.decision_ms + tm.jitter_ms + 200);
        t = end_max + g.range(300, 1500);
        let Some(label) = overlap.filter(|_| hi > lo) else {
            continue;
        };
        let onset = g.range(lo, hi);
        match label {
            ScriptLabel::Interruption => {
                let dur = g.range(500, 1200);
                let n = g.rng.random_range(15..=40);
                let reply = g.reply(n);
                let end = g.push(onset, dur, label, Some(reply));
                let switched = onset + trigger + tm.decision_ms + tm.jitter_ms;
                let answered = (end + tm.min_silence_ms).max(switched) + tm.decision_ms + tm.jitter_ms;
                t = answered + tm.first_chunk_ms + n as u64 * tm.ms_per_char + g.range(300, 1500);
            }
            _ => {
                let dur = if label == ScriptLabel::Backchannel {
                    g.range(200, 400)
                } else {
                    g.range(300, 800)
                };
                let end = g.push(onset, dur, label, None);
                t = t.max(end + tm.min_silence_ms + 100);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_scenarios_validate() {
        let config = Config::default();
        for seed in 0..50 {
            for chaotic in [false, true] {
                let opts = GenOptions { chaotic, ..GenOptions::new(&config, 6) };
                let s = generate("g", seed, &opts);
                s.validate().unwrap();
                assert!(s.events.iter().all(|e| e.t_ms % FRAME_MS == 0 && e.duration_ms % FRAME_MS == 0));
                assert_eq!(s, generate("g", seed, &opts));
            }
        }
    }

    #[test]
    fn replies_have_exact_length() {
        let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(1), events: vec![] };
        for n in 1..90 {
            assert_eq!(g.reply(n).chars().count(), n);
        }
    }
}
