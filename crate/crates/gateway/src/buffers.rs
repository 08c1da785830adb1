//! Per-session queues between the socket tasks and the engine thread.

use std::collections::VecDeque;
use std::sync::Mutex;

use tokio::sync::Notify;

use crate::protocol::Envelope;

/// Jitter buffer for user frames. Past capacity the oldest frames go.
#[derive(Debug)]
pub struct Inbound {
    frames: VecDeque<Vec<u8>>,
    capacity: usize,
    dropped: u64,
}

impl Inbound {
    pub fn new(capacity: usize) -> Self {
        Self {
            frames: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            dropped: 0,
        }
    }

    /// Returns the number of frames dropped to make room.
    pub fn push(&mut self, frame: Vec<u8>) -> u64 {
        let mut dropped = 0;
        while self.frames.len() >= self.capacity {
            self.frames.pop_front();
            dropped += 1;
        }
        self.frames.push_back(frame);
        self.dropped += dropped;
        dropped
    }

    pub fn pop(&mut self) -> Option<Vec<u8>> {
        self.frames.pop_front()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    Text(Envelope),
    Audio(Vec<u8>),
    /// Close the socket after everything before it.
    Close,
}

#[derive(Debug, Default)]
struct Queue {
    items: VecDeque<Outgoing>,
    audio: usize,
    dropped_audio: u64,
}

/// Ordered per-client output. Agent audio beyond the cap is dropped oldest
/// first; control messages are never dropped.
#[derive(Debug)]
pub struct Outbox {
    queue: Mutex<Queue>,
    audio_cap: usize,
    notify: Notify,
}

impl Outbox {
    pub fn new(audio_cap: usize) -> Self {
        Self {
            queue: Mutex::new(Queue::default()),
            audio_cap: audio_cap.max(1),
            notify: Notify::new(),
        }
    }

    pub fn push(&self, item: Outgoing) {
        {
            let mut q = self.queue.lock().expect("outbox poisoned");
            if matches!(item, Outgoing::Audio(_)) {
                if q.audio >= self.audio_cap {
                    if let Some(i) = q.items.iter().position(|o| matches!(o, Outgoing::Audio(_))) {
                        q.items.remove(i);
                        q.audio -= 1;
                        q.dropped_audio += 1;
                    }
                }
                q.audio += 1;
            }
            q.items.push_back(item);
        }
        self.notify.notify_one();
    }

    pub fn text(&self, envelope: Envelope) {
        self.push(Outgoing::Text(envelope));
    }

    pub fn take(&self) -> Vec<Outgoing> {
        let mut q = self.queue.lock().expect("outbox poisoned");
        q.audio = 0;
        q.items.drain(..).collect()
    }

    pub fn dropped_audio(&self) -> u64 {
        self.queue.lock().expect("outbox poisoned").dropped_audio
    }

    pub async fn wait(&self) {
        self.notify.notified().await;
    }
}
