//! Session time.
//!
//! The engine keeps its own millisecond clock and a [`Scheduler`] of pending
//! callbacks. A [`Clock`] tells a driver how to move that time forward:
//! virtually (jump straight to the next instant) or against the wall clock.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

/// Time-ordered callback queue. Entries due at the same instant fire in
/// insertion order.
#[derive(Debug)]
pub struct Scheduler<E> {
    heap: BinaryHeap<Reverse<(u64, u64, Slot<E>)>>,
    seq: u64,
}

#[derive(Debug)]
struct Slot<E>(E);

impl<E> PartialEq for Slot<E> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl<E> Eq for Slot<E> {}
impl<E> PartialOrd for Slot<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Slot<E> {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
            seq: 0,
        }
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, at: u64, event: E) {
        self.heap.push(Reverse((at, self.seq, Slot(event))));
        self.seq += 1;
    }

    pub fn next_due(&self) -> Option<u64> {
        self.heap.peek().map(|Reverse((t, _, _))| *t)
    }

    /// Removes and returns the earliest entry due at or before `now`.
    pub fn pop_due(&mut self, now: u64) -> Option<(u64, E)> {
        if self.next_due()? > now {
            return None;
        }
        self.heap.pop().map(|Reverse((t, _, Slot(e)))| (t, e))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    Virtual,
    Wall,
}

#[derive(Debug, Clone)]
pub struct Clock {
    mode: ClockMode,
    origin: Instant,
    now: u64,
}

impl Clock {
    pub fn virtual_clock() -> Self {
        Self {
            mode: ClockMode::Virtual,
            origin: Instant::now(),
            now: 0,
        }
    }

    pub fn wall() -> Self {
        Self {
            mode: ClockMode::Wall,
            origin: Instant::now(),
            now: 0,
        }
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn now_ms(&self) -> u64 {
        match self.mode {
            ClockMode::Virtual => self.now,
            ClockMode::Wall => self.origin.elapsed().as_millis() as u64,
        }
    }

    /// Returns once the clock reads at least `t`. Virtual clocks jump; wall
    /// clocks sleep.
    pub fn wait_until(&mut self, t: u64) {
        match self.mode {
            ClockMode::Virtual => self.now = self.now.max(t),
            ClockMode::Wall => {
                let now = self.now_ms();
                if t > now {
                    std::thread::sleep(Duration::from_millis(t - now));
                }
            }
        }
    }
}
