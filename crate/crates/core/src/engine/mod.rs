//! Simulation clock, future-event list and random streams.

mod rng;
mod time;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub use rng::{RngStream, RngStreams, StreamId, StreamPurpose};
pub use time::{SimDuration, SimTime};

use crate::error::SimError;

/// An event popped from the queue.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimEvent<E> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: E,
}

struct Entry<E>(SimEvent<E>);

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

/// Future-event list ordered by `(fire_at, seq)`.
pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    now: SimTime,
    next_seq: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedules `kind` at `fire_at`, returning its sequence number.
    pub fn schedule(&mut self, fire_at: SimTime, kind: E) -> Result<u64, SimError> {
        if fire_at < self.now {
            return Err(SimError::Causality {
                now: self.now,
                requested: fire_at,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(SimEvent { fire_at, seq, kind }));
        Ok(seq)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.0.fire_at)
    }

    /// Pops the earliest event and advances the clock to it.
    pub fn next_event(&mut self) -> Option<SimEvent<E>> {
        let Entry(ev) = self.heap.pop()?;
        debug_assert!(ev.fire_at >= self.now);
        self.now = ev.fire_at;
        Some(ev)
    }
}
