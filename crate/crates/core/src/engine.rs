//! Deterministic discrete-event core.
//!
//! Events are totally ordered by `(fire_time, sequence)`. The sequence number
//! is assigned at scheduling time, so events sharing a fire time are processed
//! in insertion order.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use thiserror::Error;

/// Virtual time in seconds.
pub type SimTime = f64;

/// Opaque handle returned by [`EventQueue::schedule`], used for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn sequence(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("event scheduled at t={at}s but the clock is already at t={now}s")]
    InPast { at: SimTime, now: SimTime },
    #[error("event fire time is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy)]
struct Key {
    time: SimTime,
    seq: u64,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    // Reversed: BinaryHeap is a max-heap and we want the earliest event on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// A scheduled event as handed back to the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<E> {
    pub fire_time: SimTime,
    pub sequence: u64,
    pub payload: E,
}

/// Priority queue plus virtual clock.
#[derive(Debug)]
pub struct EventQueue<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Key>,
    pending: HashMap<u64, E>,
    processed: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self {
            now: 0.0,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashMap::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events popped so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Number of live (not cancelled, not fired) events.
    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn schedule(&mut self, fire_time: SimTime, payload: E) -> Result<EventHandle, EngineError> {
        if !fire_time.is_finite() {
            return Err(EngineError::NonFinite);
        }
        if fire_time < self.now {
            return Err(EngineError::InPast {
                at: fire_time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Key {
            time: fire_time,
            seq,
        });
        self.pending.insert(seq, payload);
        Ok(EventHandle(seq))
    }

    /// Schedules relative to the current clock. `delay` must be non-negative.
    pub fn schedule_in(&mut self, delay: SimTime, payload: E) -> Result<EventHandle, EngineError> {
        self.schedule(self.now + delay, payload)
    }

    /// Returns true iff the event was pending and is now inert.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0).is_some()
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains_key(&handle.0)
    }

    /// Fire time of the next live event, if any.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        while let Some(top) = self.heap.peek() {
            if self.pending.contains_key(&top.seq) {
                return Some(top.time);
            }
            self.heap.pop();
        }
        None
    }

    /// Pops the next live event whose fire time is `<= t_end`, advancing the clock to it.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<E>> {
        let time = self.peek_time()?;
        if time > t_end {
            return None;
        }
        let key = self.heap.pop().expect("peeked");
        let payload = self.pending.remove(&key.seq).expect("live event");
        self.now = key.time;
        self.processed += 1;
        Some(Event {
            fire_time: key.time,
            sequence: key.seq,
            payload,
        })
    }

    /// Moves the clock forward without processing anything. Never moves it backwards.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// Processes every event with `fire_time <= t_end` in order, then sets the clock to `t_end`.
    ///
    /// The handler may schedule further events; those are honoured if they fall
    /// inside the horizon.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F)
    where
        F: FnMut(&mut Self, Event<E>),
    {
        debug_assert!(t_end >= self.now, "run_until into the past");
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
        }
        self.advance_to(t_end);
    }
}
