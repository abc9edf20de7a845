//! Deterministic discrete-event kernel.
//!
//! An [`Engine`] owns a virtual clock and an event calendar. Events are
//! ordered by `(fire_at, seq)` where `seq` is the insertion counter, so two
//! events scheduled for the same instant fire in the order they were
//! scheduled. Replaying an identical schedule always yields an identical
//! firing sequence.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on negative or NaN input.
    pub fn new(seconds: f64) -> Self {
        assert!(
            seconds >= 0.0,
            "simulated time must be non-negative, got {seconds}"
        );
        SimTime(seconds)
    }

    pub fn seconds(self) -> f64 {
        self.0
    }
}

impl From<f64> for SimTime {
    fn from(seconds: f64) -> Self {
        SimTime::new(seconds)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

pub type EventId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub id: EventId,
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

/// Calendar key: fire time, then insertion sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, u64);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then_with(|| self.1.cmp(&other.1))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EngineError {
    #[error("cannot schedule an event at {at} when the clock is already at {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Engine<P> {
    now: SimTime,
    calendar: BTreeMap<Key, Event<P>>,
    next_seq: u64,
    fired: u64,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            calendar: BTreeMap::new(),
            next_seq: 0,
            fired: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.calendar.len()
    }

    pub fn fired(&self) -> u64 {
        self.fired
    }

    pub fn scheduled(&self) -> u64 {
        self.next_seq
    }

    pub fn schedule(&mut self, at: SimTime, payload: P) -> Result<EventId, EngineError> {
        if at < self.now {
            return Err(EngineError::SchedulingInPast { at, now: self.now });
        }
        // Ids and sequence numbers coincide: both are the insertion ordinal.
        let seq = self.next_seq;
        self.next_seq += 1;
        self.calendar.insert(
            Key(at.0, seq),
            Event {
                id: seq,
                fire_at: at,
                seq,
                payload,
            },
        );
        Ok(seq)
    }

    /// Schedules an event `delay` seconds from now.
    pub fn schedule_in(&mut self, delay: f64, payload: P) -> Result<EventId, EngineError> {
        let at = self.now.0 + delay;
        if !(delay >= 0.0) {
            return Err(EngineError::SchedulingInPast {
                at: SimTime(at),
                now: self.now,
            });
        }
        self.schedule(SimTime(at), payload)
    }

    fn pop_due(&mut self, limit: f64) -> Option<Event<P>> {
        if self.calendar.first_key_value()?.0 .0 > limit {
            return None;
        }
        let (_, event) = self.calendar.pop_first()?;
        self.now = event.fire_at;
        self.fired += 1;
        Some(event)
    }

    /// Fires every event with `fire_at <= limit` in calendar order, then
    /// parks the clock at `limit`. The handler may schedule further events;
    /// those are fired too if they fall within the limit.
    pub fn run_until<F>(&mut self, limit: SimTime, mut handler: F) -> SimTime
    where
        F: FnMut(&mut Self, Event<P>),
    {
        let limit_s = limit.0.max(self.now.0);
        while let Some(event) = self.pop_due(limit_s) {
            handler(self, event);
        }
        self.now = SimTime(limit_s);
        self.now
    }

    /// Drains the calendar. The clock stops at the last fired event.
    pub fn run_to_completion<F>(&mut self, mut handler: F) -> SimTime
    where
        F: FnMut(&mut Self, Event<P>),
    {
        while let Some(event) = self.pop_due(f64::INFINITY) {
            handler(self, event);
        }
        self.now
    }

    /// Fires only the next event, if any.
    pub fn step(&mut self) -> Option<Event<P>> {
        self.pop_due(f64::INFINITY)
    }
}
