//! Simulation kernel: clock, future event list, seeded random streams and the
//! lorry entity that flows through the screening network.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Simulated minutes.
pub type Minutes = f64;

/// One simulated year in minutes.
pub const MINUTES_PER_YEAR: Minutes = 525_600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("event scheduled in the past: fire time {fire_time} < now {now}")]
    ScheduleInPast { fire_time: Minutes, now: Minutes },
    #[error("event time is not finite: {0}")]
    NonFiniteTime(Minutes),
}

/// Simulation clock. Only moves forward, and only when an event is popped.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimClock {
    now: Minutes,
}

impl SimClock {
    pub fn now(&self) -> Minutes {
        self.now
    }
}

/// A pending event. Ordered by `(fire_time, seq)`, earliest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedEvent<E> {
    pub fire_time: Minutes,
    pub seq: u64,
    pub event: E,
}

struct Entry<E>(TimedEvent<E>);

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; reverse so the earliest (time, seq) is on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .fire_time
            .total_cmp(&self.0.fire_time)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

/// Future event list with FIFO tie-breaking for simultaneous events.
pub struct EventCalendar<E> {
    heap: BinaryHeap<Entry<E>>,
    clock: SimClock,
    next_seq: u64,
}

impl<E> Default for EventCalendar<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventCalendar<E> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            clock: SimClock::default(),
            next_seq: 0,
        }
    }

    pub fn now(&self) -> Minutes {
        self.clock.now
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Inserts `event` to fire at `fire_time`. Returns its sequence number.
    pub fn schedule(&mut self, fire_time: Minutes, event: E) -> Result<u64, KernelError> {
        if !fire_time.is_finite() {
            return Err(KernelError::NonFiniteTime(fire_time));
        }
        if fire_time < self.clock.now {
            return Err(KernelError::ScheduleInPast {
                fire_time,
                now: self.clock.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(TimedEvent { fire_time, seq, event }));
        Ok(seq)
    }

    /// Schedules `event` after a non-negative delay.
    pub fn schedule_in(&mut self, delay: Minutes, event: E) -> Result<u64, KernelError> {
        self.schedule(self.clock.now + delay, event)
    }

    pub fn peek_time(&self) -> Option<Minutes> {
        self.heap.peek().map(|e| e.0.fire_time)
    }

    /// Removes the earliest event and advances the clock to it. `None` marks
    /// the end of the run.
    pub fn pop_next(&mut self) -> Option<TimedEvent<E>> {
        let Entry(ev) = self.heap.pop()?;
        assert!(
            ev.fire_time >= self.clock.now,
            "clock would move backwards: {} -> {}",
            self.clock.now,
            ev.fire_time
        );
        self.clock.now = ev.fire_time;
        Some(ev)
    }

    /// Moves the clock forward without an event (used to close a run at its
    /// horizon when no event falls exactly on it).
    pub fn advance_to(&mut self, t: Minutes) {
        if t > self.clock.now {
            self.clock.now = t;
        }
    }
}

/// A named, seeded random number stream.
///
/// The generator key is a hash of `(master_seed, replication, stream_id)`, so
/// any stream of any replication can be built directly without jumping ahead
/// through other streams.
#[derive(Clone)]
pub struct RandomStream {
    id: Arc<str>,
    rng: ChaCha8Rng,
}

impl fmt::Debug for RandomStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomStream").field("id", &self.id).finish()
    }
}

impl RandomStream {
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Uniform draw on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Bernoulli trial with success probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        // exactly one draw regardless of p, so stream alignment does not depend on it
        self.uniform() < p
    }

    /// Uniform index in `0..n`. `n` must be non-zero.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

pub fn make_stream(master_seed: u64, replication: u64, stream_id: &str) -> RandomStream {
    let mut hasher = Sha256::new();
    hasher.update(b"portsim/stream/v1");
    hasher.update(master_seed.to_le_bytes());
    hasher.update(replication.to_le_bytes());
    hasher.update((stream_id.len() as u64).to_le_bytes());
    hasher.update(stream_id.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    RandomStream {
        id: Arc::from(stream_id),
        rng: ChaCha8Rng::from_seed(seed),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Soft,
    Hard,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::Soft, Side::Hard];

    /// Containment label used in detection-rate lookups.
    pub fn containment(self) -> &'static str {
        match self {
            Side::Soft => "soft",
            Side::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScreeningOutcome {
    TruePositive,
    FalseNegative,
    FalsePositive,
    TrueNegative,
}

impl ScreeningOutcome {
    pub fn is_positive(self) -> bool {
        matches!(self, Self::TruePositive | Self::FalsePositive)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub node: i64,
    pub sensor: Arc<str>,
    pub outcome: ScreeningOutcome,
    pub time: Minutes,
}

/// The flowing entity.
#[derive(Debug, Clone, PartialEq)]
pub struct Lorry {
    pub id: u64,
    pub side: Side,
    /// Index into the scenario's commodity table.
    pub commodity: usize,
    pub clandestine_aboard: bool,
    /// Clandestines were found and removed somewhere along the way.
    pub detected: bool,
    /// Set by the latest screening; routers may divert flagged lorries.
    pub flagged: bool,
    pub checks: Vec<CheckRecord>,
    pub created_at: Minutes,
    pub exited_at: Option<Minutes>,
}

impl Lorry {
    pub fn new(id: u64, side: Side, commodity: usize, clandestine: bool, now: Minutes) -> Self {
        Self {
            id,
            side,
            commodity,
            clandestine_aboard: clandestine,
            detected: false,
            flagged: false,
            checks: Vec::new(),
            created_at: now,
            exited_at: None,
        }
    }

    pub fn record_check(&mut self, check: CheckRecord) {
        debug_assert!(self.checks.last().is_none_or(|c| c.time <= check.time));
        self.checks.push(check);
    }

    pub fn exit(&mut self, now: Minutes) {
        debug_assert!(now >= self.created_at);
        self.exited_at = Some(now);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_and_pop_in_time_order() {
        let mut cal = EventCalendar::new();
        cal.schedule(5.0, "a").unwrap();
        cal.schedule(1.0, "b").unwrap();
        cal.schedule(3.0, "c").unwrap();
        assert_eq!(cal.len(), 3);
        let order: Vec<_> = std::iter::from_fn(|| cal.pop_next().map(|e| e.fire_time)).collect();
        assert_eq!(order, vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn schedule_in_past_is_error() {
        let mut cal: EventCalendar<()> = EventCalendar::new();
        assert!(matches!(
            cal.schedule(-1.0, ()),
            Err(KernelError::ScheduleInPast { .. })
        ));
        cal.schedule(4.0, ()).unwrap();
        cal.pop_next();
        assert!(cal.schedule(3.9, ()).is_err());
        assert!(cal.schedule(4.0, ()).is_ok());
        assert!(cal.schedule(f64::NAN, ()).is_err());
    }

    #[test]
    fn simultaneous_events_pop_fifo() {
        let mut cal = EventCalendar::new();
        cal.schedule(7.0, "A").unwrap();
        cal.schedule(7.0, "B").unwrap();
        cal.schedule(7.0, "C").unwrap();
        assert_eq!(cal.pop_next().unwrap().event, "A");
        assert_eq!(cal.pop_next().unwrap().event, "B");
        assert_eq!(cal.pop_next().unwrap().event, "C");
    }

    #[test]
    fn pop_advances_clock_and_signals_end() {
        let mut cal = EventCalendar::new();
        cal.schedule(2.0, ()).unwrap();
        let ev = cal.pop_next().unwrap();
        assert_eq!(ev.fire_time, 2.0);
        assert_eq!(cal.now(), 2.0);
        assert!(cal.pop_next().is_none());
        assert_eq!(cal.now(), 2.0);
    }

    #[test]
    fn streams_are_reproducible_and_keyed() {
        let a: Vec<u64> = {
            let mut s = make_stream(42, 0, "arrivals");
            (0..16).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = make_stream(42, 0, "arrivals");
            (0..16).map(|_| s.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut s = make_stream(42, 1, "arrivals");
            (0..16).map(|_| s.next_u64()).collect()
        };
        let d: Vec<u64> = {
            let mut s = make_stream(42, 0, "routing");
            (0..16).map(|_| s.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn uniform_mean_is_one_half() {
        for (seed, rep, id) in [(42, 0, "arrivals"), (7, 3, "screening"), (1, 19, "berth")] {
            let mut s = make_stream(seed, rep, id);
            let n = 100_000;
            let mean = (0..n).map(|_| s.uniform()).sum::<f64>() / n as f64;
            assert!((mean - 0.5).abs() < 0.01, "{id}: mean {mean}");
        }
    }
}
