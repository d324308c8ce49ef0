//! Deterministic discrete-event kernel.
//!
//! Events are ordered by `(time, sequence)`; the sequence number is the
//! insertion order, so equal-time events dispatch FIFO. After every batch of
//! equal-time events the model's [`Model::settle`] hook runs once, which lets
//! protocol code resolve instantaneous state (carrier sense, receiver locks)
//! independently of how same-time events happen to be ordered.

mod rng;
mod time;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

pub use rng::{derive_seed, RngStream, TOPOLOGY_STREAM};
pub use time::SimTime;

use crate::error::{Error, Result};

/// Handle returned by [`Scheduler::schedule`]; used for cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

/// A dispatched event.
#[derive(Clone, Debug)]
pub struct Event<E> {
    pub time: SimTime,
    pub sequence: u64,
    pub payload: E,
}

/// Tie-break rule for events at identical times. `Fifo` is the normal rule;
/// `Lifo` exists so tests can check that models do not depend on the order of
/// causally unrelated same-time events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    Fifo,
    Lifo,
}

struct Queued<E> {
    key: (SimTime, u64),
    event: Event<E>,
}

impl<E> PartialEq for Queued<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<E> Eq for Queued<E> {}
impl<E> PartialOrd for Queued<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Queued<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

/// Event queue plus virtual clock.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    tie_break: TieBreak,
    queue: BinaryHeap<Reverse<Queued<E>>>,
    live: HashSet<u64>,
    cancelled: HashSet<u64>,
    scheduled: u64,
    cancelled_count: u64,
    dispatched: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self::with_tie_break(TieBreak::Fifo)
    }

    pub fn with_tie_break(tie_break: TieBreak) -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            tie_break,
            queue: BinaryHeap::new(),
            live: HashSet::new(),
            cancelled: HashSet::new(),
            scheduled: 0,
            cancelled_count: 0,
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Enqueues `payload` at `time`. Scheduling before the current clock is a
    /// model bug and is reported as an error.
    pub fn schedule(&mut self, time: SimTime, payload: E) -> Result<EventHandle> {
        if time < self.now {
            return Err(Error::ScheduleInPast { at: time, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let order = match self.tie_break {
            TieBreak::Fifo => seq,
            TieBreak::Lifo => u64::MAX - seq,
        };
        self.queue.push(Reverse(Queued {
            key: (time, order),
            event: Event { time, sequence: seq, payload },
        }));
        self.scheduled += 1;
        self.live.insert(seq);
        Ok(EventHandle(seq))
    }

    /// Schedules `payload` after `delay`.
    pub fn schedule_in(&mut self, delay: SimTime, payload: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, payload).expect("relative schedule cannot be in the past")
    }

    /// Cancels a pending event. Cancelling an already dispatched or cancelled
    /// event is a no-op and returns `false`.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if !self.live.remove(&handle.0) {
            return false;
        }
        self.cancelled.insert(handle.0);
        self.cancelled_count += 1;
        true
    }

    fn purge_cancelled_head(&mut self) {
        while let Some(Reverse(head)) = self.queue.peek() {
            if self.cancelled.remove(&head.event.sequence) {
                self.queue.pop();
            } else {
                break;
            }
        }
    }

    pub fn peek_time(&mut self) -> Option<SimTime> {
        self.purge_cancelled_head();
        self.queue.peek().map(|Reverse(q)| q.event.time)
    }

    fn pop(&mut self) -> Option<Event<E>> {
        self.purge_cancelled_head();
        let Reverse(q) = self.queue.pop()?;
        self.live.remove(&q.event.sequence);
        debug_assert!(q.event.time >= self.now, "clock would move backwards");
        self.now = q.event.time;
        self.dispatched += 1;
        Some(q.event)
    }

    pub fn scheduled_count(&self) -> u64 {
        self.scheduled
    }

    pub fn cancelled_count(&self) -> u64 {
        self.cancelled_count
    }

    pub fn dispatched_count(&self) -> u64 {
        self.dispatched
    }

    /// Live events still waiting in the queue.
    pub fn pending_count(&self) -> u64 {
        self.scheduled - self.cancelled_count - self.dispatched
    }
}

/// Anything driven by the scheduler.
pub trait Model {
    type Event;

    fn handle(&mut self, sched: &mut Scheduler<Self::Event>, event: Event<Self::Event>);

    /// Called once after all events at `now` have been dispatched.
    fn settle(&mut self, _sched: &mut Scheduler<Self::Event>, _now: SimTime) {}
}

/// Dispatches every event with `time <= limit` in `(time, sequence)` order and
/// returns the number dispatched. The clock ends at `limit`.
pub fn run_until<M: Model>(sched: &mut Scheduler<M::Event>, model: &mut M, limit: SimTime) -> u64 {
    let start = sched.dispatched;
    while let Some(t) = sched.peek_time() {
        if t > limit {
            break;
        }
        while sched.peek_time() == Some(t) {
            let ev = sched.pop().expect("peeked event vanished");
            model.handle(sched, ev);
        }
        model.settle(sched, t);
    }
    if sched.now < limit {
        sched.now = limit;
    }
    sched.dispatched - start
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Default)]
    struct Recorder {
        log: Vec<(u64, u32)>,
        settles: Vec<u64>,
    }

    impl Model for Recorder {
        type Event = u32;
        fn handle(&mut self, _s: &mut Scheduler<u32>, ev: Event<u32>) {
            self.log.push((ev.time.as_nanos(), ev.payload));
        }
        fn settle(&mut self, _s: &mut Scheduler<u32>, now: SimTime) {
            self.settles.push(now.as_nanos());
        }
    }

    #[test]
    fn empty_queue_advances_clock_to_limit() {
        let mut s = Scheduler::<u32>::new();
        let mut m = Recorder::default();
        assert_eq!(run_until(&mut s, &mut m, SimTime::from_nanos(500)), 0);
        assert_eq!(s.now(), SimTime::from_nanos(500));
    }

    #[test]
    fn limit_is_inclusive_and_excludes_later_events() {
        let mut s = Scheduler::new();
        let mut m = Recorder::default();
        for (t, p) in [(10, 1), (20, 2), (30, 3), (40, 4)] {
            s.schedule(SimTime::from_nanos(t), p).unwrap();
        }
        assert_eq!(run_until(&mut s, &mut m, SimTime::from_nanos(30)), 3);
        assert_eq!(m.log, vec![(10, 1), (20, 2), (30, 3)]);
        assert_eq!(s.pending_count(), 1);
    }

    #[test]
    fn equal_times_dispatch_in_insertion_order() {
        let mut s = Scheduler::new();
        let mut m = Recorder::default();
        s.schedule(SimTime::from_nanos(5), 1).unwrap();
        s.schedule(SimTime::from_nanos(5), 2).unwrap();
        s.schedule(SimTime::from_nanos(5), 3).unwrap();
        run_until(&mut s, &mut m, SimTime::from_nanos(5));
        assert_eq!(m.log, vec![(5, 1), (5, 2), (5, 3)]);
        assert_eq!(m.settles, vec![5]);
    }

    #[test]
    fn lifo_tie_break_reverses_same_time_events_only() {
        let mut s = Scheduler::with_tie_break(TieBreak::Lifo);
        let mut m = Recorder::default();
        s.schedule(SimTime::from_nanos(5), 1).unwrap();
        s.schedule(SimTime::from_nanos(5), 2).unwrap();
        s.schedule(SimTime::from_nanos(1), 3).unwrap();
        run_until(&mut s, &mut m, SimTime::from_nanos(10));
        assert_eq!(m.log, vec![(1, 3), (5, 2), (5, 1)]);
    }

    #[test]
    fn zero_delay_event_runs_after_queued_peers() {
        struct Chain(Vec<u32>);
        impl Model for Chain {
            type Event = u32;
            fn handle(&mut self, s: &mut Scheduler<u32>, ev: Event<u32>) {
                self.0.push(ev.payload);
                if ev.payload == 1 {
                    s.schedule(s.now(), 99).unwrap();
                }
            }
        }
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_nanos(7), 1).unwrap();
        s.schedule(SimTime::from_nanos(7), 2).unwrap();
        let mut m = Chain(vec![]);
        run_until(&mut s, &mut m, SimTime::from_nanos(7));
        assert_eq!(m.0, vec![1, 2, 99]);
    }

    #[test]
    fn cancelled_event_never_fires() {
        let mut s = Scheduler::new();
        let mut m = Recorder::default();
        let h = s.schedule(SimTime::from_nanos(10), 1).unwrap();
        s.schedule(SimTime::from_nanos(20), 2).unwrap();
        assert!(s.cancel(h));
        assert!(!s.cancel(h));
        run_until(&mut s, &mut m, SimTime::from_nanos(100));
        assert_eq!(m.log, vec![(20, 2)]);
        assert_eq!(s.dispatched_count(), s.scheduled_count() - s.cancelled_count());
    }

    #[test]
    fn scheduling_in_the_past_is_an_error() {
        let mut s = Scheduler::new();
        let mut m = Recorder::default();
        s.schedule(SimTime::from_nanos(10), 1).unwrap();
        run_until(&mut s, &mut m, SimTime::from_nanos(10));
        assert!(matches!(
            s.schedule(SimTime::from_nanos(9), 2),
            Err(Error::ScheduleInPast { .. })
        ));
    }

    #[test]
    fn clock_is_monotone() {
        let mut s = Scheduler::new();
        let mut m = Recorder::default();
        let mut rng = RngStream::new(3, 0);
        for i in 0..500 {
            let t = rng.uniform_int(0, 10_000).unwrap() as u64;
            s.schedule(SimTime::from_nanos(t), i).unwrap();
        }
        run_until(&mut s, &mut m, SimTime::from_nanos(20_000));
        assert!(m.log.windows(2).all(|w| w[0].0 <= w[1].0));
        assert_eq!(m.log.len(), 500);
    }
}
