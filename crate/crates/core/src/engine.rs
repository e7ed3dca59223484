//! The discrete-event engine: virtual clock, ordered event queue, and the
//! run loop.
//!
//! Events pop in `(time, seq)` lexicographic order, where `seq` is the
//! insertion counter, so same-time events fire in the order they were
//! scheduled, and the whole run is a pure function of the scenario and the
//! master seed. The engine also maintains the streaming trace digest used by
//! determinism regression checks.

use std::collections::BTreeMap;

use crate::event::{Event, EventHandle, EventKind, TraceDigest};
use crate::packet::NodeId;
use crate::rng::RngStreams;
use crate::time::{SimTime, Ticks};

/// Anything driven by engine events. Handlers may schedule and cancel
/// further events through the engine they are handed.
pub trait World {
    fn handle(&mut self, engine: &mut Engine, event: Event);
}

pub struct Engine {
    clock: SimTime,
    next_seq: u64,
    queue: BTreeMap<(SimTime, u64), Event>,
    digest: TraceDigest,
    processed: u64,
    pub rng: RngStreams,
}

impl Engine {
    pub fn new(master_seed: u64) -> Engine {
        Engine {
            clock: SimTime::ZERO,
            next_seq: 0,
            queue: BTreeMap::new(),
            digest: TraceDigest::new(),
            processed: 0,
            rng: RngStreams::new(master_seed),
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    /// Queue an event. Scheduling into the past is a contract violation and
    /// aborts the run.
    pub fn schedule(&mut self, at: SimTime, target: NodeId, kind: EventKind) -> EventHandle {
        assert!(
            at >= self.clock,
            "event scheduled into the past: at={at} clock={} target={target} kind tag {}",
            self.clock,
            kind.tag(),
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.insert(
            (at, seq),
            Event {
                time: at,
                seq,
                target,
                kind,
            },
        );
        EventHandle { time: at, seq }
    }

    pub fn schedule_after(&mut self, delay: Ticks, target: NodeId, kind: EventKind) -> EventHandle {
        self.schedule(self.clock + delay, target, kind)
    }

    /// Cancel a pending event. Returns true if it had not yet fired and is
    /// now inert; false if it already fired or was already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.queue.remove(&(handle.time, handle.seq)).is_some()
    }

    /// Process all events with `time <= t_end` in order, advancing the clock
    /// to `t_end`. Returns the digest and count of processed events.
    pub fn run_until<W: World>(&mut self, world: &mut W, t_end: SimTime) -> EngineReport {
        assert!(t_end >= self.clock, "run_until target precedes the clock");
        while let Some((&(time, _seq), _)) = self.queue.first_key_value() {
            if time > t_end {
                break;
            }
            let (_, event) = self.queue.pop_first().expect("non-empty queue");
            debug_assert!(event.time >= self.clock, "clock monotonicity");
            self.clock = event.time;
            self.digest
                .absorb(event.time, event.seq, event.kind.tag(), event.target);
            self.processed += 1;
            world.handle(self, event);
        }
        self.clock = t_end;
        EngineReport {
            digest: self.digest.value(),
            processed: self.processed,
            clock: self.clock,
        }
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EngineReport {
    pub digest: u64,
    pub processed: u64,
    pub clock: SimTime,
}
