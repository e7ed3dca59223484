//! Engine events, handles, and run traces.

use crate::frame::{Frame, FrameSummary, Verdict};
use crate::packet::{NodeId, Packet, PacketId, Priority};
use crate::rng::{fnv1a64_init, fnv1a64_write};
use crate::time::SimTime;

/// Protocol timers. Named by role; the target node's own state supplies any
/// further context when the timer fires.
#[derive(Clone, Copy, Debug)]
pub enum Timer {
    /// Random backoff served; time to assess the channel.
    BackoffDone,
    /// Clear-channel assessment window elapsed.
    CcaDone,
    /// No CTS arrived within the wait window after an RTS.
    CtsTimeout,
    /// No ACK arrived after the round-end DATA frame.
    AckTimeout { packet: PacketId },
    /// Inter-fragment pause elapsed; try to resume the stream.
    FragGapEnd,
    /// Deferred resume point (post-grant turnaround, overheard-RTS hold, or
    /// post-pause re-entry).
    ResumePoint,
    /// A frame this node was transmitting has left the air.
    SendDone,
    /// Upper bound on a preemption pause; resume even if the urgent
    /// handshake completion was never overheard.
    PauseGuard,
    /// Sink-side: admitted stream went quiet.
    StreamGuard,
    /// Sink-side: an urgent grant produced no traffic.
    GrantGuard,
    /// Superframe MAC: this node's contention attempt instant in the CAP.
    CapAttempt,
    /// Superframe MAC: start of a guaranteed slot granted to this node.
    GtsStart,
}

impl Timer {
    pub fn label(&self) -> &'static str {
        match self {
            Timer::BackoffDone => "backoff-done",
            Timer::CcaDone => "cca-done",
            Timer::CtsTimeout => "cts-timeout",
            Timer::AckTimeout { .. } => "ack-timeout",
            Timer::FragGapEnd => "frag-gap-end",
            Timer::ResumePoint => "resume-point",
            Timer::SendDone => "send-done",
            Timer::PauseGuard => "pause-guard",
            Timer::StreamGuard => "stream-guard",
            Timer::GrantGuard => "grant-guard",
            Timer::CapAttempt => "cap-attempt",
            Timer::GtsStart => "gts-start",
        }
    }
}

/// Identifies a pending reception at the medium, resolved to a final verdict
/// when the corresponding `FrameRxEnd` is processed.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RxId(pub u64);

#[derive(Clone, Debug)]
pub enum EventKind {
    PacketArrival(Packet),
    FrameTxStart(Frame),
    FrameRxEnd { frame: Frame, rx: RxId },
    TimerExpiry(Timer),
    AssessmentCycleEnd,
    SuperframeBoundary,
}

impl EventKind {
    /// Stable tag hashed into the trace digest.
    pub fn tag(&self) -> u8 {
        match self {
            EventKind::PacketArrival(_) => 1,
            EventKind::FrameTxStart(_) => 2,
            EventKind::FrameRxEnd { .. } => 3,
            EventKind::TimerExpiry(_) => 4,
            EventKind::AssessmentCycleEnd => 5,
            EventKind::SuperframeBoundary => 6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Event {
    pub time: SimTime,
    /// Tie-break counter; same-time events fire in scheduling order.
    pub seq: u64,
    pub target: NodeId,
    pub kind: EventKind,
}

/// Handle for cancelling a scheduled event that has not fired yet.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct EventHandle {
    pub(crate) time: SimTime,
    pub(crate) seq: u64,
}

/// One processed event, as recorded in a captured trace.
#[derive(Clone, Copy, Debug)]
pub enum TraceLabel {
    Arrival { class: Priority, packet: PacketId },
    TxStart(FrameSummary),
    RxEnd(FrameSummary, Verdict),
    Timer(&'static str),
    CycleEnd,
    Boundary,
}

#[derive(Clone, Copy, Debug)]
pub struct TraceRecord {
    pub time: SimTime,
    pub seq: u64,
    pub target: NodeId,
    pub label: TraceLabel,
}

/// Result of a run: the processed-event digest plus, when capture was on,
/// the ordered record list.
#[derive(Clone, Debug)]
pub struct RunTrace {
    pub digest: u64,
    pub processed: u64,
    pub records: Vec<TraceRecord>,
}

/// Streaming FNV-1a digest over processed (time, seq, kind, target) tuples.
#[derive(Clone, Copy, Debug)]
pub struct TraceDigest(u64);

impl TraceDigest {
    pub fn new() -> TraceDigest {
        TraceDigest(fnv1a64_init())
    }

    pub fn absorb(&mut self, time: SimTime, seq: u64, kind_tag: u8, target: NodeId) {
        let mut h = self.0;
        h = fnv1a64_write(h, &time.as_ticks().to_le_bytes());
        h = fnv1a64_write(h, &seq.to_le_bytes());
        h = fnv1a64_write(h, &[kind_tag]);
        h = fnv1a64_write(h, &target.0.to_le_bytes());
        self.0 = h;
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

impl Default for TraceDigest {
    fn default() -> Self {
        TraceDigest::new()
    }
}
