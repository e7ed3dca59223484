//! Online invariant monitoring and protocol probes.
//!
//! The monitor runs inside every world and checks trace-level invariants as
//! events happen, so long sweeps can be verified without retaining traces:
//!
//! - a node that paused for urgent traffic never transmits while paused;
//! - no normal DATA frame overlaps an urgent DATA burst while its sender is
//!   paused (the preemption contract);
//! - in the superframe MAC, no urgent DATA start falls strictly inside
//!   another node's DATA interval on the same channel (no-preemption).
//!
//! Probes are a light side-channel for tests: state transitions that are
//! not engine events (pause enter/exit, urgent service spans) get recorded
//! here when probing is enabled, without touching the trace digest.

use std::collections::HashSet;

use crate::packet::{NodeId, PacketId, Priority};
use crate::time::{SimTime, Ticks};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Probe {
    PauseEnter {
        node: NodeId,
        at: SimTime,
    },
    PauseExit {
        node: NodeId,
        at: SimTime,
    },
    DataTx {
        node: NodeId,
        packet: PacketId,
        class: Priority,
        frag_index: u32,
        t_start: SimTime,
        t_end: SimTime,
        channel: u8,
    },
    FragSizeChange {
        at: SimTime,
        units: u32,
    },
    UrgentQueued {
        node: NodeId,
        packet: PacketId,
        at: SimTime,
    },
}

#[derive(Clone, Copy, Debug)]
struct DataInterval {
    node: NodeId,
    class: Priority,
    channel: u8,
    t_start: SimTime,
    t_end: SimTime,
}

/// Counts of invariant violations observed during a run. All zeros on a
/// healthy run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MonitorReport {
    /// Transmissions started by a node in the paused-for-urgent state.
    pub paused_tx: u64,
    /// Normal DATA frames from a paused sender overlapping an urgent burst.
    pub pause_overlap: u64,
    /// Urgent DATA starts strictly inside another node's DATA interval on
    /// the same channel (superframe MAC only).
    pub gts_preemption: u64,
    /// Normal DATA transmissions started while the sender's urgent queue
    /// was non-empty (head-of-line priority violations).
    pub priority_inversion: u64,
}

impl MonitorReport {
    pub fn is_clean(&self) -> bool {
        *self == MonitorReport::default()
    }
}

pub struct Monitor {
    paused: HashSet<NodeId>,
    active: Vec<DataInterval>,
    report: MonitorReport,
    probes: Vec<Probe>,
    probing: bool,
}

impl Monitor {
    pub fn new(probing: bool) -> Monitor {
        Monitor {
            paused: HashSet::new(),
            active: Vec::new(),
            report: MonitorReport::default(),
            probes: Vec::new(),
            probing,
        }
    }

    pub fn report(&self) -> MonitorReport {
        self.report
    }

    pub fn take_probes(&mut self) -> Vec<Probe> {
        std::mem::take(&mut self.probes)
    }

    pub fn probe(&mut self, probe: Probe) {
        if self.probing {
            self.probes.push(probe);
        }
    }

    pub fn pause_enter(&mut self, node: NodeId, at: SimTime) {
        self.paused.insert(node);
        self.probe(Probe::PauseEnter { node, at });
    }

    pub fn pause_exit(&mut self, node: NodeId, at: SimTime) {
        self.paused.remove(&node);
        self.probe(Probe::PauseExit { node, at });
    }

    pub fn is_paused(&self, node: NodeId) -> bool {
        self.paused.contains(&node)
    }

    /// Every transmission start runs through here: a paused node must stay
    /// silent, whatever the frame kind.
    pub fn tx_check(&mut self, node: NodeId) {
        if self.paused.contains(&node) {
            self.report.paused_tx += 1;
        }
    }

    /// Record a DATA transmission start and run the overlap checks.
    #[allow(clippy::too_many_arguments)]
    pub fn data_tx(
        &mut self,
        node: NodeId,
        packet: PacketId,
        class: Priority,
        frag_index: u32,
        channel: u8,
        t_start: SimTime,
        airtime: Ticks,
        urgent_queue_clear: bool,
    ) {
        let t_end = t_start + airtime;
        self.active.retain(|iv| iv.t_end > t_start);

        if self.paused.contains(&node)
            && class == Priority::Normal
            && self
                .active
                .iter()
                .any(|iv| iv.class == Priority::Urgent && iv.channel == channel)
        {
            self.report.pause_overlap += 1;
        }
        if class == Priority::Normal && !urgent_queue_clear {
            self.report.priority_inversion += 1;
        }
        if class == Priority::Urgent {
            let inside_other = self.active.iter().any(|iv| {
                iv.node != node
                    && iv.channel == channel
                    && iv.t_start < t_start
                    && t_start < iv.t_end
            });
            if inside_other {
                self.report.gts_preemption += 1;
            }
        }

        self.active.push(DataInterval {
            node,
            class,
            channel,
            t_start,
            t_end,
        });
        self.probe(Probe::DataTx {
            node,
            packet,
            class,
            frag_index,
            t_start,
            t_end,
            channel,
        });
    }
}
