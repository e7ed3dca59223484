//! On-air frames: the four MAC frame kinds plus per-kind metadata.
//!
//! Airtimes are carried on the frame so the medium never needs protocol
//! configuration; constructors in the MAC layers enforce the invariant
//! `airtime = overhead + payload_units * ticks_per_unit` for DATA frames and
//! a fixed control airtime for the rest.

use crate::packet::{NodeId, PacketId, Priority};
use crate::time::Ticks;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    Ack,
}

impl FrameKind {
    pub fn label(self) -> &'static str {
        match self {
            FrameKind::Rts => "RTS",
            FrameKind::Cts => "CTS",
            FrameKind::Data => "DATA",
            FrameKind::Ack => "ACK",
        }
    }
}

/// Reception outcome at one receiver.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Verdict {
    Delivered,
    /// Another in-range transmission overlapped on the same channel.
    LostCollision,
    /// Lost to the distance-dependent channel loss draw.
    LostChannel,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Delivered => "ok",
            Verdict::LostCollision => "collision",
            Verdict::LostChannel => "channel",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum FrameMeta {
    /// Channel request. In the superframe MAC this doubles as the GTS
    /// request sent during the contention access period.
    Rts {
        class: Priority,
        packet: PacketId,
        units: u32,
    },
    /// Grant. `frag_units` piggybacks the fragment size the grantee must use
    /// for a normal packet (dynamic-fragmentation mode only).
    Cts {
        class: Priority,
        frag_units: Option<u32>,
    },
    Data {
        packet: PacketId,
        class: Priority,
        frag_index: u32,
        frag_count: u32,
        /// Last fragment of the current transmission round; the receiver
        /// answers it with an ACK.
        round_end: bool,
    },
    /// Selective acknowledgement: `missing` has one bit per fragment index
    /// still outstanding; zero means the packet is complete.
    Ack { packet: PacketId, missing: u64 },
}

#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub kind: FrameKind,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub channel: u8,
    pub payload_units: u32,
    pub airtime: Ticks,
    pub meta: FrameMeta,
}

impl Frame {
    /// Priority class carried by the frame, where one applies.
    pub fn class(&self) -> Option<Priority> {
        match self.meta {
            FrameMeta::Rts { class, .. } => Some(class),
            FrameMeta::Cts { class, .. } => Some(class),
            FrameMeta::Data { class, .. } => Some(class),
            FrameMeta::Ack { .. } => None,
        }
    }

    pub fn packet_id(&self) -> Option<PacketId> {
        match self.meta {
            FrameMeta::Rts { packet, .. } => Some(packet),
            FrameMeta::Data { packet, .. } => Some(packet),
            FrameMeta::Ack { packet, .. } => Some(packet),
            FrameMeta::Cts { .. } => None,
        }
    }
}

/// Compact per-frame record kept in run traces.
#[derive(Clone, Copy, Debug)]
pub struct FrameSummary {
    pub kind: FrameKind,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub channel: u8,
    pub class: Option<Priority>,
    pub packet: Option<PacketId>,
    pub frag_index: Option<u32>,
    pub airtime: Ticks,
}

impl FrameSummary {
    pub fn of(frame: &Frame) -> FrameSummary {
        FrameSummary {
            kind: frame.kind,
            sender: frame.sender,
            receiver: frame.receiver,
            channel: frame.channel,
            class: frame.class(),
            packet: frame.packet_id(),
            frag_index: match frame.meta {
                FrameMeta::Data { frag_index, .. } => Some(frag_index),
                _ => None,
            },
            airtime: frame.airtime,
        }
    }
}
