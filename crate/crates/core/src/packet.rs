//! Application packets and the two priority classes.

use std::fmt;

use crate::time::SimTime;

/// Identifies a node in the topology. The sink is always node 0.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NodeId(pub u16);

pub const SINK: NodeId = NodeId(0);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Traffic priority class. Immutable for the lifetime of a packet.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Priority {
    Normal,
    Urgent,
}

impl Priority {
    pub const ALL: [Priority; 2] = [Priority::Normal, Priority::Urgent];

    pub fn index(self) -> usize {
        match self {
            Priority::Normal => 0,
            Priority::Urgent => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Priority::Normal => "normal",
            Priority::Urgent => "urgent",
        }
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Globally unique packet identifier, stable across protocol choices so that
/// paired comparisons line up: the id encodes (source, class, per-class seq).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct PacketId(pub u64);

impl PacketId {
    pub fn new(source: NodeId, class: Priority, seq: u32) -> PacketId {
        let class_bit = match class {
            Priority::Normal => 0u64,
            Priority::Urgent => 1u64,
        };
        PacketId((source.0 as u64) << 40 | class_bit << 32 | seq as u64)
    }
}

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let node = (self.0 >> 40) as u16;
        let class = if self.0 >> 32 & 1 == 1 { 'u' } else { 'n' };
        write!(f, "p{}-{}{}", node, class, self.0 & 0xffff_ffff)
    }
}

/// An application payload awaiting (or undergoing) delivery to the sink.
#[derive(Clone, Copy, Debug)]
pub struct Packet {
    pub id: PacketId,
    pub source: NodeId,
    pub class: Priority,
    /// Payload size in abstract units (one unit = one `ticks_per_unit` slice
    /// of airtime; the default calibration is 2 bytes at 250 kb/s = 64 µs).
    pub units: u32,
    pub t_gen: SimTime,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packet_ids_are_distinct_per_source_class_seq() {
        let a = PacketId::new(NodeId(1), Priority::Normal, 0);
        let b = PacketId::new(NodeId(1), Priority::Urgent, 0);
        let c = PacketId::new(NodeId(2), Priority::Normal, 0);
        let d = PacketId::new(NodeId(1), Priority::Normal, 1);
        assert!(a != b && a != c && a != d && b != c);
        assert_eq!(a.to_string(), "p1-n0");
        assert_eq!(b.to_string(), "p1-u0");
    }
}
