//! Per-class delivery accounting: delay samples, delivered payload,
//! generation/drop counters.
//!
//! Delay is measured from packet generation to full reassembly at the sink.
//! Packets dropped at the source are excluded from delay averages and
//! counted separately; a drop reported for a packet the sink already
//! completed is ignored so that every packet is classified exactly once
//! (delivered, dropped, or in flight at the horizon).

use std::collections::{HashMap, HashSet};

use crate::packet::{Packet, PacketId, Priority};
use crate::time::{SimTime, Ticks, SECONDS};

#[derive(Clone, Debug, Default)]
pub struct MetricsRecord {
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub delivered_units: u64,
    pub delay_samples: Vec<Ticks>,
}

impl MetricsRecord {
    /// Arithmetic mean of delay samples in seconds; `None` when there is no
    /// data (never zero).
    pub fn avg_delay_s(&self) -> Option<f64> {
        if self.delay_samples.is_empty() {
            return None;
        }
        let sum: u128 = self.delay_samples.iter().map(|&d| d as u128).sum();
        Some(sum as f64 / self.delay_samples.len() as f64 / SECONDS as f64)
    }

    /// Delivered payload units per second of simulated time.
    pub fn throughput_units_per_s(&self, horizon: SimTime) -> f64 {
        assert!(horizon > SimTime::ZERO, "horizon must be positive");
        self.delivered_units as f64 / horizon.as_secs_f64()
    }
}

#[derive(Clone, Copy, Debug)]
struct PacketInfo {
    class: Priority,
    units: u32,
    t_gen: SimTime,
}

#[derive(Default)]
pub struct Metrics {
    classes: [MetricsRecord; 2],
    registry: HashMap<PacketId, PacketInfo>,
    completed: HashSet<PacketId>,
    dropped: HashSet<PacketId>,
}

impl Metrics {
    pub fn new() -> Metrics {
        Metrics::default()
    }

    pub fn on_generated(&mut self, packet: &Packet) {
        let prev = self.registry.insert(
            packet.id,
            PacketInfo {
                class: packet.class,
                units: packet.units,
                t_gen: packet.t_gen,
            },
        );
        assert!(prev.is_none(), "duplicate generation for {}", packet.id);
        self.classes[packet.class.index()].generated += 1;
    }

    pub fn is_completed(&self, id: PacketId) -> bool {
        self.completed.contains(&id)
    }

    /// Record full reassembly of a packet at the sink. Duplicate completion
    /// for one packet id is a contract violation.
    pub fn record_delivery(&mut self, id: PacketId, t_rx: SimTime) {
        assert!(self.completed.insert(id), "duplicate completion for {id}");
        let info = *self
            .registry
            .get(&id)
            .unwrap_or_else(|| panic!("delivery for unknown packet {id}"));
        let delay = t_rx.since(info.t_gen);
        assert!(delay > 0, "non-positive delay sample for {id}");
        let rec = &mut self.classes[info.class.index()];
        rec.delivered += 1;
        rec.delivered_units += info.units as u64;
        rec.delay_samples.push(delay);
    }

    /// Record a source-side drop (retry exhaustion). Ignored when the sink
    /// already completed the packet: the data made it, only the final ACK
    /// was lost.
    pub fn record_drop(&mut self, id: PacketId) {
        if self.completed.contains(&id) || !self.dropped.insert(id) {
            return;
        }
        let info = self
            .registry
            .get(&id)
            .unwrap_or_else(|| panic!("drop for unknown packet {id}"));
        self.classes[info.class.index()].dropped += 1;
    }

    pub fn class(&self, class: Priority) -> &MetricsRecord {
        &self.classes[class.index()]
    }

    /// generated - delivered - dropped, per class.
    pub fn derived_in_flight(&self, class: Priority) -> u64 {
        let rec = self.class(class);
        rec.generated - rec.delivered - rec.dropped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::NodeId;

    fn packet(seq: u32, class: Priority, t_gen: SimTime) -> Packet {
        Packet {
            id: PacketId::new(NodeId(1), class, seq),
            source: NodeId(1),
            class,
            units: 64,
            t_gen,
        }
    }

    #[test]
    fn delay_sample_is_rx_minus_gen() {
        let mut m = Metrics::new();
        let p = packet(0, Priority::Normal, SimTime::from_secs(1));
        m.on_generated(&p);
        m.record_delivery(p.id, SimTime(1_200_000));
        let rec = m.class(Priority::Normal);
        assert_eq!(rec.delay_samples, vec![200_000]);
        assert!((rec.avg_delay_s().unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn no_deliveries_means_no_data_marker() {
        let m = Metrics::new();
        assert_eq!(m.class(Priority::Urgent).avg_delay_s(), None);
    }

    #[test]
    fn sample_count_tracks_delivered_count() {
        let mut m = Metrics::new();
        for seq in 0..5 {
            let p = packet(seq, Priority::Urgent, SimTime(seq as u64 * 100));
            m.on_generated(&p);
            m.record_delivery(p.id, SimTime(seq as u64 * 100 + 1_000));
        }
        let rec = m.class(Priority::Urgent);
        assert_eq!(rec.delivered, 5);
        assert_eq!(rec.delay_samples.len(), 5);
    }

    #[test]
    fn throughput_is_units_over_horizon() {
        let mut m = Metrics::new();
        for seq in 0..10 {
            let p = packet(seq, Priority::Normal, SimTime(1));
            m.on_generated(&p);
            m.record_delivery(p.id, SimTime(2_000));
        }
        let rec = m.class(Priority::Normal);
        assert_eq!(rec.delivered_units, 640);
        let tput = rec.throughput_units_per_s(SimTime::from_secs(10));
        assert!((tput - 64.0).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "duplicate completion")]
    fn duplicate_completion_is_a_contract_violation() {
        let mut m = Metrics::new();
        let p = packet(0, Priority::Normal, SimTime(0));
        m.on_generated(&p);
        m.record_delivery(p.id, SimTime(10));
        m.record_delivery(p.id, SimTime(20));
    }

    #[test]
    fn drop_after_completion_is_ignored() {
        let mut m = Metrics::new();
        let p = packet(0, Priority::Normal, SimTime(0));
        m.on_generated(&p);
        m.record_delivery(p.id, SimTime(10));
        m.record_drop(p.id);
        assert_eq!(m.class(Priority::Normal).dropped, 0);
        assert_eq!(m.derived_in_flight(Priority::Normal), 0);
    }

    #[test]
    fn conservation_bookkeeping() {
        let mut m = Metrics::new();
        for seq in 0..4 {
            m.on_generated(&packet(seq, Priority::Normal, SimTime(0)));
        }
        m.record_delivery(PacketId::new(NodeId(1), Priority::Normal, 0), SimTime(5));
        m.record_drop(PacketId::new(NodeId(1), Priority::Normal, 1));
        let rec = m.class(Priority::Normal);
        assert_eq!(
            rec.generated,
            rec.delivered + rec.dropped + m.derived_in_flight(Priority::Normal)
        );
        assert_eq!(m.derived_in_flight(Priority::Normal), 2);
    }
}
