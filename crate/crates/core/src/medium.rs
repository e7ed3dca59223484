//! Unit-disk radio medium with a quadratic distance-loss model and
//! overlap-based collision detection.
//!
//! Reception succeeds with probability `1 - (1 - p_edge) * (d/R)^2` inside
//! the disk and never outside it. Any temporal overlap between two frames on
//! one channel kills both at every receiver that is in range of both
//! senders; there is no capture effect. Verdicts are accumulated while
//! transmissions register and finalized when the `FrameRxEnd` event fires,
//! by which point every overlapping transmission has started.

use std::collections::HashMap;

use crate::engine::Engine;
use crate::event::{EventKind, RxId};
use crate::frame::{Frame, Verdict};
use crate::packet::NodeId;
use crate::rng::{StreamId, StreamPurpose};
use crate::time::SimTime;

#[derive(Clone, Copy, Debug)]
pub struct MediumConfig {
    /// Unit-disk transmission range in meters.
    pub range_m: f64,
    /// Reception probability at exactly the disk edge.
    pub p_edge: f64,
    pub channels: u8,
}

impl Default for MediumConfig {
    fn default() -> Self {
        MediumConfig {
            range_m: 50.0,
            p_edge: 0.9,
            channels: 1,
        }
    }
}

/// Success probability of the distance-loss model.
pub fn reception_probability(d: f64, range: f64, p_edge: f64) -> f64 {
    if d > range {
        return 0.0;
    }
    let x = d / range;
    1.0 - (1.0 - p_edge) * x * x
}

#[derive(Clone, Copy, Debug)]
struct OngoingTx {
    sender: NodeId,
    channel: u8,
    t_end: SimTime,
}

#[derive(Clone, Copy, Debug)]
struct PendingRx {
    verdict: Verdict,
    receiver: NodeId,
    channel: u8,
    t_start: SimTime,
    t_end: SimTime,
}

pub struct Medium {
    cfg: MediumConfig,
    positions: Vec<(f64, f64)>,
    ongoing: Vec<OngoingTx>,
    pending: HashMap<u64, PendingRx>,
    next_rx: u64,
}

impl Medium {
    /// Node `i`'s position is `positions[i]`; positions are fixed for the
    /// whole run.
    pub fn new(cfg: MediumConfig, positions: Vec<(f64, f64)>) -> Medium {
        assert!(cfg.range_m > 0.0, "transmission range must be positive");
        assert!(
            (0.0..=1.0).contains(&cfg.p_edge),
            "p_edge must be a probability"
        );
        assert!(cfg.channels >= 1);
        Medium {
            cfg,
            positions,
            ongoing: Vec::new(),
            pending: HashMap::new(),
            next_rx: 0,
        }
    }

    pub fn config(&self) -> &MediumConfig {
        &self.cfg
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    fn position(&self, node: NodeId) -> (f64, f64) {
        *self
            .positions
            .get(node.index())
            .unwrap_or_else(|| panic!("unknown node id {node}: not placed"))
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        let (ax, ay) = self.position(a);
        let (bx, by) = self.position(b);
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    /// Boundary-inclusive unit-disk reachability.
    pub fn in_range(&self, a: NodeId, b: NodeId) -> bool {
        self.distance(a, b) <= self.cfg.range_m
    }

    /// True iff some ongoing transmission on `channel` has a sender within
    /// range of the sensing node at the current clock.
    pub fn carrier_busy(&mut self, node: NodeId, channel: u8, now: SimTime) -> bool {
        self.ongoing.retain(|tx| tx.t_end > now);
        self.ongoing
            .iter()
            .any(|tx| tx.channel == channel && self.in_range(tx.sender, node))
    }

    /// Put a frame on the air at the current clock. Every in-range node
    /// other than the sender gets a `FrameRxEnd` at `now + airtime`; the
    /// verdict is finalized when that event is processed.
    pub fn transmit(&mut self, engine: &mut Engine, frame: Frame) {
        let now = engine.now();
        assert!(frame.airtime > 0, "frames must occupy airtime");
        assert!(frame.channel < self.cfg.channels, "channel out of range");
        let t_end = now + frame.airtime;

        self.ongoing.retain(|tx| tx.t_end > now);

        // The new transmission corrupts receptions already in progress at
        // receivers that hear this sender.
        let corrupted: Vec<u64> = self
            .pending
            .iter()
            .filter(|(_, rx)| {
                rx.channel == frame.channel
                    && rx.t_end > now
                    && rx.t_start < t_end
                    && self.in_range_raw(frame.sender, rx.receiver)
            })
            .map(|(&id, _)| id)
            .collect();
        for id in corrupted {
            self.pending.get_mut(&id).expect("pending rx").verdict = Verdict::LostCollision;
        }

        for idx in 0..self.positions.len() {
            let receiver = NodeId(idx as u16);
            if receiver == frame.sender {
                continue;
            }
            let d = self.distance(frame.sender, receiver);
            if d > self.cfg.range_m {
                continue; // out-of-range nodes observe nothing
            }
            // One loss draw per (frame, receiver), taken unconditionally so
            // the draw sequence does not depend on collision state.
            let p = reception_probability(d, self.cfg.range_m, self.cfg.p_edge);
            let u = engine.rng.uniform(StreamId {
                node: receiver,
                purpose: StreamPurpose::ChannelLoss,
            });
            let mut verdict = if u < p {
                Verdict::Delivered
            } else {
                Verdict::LostChannel
            };
            // Ongoing transmissions the receiver can hear collide with this
            // frame (including the receiver's own: half-duplex).
            let collided = self.ongoing.iter().any(|tx| {
                tx.channel == frame.channel
                    && tx.t_end > now
                    && self.in_range_raw(tx.sender, receiver)
            });
            if collided {
                verdict = Verdict::LostCollision;
            }
            let rx = RxId(self.next_rx);
            self.next_rx += 1;
            self.pending.insert(
                rx.0,
                PendingRx {
                    verdict,
                    receiver,
                    channel: frame.channel,
                    t_start: now,
                    t_end,
                },
            );
            engine.schedule(t_end, receiver, EventKind::FrameRxEnd { frame, rx });
        }

        self.ongoing.push(OngoingTx {
            sender: frame.sender,
            channel: frame.channel,
            t_end,
        });
    }

    /// Final verdict for a reception whose `FrameRxEnd` just fired.
    pub fn finalize_rx(&mut self, rx: RxId) -> Verdict {
        self.pending
            .remove(&rx.0)
            .expect("rx finalized exactly once")
            .verdict
    }

    fn in_range_raw(&self, a: NodeId, b: NodeId) -> bool {
        self.distance(a, b) <= self.cfg.range_m
    }
}

/// Sink at the origin, sources evenly spaced on a circle of
/// `factor * range`: every pair of nodes mutually in range, i.e. a single
/// collision domain.
pub fn circle_layout(sources: u16, range_m: f64, factor: f64) -> Vec<(f64, f64)> {
    let mut positions = vec![(0.0, 0.0)];
    let r = range_m * factor;
    for k in 0..sources {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / sources as f64;
        positions.push((r * theta.cos(), r * theta.sin()));
    }
    positions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::World;
    use crate::event::Event;
    use crate::frame::{FrameKind, FrameMeta};
    use crate::packet::{PacketId, Priority};
    use proptest::prelude::*;

    fn test_frame(sender: u16, receiver: u16, channel: u8, airtime: u64) -> Frame {
        Frame {
            kind: FrameKind::Data,
            sender: NodeId(sender),
            receiver: NodeId(receiver),
            channel,
            payload_units: 1,
            airtime,
            meta: FrameMeta::Data {
                packet: PacketId::new(NodeId(sender), Priority::Normal, 0),
                class: Priority::Normal,
                frag_index: 0,
                frag_count: 1,
                round_end: true,
            },
        }
    }

    /// Collects finalized verdicts per receiver.
    struct Collector {
        medium: Medium,
        verdicts: Vec<(NodeId, Verdict)>,
    }

    impl World for Collector {
        fn handle(&mut self, _engine: &mut Engine, event: Event) {
            if let EventKind::FrameRxEnd { rx, .. } = event.kind {
                let verdict = self.medium.finalize_rx(rx);
                self.verdicts.push((event.target, verdict));
            }
        }
    }

    fn run_transmissions(
        cfg: MediumConfig,
        positions: Vec<(f64, f64)>,
        frames: Vec<(SimTime, Frame)>,
    ) -> Vec<(NodeId, Verdict)> {
        let mut engine = Engine::new(42);
        let world = Collector {
            medium: Medium::new(cfg, positions),
            verdicts: Vec::new(),
        };
        // Drive transmissions from a scripted schedule.
        for (at, frame) in frames {
            engine.schedule(at, frame.sender, EventKind::FrameTxStart(frame));
        }
        struct Driver(Collector);
        impl World for Driver {
            fn handle(&mut self, engine: &mut Engine, event: Event) {
                match &event.kind {
                    EventKind::FrameTxStart(frame) => self.0.medium.transmit(engine, *frame),
                    _ => self.0.handle(engine, event),
                }
            }
        }
        let mut driver = Driver(world);
        engine.run_until(&mut driver, SimTime(1_000_000));
        driver.0.verdicts
    }

    #[test]
    fn in_range_boundary_is_inclusive() {
        let m = Medium::new(
            MediumConfig {
                range_m: 10.0,
                p_edge: 1.0,
                channels: 1,
            },
            vec![(0.0, 0.0), (10.0, 0.0), (10.000001, 0.0)],
        );
        assert!(m.in_range(NodeId(0), NodeId(0))); // d = 0
        assert!(m.in_range(NodeId(0), NodeId(1))); // d = R
        assert!(!m.in_range(NodeId(0), NodeId(2))); // d = R + eps
    }

    #[test]
    #[should_panic(expected = "unknown node id")]
    fn unknown_node_is_fatal() {
        let m = Medium::new(MediumConfig::default(), vec![(0.0, 0.0)]);
        m.in_range(NodeId(0), NodeId(5));
    }

    #[test]
    fn reception_probability_known_points() {
        assert_eq!(reception_probability(0.0, 50.0, 0.9), 1.0);
        assert!((reception_probability(50.0, 50.0, 0.9) - 0.9).abs() < 1e-12);
        // 1 - 0.2 * 0.25 = 0.95
        assert!((reception_probability(25.0, 50.0, 0.8) - 0.95).abs() < 1e-12);
        assert_eq!(reception_probability(50.1, 50.0, 0.9), 0.0);
    }

    #[test]
    fn single_transmitter_certain_delivery_at_zero_distance() {
        let verdicts = run_transmissions(
            MediumConfig {
                range_m: 10.0,
                p_edge: 1.0,
                channels: 1,
            },
            vec![(0.0, 0.0), (0.0, 0.0)],
            vec![(SimTime(0), test_frame(0, 1, 0, 100))],
        );
        assert_eq!(verdicts, vec![(NodeId(1), Verdict::Delivered)]);
    }

    #[test]
    fn overlapping_same_channel_transmissions_collide_at_common_receiver() {
        // Senders 0 and 1, common receiver 2; frames overlap in time.
        let verdicts = run_transmissions(
            MediumConfig {
                range_m: 10.0,
                p_edge: 1.0,
                channels: 1,
            },
            vec![(0.0, 0.0), (1.0, 0.0), (0.5, 0.5)],
            vec![
                (SimTime(0), test_frame(0, 2, 0, 100)),
                (SimTime(50), test_frame(1, 2, 0, 100)),
            ],
        );
        let at_2: Vec<Verdict> = verdicts
            .iter()
            .filter(|(n, _)| *n == NodeId(2))
            .map(|(_, v)| *v)
            .collect();
        assert_eq!(at_2, vec![Verdict::LostCollision, Verdict::LostCollision]);
    }

    #[test]
    fn different_channels_are_isolated() {
        let verdicts = run_transmissions(
            MediumConfig {
                range_m: 10.0,
                p_edge: 1.0,
                channels: 2,
            },
            vec![(0.0, 0.0), (1.0, 0.0), (0.5, 0.5)],
            vec![
                (SimTime(0), test_frame(0, 2, 0, 100)),
                (SimTime(50), test_frame(1, 2, 1, 100)),
            ],
        );
        let at_2: Vec<Verdict> = verdicts
            .iter()
            .filter(|(n, _)| *n == NodeId(2))
            .map(|(_, v)| *v)
            .collect();
        assert_eq!(at_2, vec![Verdict::Delivered, Verdict::Delivered]);
    }

    #[test]
    fn back_to_back_frames_do_not_collide() {
        // Second frame starts exactly when the first ends: half-open
        // intervals, no overlap.
        let verdicts = run_transmissions(
            MediumConfig {
                range_m: 10.0,
                p_edge: 1.0,
                channels: 1,
            },
            vec![(0.0, 0.0), (1.0, 0.0), (0.5, 0.5)],
            vec![
                (SimTime(0), test_frame(0, 2, 0, 100)),
                (SimTime(100), test_frame(1, 2, 0, 100)),
            ],
        );
        assert!(verdicts
            .iter()
            .filter(|(n, _)| *n == NodeId(2))
            .all(|(_, v)| *v == Verdict::Delivered));
    }

    #[test]
    fn half_duplex_receiver_loses_frame_while_transmitting() {
        let verdicts = run_transmissions(
            MediumConfig {
                range_m: 10.0,
                p_edge: 1.0,
                channels: 1,
            },
            vec![(0.0, 0.0), (1.0, 0.0)],
            vec![
                (SimTime(0), test_frame(0, 1, 0, 100)),
                (SimTime(10), test_frame(1, 0, 0, 100)),
            ],
        );
        // Both receptions are corrupted: each node hears the other while
        // itself transmitting.
        assert!(verdicts.iter().all(|(_, v)| *v == Verdict::LostCollision));
    }

    #[test]
    fn carrier_sense_rules() {
        let mut engine = Engine::new(1);
        let mut m = Medium::new(
            MediumConfig {
                range_m: 10.0,
                p_edge: 1.0,
                channels: 1,
            },
            // Node 2 is out of range of node 0 (hidden terminal setup).
            vec![(0.0, 0.0), (5.0, 0.0), (30.0, 0.0)],
        );
        assert!(!m.carrier_busy(NodeId(1), 0, SimTime(0)));
        m.transmit(&mut engine, test_frame(0, 1, 0, 100));
        assert!(m.carrier_busy(NodeId(1), 0, SimTime(50)));
        assert!(
            !m.carrier_busy(NodeId(2), 0, SimTime(50)),
            "out-of-range sender is inaudible"
        );
        assert!(!m.carrier_busy(NodeId(1), 0, SimTime(100)), "tx over");
    }

    #[test]
    fn monte_carlo_delivery_ratio_matches_model() {
        // 10^4 frames per distance point; empirical ratio within ±0.02.
        let range = 50.0;
        let p_edge = 0.9;
        for (node, d) in [(1u16, 0.0), (2, 25.0), (3, 50.0)] {
            let mut engine = Engine::new(1000 + node as u64);
            let positions = vec![(0.0, 0.0), (0.0, 0.0), (25.0, 0.0), (50.0, 0.0)];
            struct Counter {
                medium: Medium,
                target: NodeId,
                delivered: u32,
                total: u32,
            }
            impl World for Counter {
                fn handle(&mut self, _engine: &mut Engine, event: Event) {
                    if let EventKind::FrameRxEnd { rx, .. } = event.kind {
                        let v = self.medium.finalize_rx(rx);
                        if event.target == self.target {
                            self.total += 1;
                            if v == Verdict::Delivered {
                                self.delivered += 1;
                            }
                        }
                    }
                }
            }
            let world = Counter {
                medium: Medium::new(
                    MediumConfig {
                        range_m: range,
                        p_edge,
                        channels: 1,
                    },
                    positions,
                ),
                target: NodeId(node),
                delivered: 0,
                total: 0,
            };
            for i in 0..10_000u64 {
                let frame = test_frame(0, node, 0, 10);
                engine.schedule(SimTime(i * 20), NodeId(0), EventKind::FrameTxStart(frame));
            }
            struct Driver(Counter);
            impl World for Driver {
                fn handle(&mut self, engine: &mut Engine, event: Event) {
                    match &event.kind {
                        EventKind::FrameTxStart(f) => self.0.medium.transmit(engine, *f),
                        _ => self.0.handle(engine, event),
                    }
                }
            }
            let mut driver = Driver(world);
            engine.run_until(&mut driver, SimTime(10_000 * 20 + 100));
            let world = driver.0;
            assert_eq!(world.total, 10_000);
            let ratio = world.delivered as f64 / world.total as f64;
            let expected = reception_probability(d, range, p_edge);
            assert!(
                (ratio - expected).abs() <= 0.02,
                "d={d}: ratio {ratio} vs expected {expected}"
            );
        }
    }

    proptest! {
        #[test]
        fn in_range_is_reciprocal(
            ax in -100.0f64..100.0, ay in -100.0f64..100.0,
            bx in -100.0f64..100.0, by in -100.0f64..100.0,
            range in 1.0f64..150.0,
        ) {
            let m = Medium::new(
                MediumConfig { range_m: range, p_edge: 0.9, channels: 1 },
                vec![(ax, ay), (bx, by)],
            );
            prop_assert_eq!(m.in_range(NodeId(0), NodeId(1)), m.in_range(NodeId(1), NodeId(0)));
        }

        #[test]
        fn reception_probability_is_monotone_in_distance(
            d1 in 0.0f64..50.0, d2 in 0.0f64..50.0, p_edge in 0.0f64..=1.0,
        ) {
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let pn = reception_probability(near, 50.0, p_edge);
            let pf = reception_probability(far, 50.0, p_edge);
            prop_assert!(pn >= pf);
        }
    }
}
