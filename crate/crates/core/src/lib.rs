//! # macsim-core
//!
//! A deterministic discrete-event simulator for priority-aware wireless MAC
//! protocols over a unit-disk radio medium. Three protocols are modelled:
//!
//! - **FROG-MAC**: CSMA/CA with RTS/CTS where normal-priority packets are
//!   sent as fixed-size fragments with pauses in between, so an urgent
//!   contender can grab the channel mid-stream.
//! - **DyFrag-MAC**: the FROG machine plus a sink-side controller that
//!   halves the fragment size when urgent traffic shows up and doubles it
//!   back after quiet assessment cycles.
//! - **i-DSME baseline**: a superframe MAC with a contention access period
//!   for slot requests and a multi-channel contention-free period of
//!   guaranteed slots; no preemption of ongoing transmissions.
//!
//! The engine is single-threaded per run and fully deterministic for a fixed
//! master seed: event ordering is `(time, seq)`, randomness comes from
//! per-(node, purpose) ChaCha streams, and every run produces a stable trace
//! digest usable as a regression oracle. Independent runs are shared-nothing
//! and may execute in parallel.

pub mod engine;
pub mod event;
pub mod experiment;
pub mod frame;
pub mod mac;
pub mod medium;
pub mod metrics;
pub mod monitor;
pub mod packet;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod time;
pub mod traffic;

pub use engine::{Engine, World};
pub use packet::{NodeId, Packet, PacketId, Priority, SINK};
pub use scenario::{Protocol, Scenario};
pub use time::{SimTime, Ticks};
