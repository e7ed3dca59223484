//! MAC protocol implementations.
//!
//! `frog` holds the fragmentation rules and the shared CSMA/CA timing
//! configuration; `csma` is the event-driven source/sink machine used by
//! both FROG-MAC (fixed fragment size) and DyFrag-MAC (sink-controlled
//! size, see `dyfrag`); `idsme` is the superframe baseline.

pub mod csma;
pub mod dyfrag;
pub mod frog;
pub mod idsme;
