//! FROG-MAC fragmentation and the CSMA/CA timing configuration shared by
//! the two fragmentation protocols.
//!
//! Normal packets are cut into fixed-size fragments separated by an on-air
//! pause long enough for an urgent contender to land a complete RTS; urgent
//! packets always go out as a single unfragmented burst.

use thiserror::Error;

use crate::time::Ticks;

/// Timing constants for the CSMA/CA + RTS/CTS machine, in ticks (µs).
/// Defaults are 802.15.4-flavored magnitudes: 64 µs per payload unit
/// (2 bytes at 250 kb/s), 320 µs backoff slots, 352 µs control frames.
#[derive(Clone, Copy, Debug)]
pub struct CsmaTiming {
    /// Clear-channel assessment window.
    pub cca: Ticks,
    /// One backoff slot.
    pub backoff_unit: Ticks,
    pub min_be: u8,
    pub max_be: u8,
    /// Handshake failures (CTS/ACK timeouts) tolerated before the head
    /// packet is dropped. Busy-channel CCA deferrals do not consume this
    /// budget; they only escalate the backoff exponent.
    pub max_retries: u8,
    /// RTS, CTS and ACK airtime.
    pub control_air: Ticks,
    /// Fixed per-DATA-frame overhead (preamble + header).
    pub data_overhead: Ticks,
    /// Airtime per payload unit.
    pub ticks_per_unit: Ticks,
    /// Inter-fragment pause. Must exceed `cca + control_air` so an urgent
    /// contender can complete its RTS inside one pause.
    pub frag_gap: Ticks,
    /// Rx/tx turnaround before a response frame (CTS after RTS, ACK after
    /// data, next fragment after CTS).
    pub turnaround: Ticks,
    /// How long a sender waits for the CTS after its RTS left the air.
    pub cts_wait: Ticks,
    /// How long a sender waits for the ACK after its round-end DATA frame
    /// left the air.
    pub ack_wait: Ticks,
    /// Pause extension after overhearing an urgent RTS addressed to the
    /// sink: long enough for the sink's CTS to clear the air, so the
    /// resuming fragment cannot stomp on the grant.
    pub hold_window: Ticks,
    /// Slack added on top of computed guard durations.
    pub guard_margin: Ticks,
}

impl Default for CsmaTiming {
    fn default() -> Self {
        CsmaTiming {
            cca: 128,
            backoff_unit: 320,
            min_be: 3,
            max_be: 5,
            max_retries: 8,
            control_air: 352,
            data_overhead: 192,
            ticks_per_unit: 64,
            frag_gap: 640,
            turnaround: 192,
            cts_wait: 1_000,
            ack_wait: 1_000,
            hold_window: 736, // turnaround + CTS + turnaround
            guard_margin: 320,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MacConfigError {
    #[error("frag_gap ({gap}) must exceed cca + control_air ({min})")]
    GapTooShort { gap: Ticks, min: Ticks },
    #[error("fragment size must be at least 1 unit")]
    ZeroFragment,
    #[error("backoff exponents must satisfy 0 < min_be <= max_be")]
    BadBackoffExponents,
    #[error(
        "fragment ladder invalid: max_units ({max}) must be min_units ({min}) times a power of two"
    )]
    BadLadder { min: u32, max: u32 },
    #[error("assessment cycle must be positive")]
    ZeroAssessmentCycle,
}

impl CsmaTiming {
    pub fn validate(&self) -> Result<(), MacConfigError> {
        if self.frag_gap <= self.cca + self.control_air {
            return Err(MacConfigError::GapTooShort {
                gap: self.frag_gap,
                min: self.cca + self.control_air,
            });
        }
        if self.min_be == 0 || self.min_be > self.max_be {
            return Err(MacConfigError::BadBackoffExponents);
        }
        Ok(())
    }

    pub fn data_air(&self, units: u32) -> Ticks {
        self.data_overhead + self.ticks_per_unit * units as u64
    }
}

/// FROG-MAC: the timing plus a fixed fragment size for normal packets.
#[derive(Clone, Copy, Debug)]
pub struct FrogConfig {
    pub timing: CsmaTiming,
    pub fragment_units: u32,
}

impl FrogConfig {
    pub fn validate(&self) -> Result<(), MacConfigError> {
        self.timing.validate()?;
        if self.fragment_units == 0 {
            return Err(MacConfigError::ZeroFragment);
        }
        Ok(())
    }
}

impl Default for FrogConfig {
    fn default() -> Self {
        FrogConfig {
            timing: CsmaTiming::default(),
            fragment_units: 16,
        }
    }
}

/// Split a payload into fragment sizes: `ceil(units / frag)` fragments, all
/// of size `frag` except a possibly smaller last one.
pub fn fragment_packet(units: u32, frag: u32) -> Vec<u32> {
    assert!(units >= 1 && frag >= 1, "payload and fragment size >= 1");
    let mut sizes = Vec::with_capacity(units.div_ceil(frag) as usize);
    let mut remaining = units;
    while remaining > 0 {
        let take = remaining.min(frag);
        sizes.push(take);
        remaining -= take;
    }
    debug_assert!(sizes.len() <= 64, "selective-ACK bitmap holds 64 fragments");
    sizes
}
