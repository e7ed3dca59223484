//! DyFrag-MAC's contribution: the fragment-size controller.
//!
//! The sink watches urgent traffic in recurring assessment cycles. Each
//! urgent arrival halves the fragment size used for normal packets and
//! restarts the cycle timer; a cycle that ends with no urgent arrival
//! doubles the size back. The size stays on the power-of-two ladder
//! `{min_units * 2^k}` clamped to `[min_units, max_units]`, and starts at
//! `max_units` (the full payload: no fragmentation until urgent traffic
//! shows up). Senders learn the current size from a field piggybacked on
//! every CTS.

use crate::mac::frog::{CsmaTiming, MacConfigError};
use crate::time::Ticks;

#[derive(Clone, Copy, Debug)]
pub struct DyFragConfig {
    pub timing: CsmaTiming,
    pub min_units: u32,
    pub max_units: u32,
    /// Assessment cycle length.
    pub assess_interval: Ticks,
}

impl Default for DyFragConfig {
    fn default() -> Self {
        DyFragConfig {
            timing: CsmaTiming::default(),
            min_units: 2,
            max_units: 64,
            assess_interval: 20_000,
        }
    }
}

impl DyFragConfig {
    pub fn validate(&self) -> Result<(), MacConfigError> {
        self.timing.validate()?;
        if self.min_units == 0 {
            return Err(MacConfigError::ZeroFragment);
        }
        if self.assess_interval == 0 {
            return Err(MacConfigError::ZeroAssessmentCycle);
        }
        // The halve/double rules walk a power-of-two ladder; max must sit on it.
        let ratio_ok = self.max_units >= self.min_units
            && self.max_units.is_multiple_of(self.min_units)
            && (self.max_units / self.min_units).is_power_of_two();
        if !ratio_ok {
            return Err(MacConfigError::BadLadder {
                min: self.min_units,
                max: self.max_units,
            });
        }
        Ok(())
    }
}

/// The adaptive fragment-size state. Lives at the sink; one per run.
#[derive(Clone, Copy, Debug)]
pub struct FragController {
    current: u32,
    min_units: u32,
    max_units: u32,
    /// Set when an urgent arrival is observed, cleared whenever a new
    /// assessment cycle starts (both on urgent-triggered restarts and on
    /// natural cycle expiry).
    urgent_seen: bool,
}

impl FragController {
    pub fn new(cfg: &DyFragConfig) -> FragController {
        FragController {
            current: cfg.max_units,
            min_units: cfg.min_units,
            max_units: cfg.max_units,
            urgent_seen: false,
        }
    }

    /// Fragment size to apply to the next normal packet.
    pub fn current(&self) -> u32 {
        self.current
    }

    /// An urgent packet entered the system: halve (clamped) and restart the
    /// cycle. The caller must reset its cycle timer. Returns true when the
    /// size changed.
    pub fn on_urgent_arrival(&mut self) -> bool {
        self.urgent_seen = true;
        let next = (self.current / 2).max(self.min_units);
        let changed = next != self.current;
        self.current = next;
        // The urgent arrival begins a fresh cycle.
        self.urgent_seen = false;
        changed
    }

    /// The assessment cycle elapsed. A quiet cycle doubles the size
    /// (clamped); the flag resets and a new cycle begins either way.
    /// Returns true when the size changed.
    pub fn on_cycle_end(&mut self) -> bool {
        let mut changed = false;
        if !self.urgent_seen {
            let next = (self.current * 2).min(self.max_units);
            changed = next != self.current;
            self.current = next;
        }
        self.urgent_seen = false;
        changed
    }

    /// Power-of-two ladder membership within bounds; holds after every
    /// controller event.
    pub fn ladder_ok(&self) -> bool {
        self.current >= self.min_units
            && self.current <= self.max_units
            && self.current.is_multiple_of(self.min_units)
            && (self.current / self.min_units).is_power_of_two()
    }
}
