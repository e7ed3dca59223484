//! Virtual time. One tick is one microsecond of simulated time; every
//! protocol timing constant in the crate is an exact integer tick count.

use std::fmt;
use std::ops::{Add, AddAssign};

/// A duration in ticks (µs).
pub type Ticks = u64;

pub const MILLIS: Ticks = 1_000;
pub const SECONDS: Ticks = 1_000_000;

/// An instant of virtual time, in ticks since the start of the run.
///
/// Instants never decrease while a run is in progress; the engine enforces
/// this by refusing to schedule into the past.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_ms(ms: u64) -> SimTime {
        SimTime(ms * MILLIS)
    }

    pub fn from_secs(s: u64) -> SimTime {
        SimTime(s * SECONDS)
    }

    pub fn as_ticks(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / SECONDS as f64
    }

    /// Ticks elapsed since `earlier`, clamped at zero.
    pub fn since(self, earlier: SimTime) -> Ticks {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<Ticks> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: Ticks) -> SimTime {
        SimTime(self.0 + rhs)
    }
}

impl AddAssign<Ticks> for SimTime {
    fn add_assign(&mut self, rhs: Ticks) {
        self.0 += rhs;
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / SECONDS, self.0 % SECONDS)
    }
}
