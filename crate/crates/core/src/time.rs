//! Fixed-point simulation time.
//!
//! One tick is a tenth of a time unit. Every clock value and duration is an
//! integer tick count, so slot arithmetic never drifts.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Ticks per time unit.
pub const TICKS_PER_UNIT: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeError {
    #[error("time value {0} is negative")]
    Negative(f64),
    #[error("time value {0} is not finite")]
    NotFinite(f64),
    #[error("time value {0} is not a multiple of 0.1")]
    NotOnTickGrid(f64),
}

fn units_to_ticks(units: f64) -> Result<u64, TimeError> {
    if !units.is_finite() {
        return Err(TimeError::NotFinite(units));
    }
    if units < 0.0 {
        return Err(TimeError::Negative(units));
    }
    let scaled = units * TICKS_PER_UNIT as f64;
    let rounded = scaled.round();
    if (scaled - rounded).abs() > 1e-6 {
        return Err(TimeError::NotOnTickGrid(units));
    }
    Ok(rounded as u64)
}

fn fmt_ticks(ticks: u64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "{}.{}", ticks / TICKS_PER_UNIT, ticks % TICKS_PER_UNIT)
}

/// An instant on the simulation clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

/// A non-negative span of simulation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimDuration(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_ticks(ticks: u64) -> Self {
        SimTime(ticks)
    }

    pub fn from_units(units: f64) -> Result<Self, TimeError> {
        units_to_ticks(units).map(SimTime)
    }

    pub const fn ticks(self) -> u64 {
        self.0
    }

    pub fn as_units(self) -> f64 {
        self.0 as f64 / TICKS_PER_UNIT as f64
    }

    /// Time elapsed since `earlier`, or zero if `earlier` is later.
    pub fn saturating_since(self, earlier: SimTime) -> SimDuration {
        SimDuration(self.0.saturating_sub(earlier.0))
    }
}

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub const fn from_ticks(ticks: u64) -> Self {
        SimDuration(ticks)
    }

    pub fn from_units(units: f64) -> Result<Self, TimeError> {
        units_to_ticks(units).map(SimDuration)
    }

    pub const fn ticks(self) -> u64 {
        self.0
    }

    pub fn as_units(self) -> f64 {
        self.0 as f64 / TICKS_PER_UNIT as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign<SimDuration> for SimTime {
    fn add_assign(&mut self, rhs: SimDuration) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimDuration;
    /// Panics if `rhs` is later than `self`.
    fn sub(self, rhs: SimTime) -> SimDuration {
        SimDuration(
            self.0
                .checked_sub(rhs.0)
                .expect("simulation time subtraction underflow"),
        )
    }
}

impl Add for SimDuration {
    type Output = SimDuration;
    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 + rhs.0)
    }
}

impl Sub for SimDuration {
    type Output = SimDuration;
    fn sub(self, rhs: SimDuration) -> SimDuration {
        SimDuration(
            self.0
                .checked_sub(rhs.0)
                .expect("simulation duration subtraction underflow"),
        )
    }
}

impl Mul<u64> for SimDuration {
    type Output = SimDuration;
    fn mul(self, rhs: u64) -> SimDuration {
        SimDuration(self.0 * rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_ticks(self.0, f)
    }
}

impl fmt::Display for SimDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_ticks(self.0, f)
    }
}

// Scenario files carry time in units (e.g. `100.5`), not ticks.

impl Serialize for SimTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_units())
    }
}

impl<'de> Deserialize<'de> for SimTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let units = f64::deserialize(d)?;
        SimTime::from_units(units).map_err(serde::de::Error::custom)
    }
}

impl Serialize for SimDuration {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_units())
    }
}

impl<'de> Deserialize<'de> for SimDuration {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let units = f64::deserialize(d)?;
        SimDuration::from_units(units).map_err(serde::de::Error::custom)
    }
}
