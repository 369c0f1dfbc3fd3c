//! Frequency bands, regional clocks and daily down-time windows.
//!
//! Everything here is a plain value type. Simulation time is an integer tick
//! count; a [`Timebase`] turns ticks into UTC minutes so that local wall-clock
//! questions ("is it night in this region?") reduce to modular arithmetic on
//! minutes of the day.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::RegionId;

pub const MINUTES_PER_DAY: u32 = 1440;

/// Smallest and largest UTC offsets found in civil time zones (UTC-12:00 .. UTC+14:00).
pub const MIN_UTC_OFFSET_MINUTES: i32 = -720;
pub const MAX_UTC_OFFSET_MINUTES: i32 = 840;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpectrumError {
    #[error("invalid band [{low_hz}, {high_hz}): low must be below high")]
    InvalidBand { low_hz: u64, high_hz: u64 },
    #[error("utc offset {0} min outside {MIN_UTC_OFFSET_MINUTES}..={MAX_UTC_OFFSET_MINUTES}")]
    OffsetOutOfRange(i32),
    #[error("down-time start {0} must be below {MINUTES_PER_DAY}")]
    WindowStart(u32),
    #[error("down-time duration {0} must be in 1..={MINUTES_PER_DAY}")]
    WindowDuration(u32),
    #[error("tick length must be positive")]
    ZeroTickSeconds,
}

/// Half-open frequency interval `[low_hz, high_hz)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawBand", into = "RawBand")]
pub struct FrequencyBand {
    low_hz: u64,
    high_hz: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBand {
    low_hz: u64,
    high_hz: u64,
}

impl TryFrom<RawBand> for FrequencyBand {
    type Error = SpectrumError;

    fn try_from(raw: RawBand) -> Result<Self, Self::Error> {
        FrequencyBand::new(raw.low_hz, raw.high_hz)
    }
}

impl From<FrequencyBand> for RawBand {
    fn from(band: FrequencyBand) -> Self {
        RawBand {
            low_hz: band.low_hz,
            high_hz: band.high_hz,
        }
    }
}

impl FrequencyBand {
    pub fn new(low_hz: u64, high_hz: u64) -> Result<Self, SpectrumError> {
        if low_hz < high_hz {
            Ok(Self { low_hz, high_hz })
        } else {
            Err(SpectrumError::InvalidBand { low_hz, high_hz })
        }
    }

    pub fn low_hz(&self) -> u64 {
        self.low_hz
    }

    pub fn high_hz(&self) -> u64 {
        self.high_hz
    }

    pub fn width_hz(&self) -> u64 {
        self.high_hz - self.low_hz
    }

    pub fn overlaps(&self, other: &FrequencyBand) -> bool {
        bands_overlap(self, other)
    }
}

impl fmt::Display for FrequencyBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.low_hz, self.high_hz)
    }
}

/// True iff the two half-open intervals share at least one frequency.
/// Adjacent bands (`a.high == b.low`) do not overlap.
pub fn bands_overlap(a: &FrequencyBand, b: &FrequencyBand) -> bool {
    a.low_hz.max(b.low_hz) < a.high_hz.min(b.high_hz)
}

/// Static offset of a region's civil clock from UTC, in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct UtcOffset(i32);

impl UtcOffset {
    pub fn from_minutes(minutes: i32) -> Result<Self, SpectrumError> {
        if (MIN_UTC_OFFSET_MINUTES..=MAX_UTC_OFFSET_MINUTES).contains(&minutes) {
            Ok(Self(minutes))
        } else {
            Err(SpectrumError::OffsetOutOfRange(minutes))
        }
    }

    pub fn minutes(&self) -> i32 {
        self.0
    }
}

impl TryFrom<i32> for UtcOffset {
    type Error = SpectrumError;

    fn try_from(value: i32) -> Result<Self, Self::Error> {
        Self::from_minutes(value)
    }
}

impl From<UtcOffset> for i32 {
    fn from(offset: UtcOffset) -> Self {
        offset.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub id: RegionId,
    pub utc_offset: UtcOffset,
}

/// Simulation time in ticks since the scenario epoch (00:00 UTC).
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct UtcTime(pub u64);

impl UtcTime {
    pub const ZERO: UtcTime = UtcTime(0);

    pub fn ticks(&self) -> u64 {
        self.0
    }

    pub fn saturating_add(self, ticks: u64) -> UtcTime {
        UtcTime(self.0.saturating_add(ticks))
    }

    /// Ticks from `earlier` to `self`, zero if `earlier` is later.
    pub fn ticks_since(self, earlier: UtcTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for UtcTime {
    type Output = UtcTime;

    fn add(self, ticks: u64) -> UtcTime {
        UtcTime(self.0 + ticks)
    }
}

impl Sub for UtcTime {
    type Output = u64;

    fn sub(self, rhs: UtcTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for UtcTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Real seconds represented by one simulation tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Timebase {
    tick_seconds: u32,
}

impl Default for Timebase {
    fn default() -> Self {
        Self { tick_seconds: 60 }
    }
}

impl TryFrom<u32> for Timebase {
    type Error = SpectrumError;

    fn try_from(tick_seconds: u32) -> Result<Self, Self::Error> {
        Self::new(tick_seconds)
    }
}

impl From<Timebase> for u32 {
    fn from(tb: Timebase) -> Self {
        tb.tick_seconds
    }
}

impl Timebase {
    pub fn new(tick_seconds: u32) -> Result<Self, SpectrumError> {
        if tick_seconds == 0 {
            return Err(SpectrumError::ZeroTickSeconds);
        }
        Ok(Self { tick_seconds })
    }

    pub fn tick_seconds(&self) -> u32 {
        self.tick_seconds
    }

    /// Whole UTC minutes elapsed since the epoch.
    pub fn utc_minutes(&self, t: UtcTime) -> u64 {
        t.0.saturating_mul(u64::from(self.tick_seconds)) / 60
    }

    pub fn utc_minute_of_day(&self, t: UtcTime) -> u32 {
        (self.utc_minutes(t) % u64::from(MINUTES_PER_DAY)) as u32
    }
}

/// Local minute of day in a region whose clock runs `offset` ahead of UTC.
pub fn convert_time(timebase: Timebase, t: UtcTime, offset: UtcOffset) -> u32 {
    shift_minute_of_day(timebase.utc_minute_of_day(t), offset.minutes())
}

/// `(minute + offset) mod 1440`, always in `0..1440`.
pub fn shift_minute_of_day(minute_of_day: u32, offset_minutes: i32) -> u32 {
    (i64::from(minute_of_day) + i64::from(offset_minutes)).rem_euclid(i64::from(MINUTES_PER_DAY))
        as u32
}

/// Interval of local time during which licensed transmissions are stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawWindow", into = "RawWindow")]
pub struct DowntimeWindow {
    start_local_minutes: u32,
    duration_minutes: u32,
    repeats_daily: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindow {
    start_local_minutes: u32,
    duration_minutes: u32,
    #[serde(default = "default_true")]
    repeats_daily: bool,
}

fn default_true() -> bool {
    true
}

impl TryFrom<RawWindow> for DowntimeWindow {
    type Error = SpectrumError;

    fn try_from(raw: RawWindow) -> Result<Self, Self::Error> {
        DowntimeWindow::new(raw.start_local_minutes, raw.duration_minutes, raw.repeats_daily)
    }
}

impl From<DowntimeWindow> for RawWindow {
    fn from(w: DowntimeWindow) -> Self {
        RawWindow {
            start_local_minutes: w.start_local_minutes,
            duration_minutes: w.duration_minutes,
            repeats_daily: w.repeats_daily,
        }
    }
}

impl DowntimeWindow {
    pub fn new(
        start_local_minutes: u32,
        duration_minutes: u32,
        repeats_daily: bool,
    ) -> Result<Self, SpectrumError> {
        if start_local_minutes >= MINUTES_PER_DAY {
            return Err(SpectrumError::WindowStart(start_local_minutes));
        }
        if duration_minutes == 0 || duration_minutes > MINUTES_PER_DAY {
            return Err(SpectrumError::WindowDuration(duration_minutes));
        }
        Ok(Self {
            start_local_minutes,
            duration_minutes,
            repeats_daily,
        })
    }

    pub fn daily(start_local_minutes: u32, duration_minutes: u32) -> Result<Self, SpectrumError> {
        Self::new(start_local_minutes, duration_minutes, true)
    }

    pub fn start_local_minutes(&self) -> u32 {
        self.start_local_minutes
    }

    pub fn duration_minutes(&self) -> u32 {
        self.duration_minutes
    }

    pub fn repeats_daily(&self) -> bool {
        self.repeats_daily
    }

    /// Membership of a local minute of day, honouring wrap past midnight.
    pub fn contains_local_minute(&self, minute_of_day: u32) -> bool {
        let since_start = (i64::from(minute_of_day) - i64::from(self.start_local_minutes))
            .rem_euclid(i64::from(MINUTES_PER_DAY));
        since_start < i64::from(self.duration_minutes)
    }
}

/// Whether licensed users in `region` are silent at `t` under window `w`.
///
/// A non-repeating window fires once: from the first instant at or after the
/// epoch when the local clock reads `start_local_minutes`.
pub fn is_downtime(w: &DowntimeWindow, region: &Region, timebase: Timebase, t: UtcTime) -> bool {
    if w.repeats_daily {
        return w.contains_local_minute(convert_time(timebase, t, region.utc_offset));
    }
    let first_start = u64::from(shift_minute_of_day(
        w.start_local_minutes,
        -region.utc_offset.minutes(),
    ));
    let utc = timebase.utc_minutes(t);
    (first_start..first_start + u64::from(w.duration_minutes)).contains(&utc)
}
