use std::fmt;
use std::str::FromStr;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

static TIMESTAMP_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^(\d+):(\d{1,2}):(\d{1,2})[,.](\d{1,3})$").unwrap());

/// Milliseconds from the start of the media.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(u64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid timestamp {0:?}")]
pub struct TimestampParseError(pub String);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_millis(ms: u64) -> Self {
        Timestamp(ms)
    }

    pub const fn from_secs(s: u64) -> Self {
        Timestamp(s * 1000)
    }

    pub const fn as_millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_sub(self, other: Timestamp) -> u64 {
        self.0.saturating_sub(other.0)
    }

    pub fn offset(self, ms: u64) -> Timestamp {
        Timestamp(self.0 + ms)
    }

    fn parts(self) -> (u64, u64, u64, u64) {
        let ms = self.0 % 1000;
        let total_s = self.0 / 1000;
        (total_s / 3600, (total_s / 60) % 60, total_s % 60, ms)
    }

    /// `hh:mm:ss,mmm`, hours zero-padded to two digits.
    pub fn to_srt(self) -> String {
        let (h, m, s, ms) = self.parts();
        format!("{h:02}:{m:02}:{s:02},{ms:03}")
    }

    /// `h:mm:ss,mmm` with unpadded hours (`0:00:01,229`).
    pub fn to_srt_unpadded(self) -> String {
        let (h, m, s, ms) = self.parts();
        format!("{h}:{m:02}:{s:02},{ms:03}")
    }

    /// Accepts padded or unpadded hours, `,` or `.` before the fraction, and
    /// a 1-3 digit fraction of a second (`,5` is 500 ms).
    pub fn parse_srt(text: &str) -> Result<Self, TimestampParseError> {
        let err = || TimestampParseError(text.to_string());
        let caps = TIMESTAMP_RE.captures(text.trim()).ok_or_else(err)?;
        let num = |i: usize| caps[i].parse::<u64>().map_err(|_| err());
        let (h, m, s) = (num(1)?, num(2)?, num(3)?);
        if m >= 60 || s >= 60 {
            return Err(err());
        }
        let frac = &caps[4];
        let ms = frac.parse::<u64>().map_err(|_| err())? * 10u64.pow(3 - frac.len() as u32);
        h.checked_mul(3_600_000)
            .and_then(|v| v.checked_add(m * 60_000 + s * 1000 + ms))
            .map(Timestamp)
            .ok_or_else(err)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_srt())
    }
}

impl FromStr for Timestamp {
    type Err = TimestampParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse_srt(s)
    }
}
