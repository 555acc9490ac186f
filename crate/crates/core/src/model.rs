//! Shared domain types: identifiers, calendar windows and min-max normalization.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value at index {0}")]
    InvalidValue(usize),
    #[error("invalid window: {start} is after {end}")]
    InvalidWindow { start: NaiveDate, end: NaiveDate },
    #[error("invalid identifier: {0:?}")]
    InvalidIdentifier(String),
    #[error("cannot parse window {0:?}, expected YYYY-MM-DD:YYYY-MM-DD")]
    WindowSyntax(String),
}

fn normalize_id(raw: &str) -> Result<String, ModelError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(ModelError::InvalidIdentifier(raw.to_string()));
    }
    Ok(trimmed.to_ascii_lowercase())
}

/// Smart-contract address of a project, lowercased.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ProjectId(String);

impl ProjectId {
    pub fn new(raw: &str) -> Result<Self, ModelError> {
        normalize_id(raw).map(Self)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ProjectId {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<ProjectId> for String {
    fn from(value: ProjectId) -> Self {
        value.0
    }
}

impl fmt::Display for ProjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Canonical mint/burn counterparty.
pub const ZERO_ADDRESS: &str = "0x0000000000000000000000000000000000000000";

/// Lowercased wallet address. Any `0x`-prefixed run of zeros is folded into
/// [`ZERO_ADDRESS`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct WalletAddress(String);

impl WalletAddress {
    pub fn new(raw: &str) -> Result<Self, ModelError> {
        let id = normalize_id(raw)?;
        let digits = id.strip_prefix("0x").unwrap_or(&id);
        if !digits.is_empty() && digits.bytes().all(|b| b == b'0') {
            return Ok(Self::zero());
        }
        Ok(Self(id))
    }

    pub fn zero() -> Self {
        Self(ZERO_ADDRESS.to_string())
    }

    pub fn is_zero(&self) -> bool {
        self.0 == ZERO_ADDRESS
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for WalletAddress {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<WalletAddress> for String {
    fn from(value: WalletAddress) -> Self {
        value.0
    }
}

impl fmt::Display for WalletAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub id: ProjectId,
    pub name: String,
    pub twitter_hashtag: String,
    pub launch_date: NaiveDate,
}

/// Inclusive range of UTC calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl TimeWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, ModelError> {
        if start > end {
            return Err(ModelError::InvalidWindow { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn single(day: NaiveDate) -> Self {
        Self { start: day, end: day }
    }

    pub fn days(&self) -> u32 {
        (self.end - self.start).num_days() as u32 + 1
    }

    pub fn contains(&self, day: NaiveDate) -> bool {
        self.start <= day && day <= self.end
    }

    pub fn iter_days(&self) -> impl Iterator<Item = NaiveDate> {
        let start = self.start;
        (0..self.days() as u64).map(move |k| start + chrono::Days::new(k))
    }

    /// Intersection with another window, if non-empty.
    pub fn intersect(&self, other: &TimeWindow) -> Option<TimeWindow> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start <= end).then_some(TimeWindow { start, end })
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

impl FromStr for TimeWindow {
    type Err = ModelError;

    /// Parses `YYYY-MM-DD:YYYY-MM-DD`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::WindowSyntax(s.to_string());
        let (a, b) = s.trim().split_once(':').ok_or_else(bad)?;
        let start = NaiveDate::parse_from_str(a.trim(), "%Y-%m-%d").map_err(|_| bad())?;
        let end = NaiveDate::parse_from_str(b.trim(), "%Y-%m-%d").map_err(|_| bad())?;
        TimeWindow::new(start, end)
    }
}

/// Inclusive day count of a window.
pub fn window_days(window: &TimeWindow) -> Result<u32, ModelError> {
    if window.start > window.end {
        return Err(ModelError::InvalidWindow {
            start: window.start,
            end: window.end,
        });
    }
    Ok(window.days())
}

/// A series rescaled into `[0, 1]` together with the bounds needed to undo it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub values: Vec<f64>,
    pub raw_min: f64,
    pub raw_max: f64,
}

impl NormalizedSeries {
    pub fn is_degenerate(&self) -> bool {
        self.raw_min == self.raw_max
    }

    /// Maps a normalized value back to the raw scale. A degenerate series
    /// maps everything back to its single raw value.
    pub fn denormalize(&self, value: f64) -> f64 {
        if self.is_degenerate() {
            self.raw_min
        } else {
            self.raw_min + value * (self.raw_max - self.raw_min)
        }
    }
}

/// Min-max rescaling. A constant series maps every entry to 0.5.
pub fn minmax_normalize(series: &[f64]) -> Result<NormalizedSeries, ModelError> {
    if series.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if let Some(idx) = series.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::InvalidValue(idx));
    }
    let raw_min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let raw_max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = raw_max - raw_min;
    let values = if span > 0.0 {
        series
            .iter()
            .map(|v| ((v - raw_min) / span).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.5; series.len()]
    };
    Ok(NormalizedSeries {
        values,
        raw_min,
        raw_max,
    })
}
