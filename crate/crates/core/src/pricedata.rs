//! Historical daily ETH/USD closes, chart windows and session start draws.
//!
//! A "day" is an entry in the series. Calendar spacing between entries is
//! never consulted, so gaps in the source data are harmless.

use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PriceError {
    #[error("dates must be strictly increasing (row {row}: {date} does not follow {previous})")]
    NonMonotonicDates {
        row: usize,
        previous: NaiveDate,
        date: NaiveDate,
    },
    #[error("close on row {row} must be a finite positive number")]
    NonPositivePrice { row: usize },
    #[error("series has {len} days, need at least {required}")]
    SeriesTooShort { len: usize, required: usize },
    #[error("decision day {decision_day} has fewer than {lookback} days of history")]
    InsufficientHistory {
        decision_day: usize,
        lookback: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub date: NaiveDate,
    /// USD per ETH.
    pub close: f64,
}

/// Validated, chronologically ordered daily closes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceSeries {
    points: Vec<PricePoint>,
}

impl PriceSeries {
    /// Validates ordering and positivity. Row numbers in errors are 1-based
    /// data rows (the header is not counted).
    pub fn new(points: Vec<PricePoint>) -> Result<Self, PriceError> {
        for (i, p) in points.iter().enumerate() {
            if !(p.close.is_finite() && p.close > 0.0) {
                return Err(PriceError::NonPositivePrice { row: i + 1 });
            }
            if i > 0 && points[i - 1].date >= p.date {
                return Err(PriceError::NonMonotonicDates {
                    row: i + 1,
                    previous: points[i - 1].date,
                    date: p.date,
                });
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    /// Close on trading day `index`. Panics when out of range.
    pub fn close(&self, index: usize) -> f64 {
        self.points[index].close
    }

    pub fn closes(&self, range: core::ops::Range<usize>) -> impl Iterator<Item = f64> + '_ {
        self.points[range].iter().map(|p| p.close)
    }
}

impl<'de> Deserialize<'de> for PriceSeries {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            points: Vec<PricePoint>,
        }
        let raw = Raw::deserialize(d)?;
        PriceSeries::new(raw.points).map_err(serde::de::Error::custom)
    }
}

/// The closes a subject sees before deciding: the `lookback` days that end
/// the day before the decision day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartWindow {
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
    pub end_date: NaiveDate,
}

/// Returns closes at `[decision_day - lookback, decision_day)`.
pub fn chart_window(
    series: &PriceSeries,
    decision_day: usize,
    lookback: usize,
) -> Result<ChartWindow, PriceError> {
    if lookback == 0 || decision_day < lookback || decision_day > series.len() {
        return Err(PriceError::InsufficientHistory {
            decision_day,
            lookback,
        });
    }
    let shown = &series.points[decision_day - lookback..decision_day];
    Ok(ChartWindow {
        dates: shown.iter().map(|p| p.date).collect(),
        closes: shown.iter().map(|p| p.close).collect(),
        end_date: shown[lookback - 1].date,
    })
}

/// Inclusive range of admissible first trading days for a block of
/// `horizon` days that needs `lookback` days of visible history.
pub fn start_range(
    len: usize,
    lookback: usize,
    horizon: usize,
) -> Result<core::ops::RangeInclusive<usize>, PriceError> {
    let required = lookback + horizon;
    if len < required || horizon == 0 {
        return Err(PriceError::SeriesTooShort { len, required });
    }
    Ok(lookback..=len - horizon)
}

/// Draws the first trading day uniformly from `[lookback, len - horizon]`.
pub fn draw_session_start<R: Rng + ?Sized>(
    series: &PriceSeries,
    lookback: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<usize, PriceError> {
    let range = start_range(series.len(), lookback, horizon)?;
    Ok(rng.random_range(range))
}
