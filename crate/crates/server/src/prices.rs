//! `prices.csv`: header `date,close`, ISO-8601 dates, chronological rows.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ethgame_core::pricedata::{PriceError, PricePoint, PriceSeries};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum PriceFileError {
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error(transparent)]
    Invalid(#[from] PriceError),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Deserialize)]
struct Row {
    date: String,
    close: String,
}

pub fn parse_price_csv(text: &str) -> Result<PriceSeries, PriceFileError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| PriceFileError::MalformedRow {
        row: 0,
        reason: e.to_string(),
    })?;
    if headers != vec!["date", "close"] {
        return Err(PriceFileError::MalformedRow {
            row: 0,
            reason: format!(
                "expected header `date,close`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut points = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row_no = i + 1;
        let malformed = |reason: String| PriceFileError::MalformedRow {
            row: row_no,
            reason,
        };
        let row = row.map_err(|e| malformed(e.to_string()))?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
            .map_err(|e| malformed(format!("date `{}`: {e}", row.date)))?;
        let close: f64 = row
            .close
            .parse()
            .map_err(|e| malformed(format!("close `{}`: {e}", row.close)))?;
        points.push(PricePoint { date, close });
    }
    Ok(PriceSeries::new(points)?)
}

pub fn to_csv(series: &PriceSeries) -> String {
    let mut out = String::from("date,close\n");
    for p in series.points() {
        out.push_str(&format!("{},{}\n", p.date.format("%Y-%m-%d"), p.close));
    }
    out
}

/// Where a series came from; recorded when an experiment is created.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceSource {
    pub path: String,
    /// Hex SHA-256 of the file bytes.
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub struct LoadedPrices {
    pub source: PriceSource,
    pub series: PriceSeries,
}

impl LoadedPrices {
    pub fn load(path: &Path) -> Result<Self, PriceFileError> {
        let bytes = std::fs::read(path).map_err(|source| PriceFileError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_bytes(path.display().to_string(), &bytes)
    }

    pub fn from_bytes(path: impl Into<String>, bytes: &[u8]) -> Result<Self, PriceFileError> {
        let text = std::str::from_utf8(bytes).map_err(|e| PriceFileError::MalformedRow {
            row: 0,
            reason: format!("not UTF-8: {e}"),
        })?;
        Ok(Self {
            series: parse_price_csv(text)?,
            source: PriceSource {
                path: path.into(),
                sha256: hex::encode(Sha256::digest(bytes)),
            },
        })
    }

    /// Builds from an in-memory series, hashing its canonical CSV form.
    pub fn from_series(path: impl Into<String>, series: PriceSeries) -> Self {
        let text = to_csv(&series);
        Self {
            source: PriceSource {
                path: path.into(),
                sha256: hex::encode(Sha256::digest(text.as_bytes())),
            },
            series,
        }
    }
}
