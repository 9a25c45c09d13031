//! Spatial and temporal bucketing: which region and which detection period a
//! report belongs to.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("point ({lat}, {lon}) is outside the disaster area")]
    OutsideDisasterArea { lat: f64, lon: f64 },
    #[error("timestamp {timestamp} precedes the period origin {origin}")]
    BeforeEpoch { timestamp: i64, origin: i64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid period configuration: {0}")]
    InvalidPeriod(String),
}

/// Uniform rows x cols partition of a lat/lon bounding box. Rows run along
/// latitude, columns along longitude; cells are numbered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFields", into = "GridFields")]
pub struct RegionGrid {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
    rows: u32,
    cols: u32,
}

#[derive(Serialize, Deserialize)]
struct GridFields {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
    rows: u32,
    cols: u32,
}

impl TryFrom<GridFields> for RegionGrid {
    type Error = GeoError;
    fn try_from(f: GridFields) -> Result<Self, GeoError> {
        RegionGrid::new(f.lat_min, f.lat_max, f.lon_min, f.lon_max, f.rows, f.cols)
    }
}

impl From<RegionGrid> for GridFields {
    fn from(g: RegionGrid) -> Self {
        GridFields {
            lat_min: g.lat_min,
            lat_max: g.lat_max,
            lon_min: g.lon_min,
            lon_max: g.lon_max,
            rows: g.rows,
            cols: g.cols,
        }
    }
}

impl RegionGrid {
    pub fn new(
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
        rows: u32,
        cols: u32,
    ) -> Result<Self, GeoError> {
        let finite = [lat_min, lat_max, lon_min, lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(GeoError::InvalidGrid("bounds must be finite".into()));
        }
        if lat_min >= lat_max || lon_min >= lon_max {
            return Err(GeoError::InvalidGrid(
                "bounding box needs lat_min < lat_max and lon_min < lon_max".into(),
            ));
        }
        if rows == 0 || cols == 0 {
            return Err(GeoError::InvalidGrid(
                "rows and cols must be at least 1".into(),
            ));
        }
        Ok(Self {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
            rows,
            cols,
        })
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn region_count(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn contains_region(&self, region: usize) -> bool {
        region < self.region_count()
    }

    /// Row-major index of the cell containing the point. Interior boundaries
    /// belong to the higher cell; the max edges belong to the last cell.
    pub fn region_of(&self, lat: f64, lon: f64) -> Result<usize, GeoError> {
        let inside = (self.lat_min..=self.lat_max).contains(&lat)
            && (self.lon_min..=self.lon_max).contains(&lon);
        if !inside {
            return Err(GeoError::OutsideDisasterArea { lat, lon });
        }
        let row = bucket(lat, self.lat_min, self.lat_max, self.rows);
        let col = bucket(lon, self.lon_min, self.lon_max, self.cols);
        Ok(row as usize * self.cols as usize + col as usize)
    }

    /// Geometric centre of a cell, or `None` for an unknown index.
    pub fn cell_center(&self, region: usize) -> Option<(f64, f64)> {
        if !self.contains_region(region) {
            return None;
        }
        let row = (region / self.cols as usize) as f64;
        let col = (region % self.cols as usize) as f64;
        let dlat = (self.lat_max - self.lat_min) / f64::from(self.rows);
        let dlon = (self.lon_max - self.lon_min) / f64::from(self.cols);
        Some((
            self.lat_min + (row + 0.5) * dlat,
            self.lon_min + (col + 0.5) * dlon,
        ))
    }
}

fn bucket(v: f64, lo: f64, hi: f64, n: u32) -> u32 {
    let idx = ((v - lo) / (hi - lo) * f64::from(n)).floor();
    (idx.max(0.0) as u32).min(n - 1)
}

impl FromStr for RegionGrid {
    type Err = GeoError;

    /// Parses `latmin,latmax,lonmin,lonmax,rows,cols`.
    fn from_str(s: &str) -> Result<Self, GeoError> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(GeoError::InvalidGrid(format!(
                "expected latmin,latmax,lonmin,lonmax,rows,cols; got {s:?}"
            )));
        }
        let num = |i: usize| {
            parts[i]
                .parse::<f64>()
                .map_err(|e| GeoError::InvalidGrid(format!("{:?}: {e}", parts[i])))
        };
        let int = |i: usize| {
            parts[i]
                .parse::<u32>()
                .map_err(|e| GeoError::InvalidGrid(format!("{:?}: {e}", parts[i])))
        };
        RegionGrid::new(num(0)?, num(1)?, num(2)?, num(3)?, int(4)?, int(5)?)
    }
}

impl std::fmt::Display for RegionGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{}",
            self.lat_min, self.lat_max, self.lon_min, self.lon_max, self.rows, self.cols
        )
    }
}

/// Fixed-length detection periods counted from an origin timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PeriodFields", into = "PeriodFields")]
pub struct PeriodConfig {
    period_length_seconds: i64,
    epoch_origin: i64,
}

#[derive(Serialize, Deserialize)]
struct PeriodFields {
    period_length_seconds: i64,
    epoch_origin: i64,
}

impl TryFrom<PeriodFields> for PeriodConfig {
    type Error = GeoError;
    fn try_from(f: PeriodFields) -> Result<Self, GeoError> {
        PeriodConfig::new(f.period_length_seconds, f.epoch_origin)
    }
}

impl From<PeriodConfig> for PeriodFields {
    fn from(p: PeriodConfig) -> Self {
        PeriodFields {
            period_length_seconds: p.period_length_seconds,
            epoch_origin: p.epoch_origin,
        }
    }
}

impl Default for PeriodConfig {
    fn default() -> Self {
        Self {
            period_length_seconds: 3600,
            epoch_origin: 0,
        }
    }
}

impl PeriodConfig {
    pub fn new(period_length_seconds: i64, epoch_origin: i64) -> Result<Self, GeoError> {
        if period_length_seconds <= 0 {
            return Err(GeoError::InvalidPeriod(
                "period_length_seconds must be positive".into(),
            ));
        }
        Ok(Self {
            period_length_seconds,
            epoch_origin,
        })
    }

    pub fn period_length_seconds(&self) -> i64 {
        self.period_length_seconds
    }

    pub fn epoch_origin(&self) -> i64 {
        self.epoch_origin
    }

    pub fn period_of(&self, timestamp: i64) -> Result<u64, GeoError> {
        if timestamp < self.epoch_origin {
            return Err(GeoError::BeforeEpoch {
                timestamp,
                origin: self.epoch_origin,
            });
        }
        Ok(((timestamp - self.epoch_origin) / self.period_length_seconds) as u64)
    }

    pub fn period_start(&self, period: u64) -> i64 {
        self.epoch_origin + period as i64 * self.period_length_seconds
    }

    /// First timestamp that is no longer inside `period`.
    pub fn period_end(&self, period: u64) -> i64 {
        self.period_start(period + 1)
    }
}
