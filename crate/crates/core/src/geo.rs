//! Location normalization.

use serde::{Deserialize, Serialize};

/// A point location. Stored values carry exactly five decimals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("location ({lat}, {lon}) out of range")]
pub struct LocationOutOfRange {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn lat_in_range(&self) -> bool {
        self.lat.is_finite() && self.lat.abs() <= 90.0
    }

    pub fn lon_in_range(&self) -> bool {
        self.lon.is_finite() && self.lon.abs() <= 180.0
    }
}

fn round5(x: f64) -> f64 {
    // f64::round is half-away-from-zero
    let r = (x * 100_000.0).round() / 100_000.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Range-checks a coordinate pair and rounds both values to five decimals.
pub fn normalize_location(lat: f64, lon: f64) -> Result<GeoPoint, LocationOutOfRange> {
    let p = GeoPoint { lat, lon };
    if !p.lat_in_range() || !p.lon_in_range() {
        return Err(LocationOutOfRange { lat, lon });
    }
    Ok(GeoPoint {
        lat: round5(lat),
        lon: round5(lon),
    })
}
