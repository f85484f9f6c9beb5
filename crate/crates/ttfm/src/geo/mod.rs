//! Geospatial primitives: points, geohash cells, great-circle distance.

mod distance;
mod geohash;

pub use distance::{haversine_miles, EARTH_RADIUS_MILES};
pub use geohash::{adjacent_geohashes, encode_geohash, Geohash, MAX_PRECISION};

use crate::{Error, Result};

/// A WGS-84 coordinate pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !lat.is_finite() {
            return Err(Error::invalid(format!("latitude {lat} out of [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) || !lon.is_finite() {
            return Err(Error::invalid(format!("longitude {lon} out of [-180, 180]")));
        }
        Ok(GeoPoint { lat, lon })
    }
}
