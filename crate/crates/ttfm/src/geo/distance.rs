//! Great-circle distance.

use super::GeoPoint;

/// Mean earth radius in miles used throughout the crate.
pub const EARTH_RADIUS_MILES: f64 = 3958.8;

/// Haversine distance in miles between two points.
///
/// Straight-line distance over the sphere; symmetric, non-negative, zero iff
/// the points coincide.
pub fn haversine_miles(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let s = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MILES * s.sqrt().min(1.0).asin()
}
