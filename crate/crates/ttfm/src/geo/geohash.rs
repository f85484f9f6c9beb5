//! Geohash cells.
//!
//! A geohash divides the world into a binary lat/lon bisection grid, five
//! bits per character, longitude bit first, with values on a split boundary
//! going to the upper half. Each precision-p cell is one of 32 rectangles of
//! its precision-(p-1) parent, so prefixes nest.

use std::fmt;

use super::GeoPoint;
use crate::{Error, Result};

pub const MAX_PRECISION: usize = 8;

const BASE32: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";

/// A geohash cell. Code length equals precision; characters come from the
/// 32-symbol geohash alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Geohash {
    code: String,
}

impl Geohash {
    /// Validates and wraps an existing code string.
    pub fn parse(code: &str) -> Result<Self> {
        if code.is_empty() || code.len() > MAX_PRECISION {
            return Err(Error::invalid(format!(
                "geohash '{code}' has precision {}, expected 1..={MAX_PRECISION}",
                code.len()
            )));
        }
        for ch in code.bytes() {
            if !BASE32.contains(&ch.to_ascii_lowercase()) {
                return Err(Error::invalid(format!(
                    "geohash '{code}' contains '{}' outside the geohash alphabet",
                    ch as char
                )));
            }
        }
        Ok(Geohash { code: code.to_ascii_lowercase() })
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn precision(&self) -> usize {
        self.code.len()
    }

    /// The enclosing cell at a coarser precision (prefix truncation).
    pub fn parent(&self, precision: usize) -> Result<Geohash> {
        if precision == 0 || precision > self.precision() {
            return Err(Error::invalid(format!(
                "cannot take precision-{precision} parent of '{}'",
                self.code
            )));
        }
        Ok(Geohash { code: self.code[..precision].to_string() })
    }

    /// Bounding box as (lat_min, lat_max, lon_min, lon_max).
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let (mut lat_lo, mut lat_hi) = (-90.0f64, 90.0f64);
        let (mut lon_lo, mut lon_hi) = (-180.0f64, 180.0f64);
        let mut even = true;
        for ch in self.code.bytes() {
            let idx = BASE32.iter().position(|&b| b == ch).expect("validated") as u8;
            for shift in (0..5).rev() {
                let bit = (idx >> shift) & 1;
                if even {
                    let mid = (lon_lo + lon_hi) / 2.0;
                    if bit == 1 {
                        lon_lo = mid;
                    } else {
                        lon_hi = mid;
                    }
                } else {
                    let mid = (lat_lo + lat_hi) / 2.0;
                    if bit == 1 {
                        lat_lo = mid;
                    } else {
                        lat_hi = mid;
                    }
                }
                even = !even;
            }
        }
        (lat_lo, lat_hi, lon_lo, lon_hi)
    }

    /// The cell's center point.
    pub fn center(&self) -> GeoPoint {
        let (lat_lo, lat_hi, lon_lo, lon_hi) = self.bounds();
        GeoPoint { lat: (lat_lo + lat_hi) / 2.0, lon: (lon_lo + lon_hi) / 2.0 }
    }

    /// Whether `point` falls inside this cell's half-open bounding box.
    pub fn contains(&self, point: GeoPoint) -> bool {
        let (lat_lo, lat_hi, lon_lo, lon_hi) = self.bounds();
        point.lat >= lat_lo
            && (point.lat < lat_hi || lat_hi == 90.0)
            && point.lon >= lon_lo
            && (point.lon < lon_hi || lon_hi == 180.0)
    }

    /// Cell height and width in degrees at this precision.
    fn cell_size(&self) -> (f64, f64) {
        let bits = 5 * self.precision();
        let lon_bits = bits.div_ceil(2);
        let lat_bits = bits / 2;
        (180.0 / (1u64 << lat_bits) as f64, 360.0 / (1u64 << lon_bits) as f64)
    }
}

impl fmt::Display for Geohash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

/// Encodes a point at the given precision.
pub fn encode_geohash(point: GeoPoint, precision: usize) -> Result<Geohash> {
    if precision == 0 || precision > MAX_PRECISION {
        return Err(Error::invalid(format!("geohash precision {precision} out of 1..={MAX_PRECISION}")));
    }
    // Revalidate: raw struct literals can smuggle out-of-range values.
    let point = GeoPoint::new(point.lat, point.lon)?;

    let (mut lat_lo, mut lat_hi) = (-90.0f64, 90.0f64);
    let (mut lon_lo, mut lon_hi) = (-180.0f64, 180.0f64);
    let mut even = true;
    let mut code = String::with_capacity(precision);
    let mut idx = 0u8;
    let mut nbits = 0;
    while code.len() < precision {
        let bit = if even {
            let mid = (lon_lo + lon_hi) / 2.0;
            if point.lon >= mid {
                lon_lo = mid;
                1
            } else {
                lon_hi = mid;
                0
            }
        } else {
            let mid = (lat_lo + lat_hi) / 2.0;
            if point.lat >= mid {
                lat_lo = mid;
                1
            } else {
                lat_hi = mid;
                0
            }
        };
        even = !even;
        idx = (idx << 1) | bit;
        nbits += 1;
        if nbits == 5 {
            code.push(BASE32[idx as usize] as char);
            idx = 0;
            nbits = 0;
        }
    }
    Ok(Geohash { code })
}

/// The up-to-8 cells surrounding `cell` at the same precision.
///
/// Cells are uniform in degrees at a fixed precision, so neighbors are found
/// by offsetting the center one cell step and re-encoding. Longitude wraps at
/// the antimeridian; rows beyond the poles are skipped, which is why polar
/// cells have fewer than 8 neighbors.
pub fn adjacent_geohashes(cell: &Geohash) -> Result<Vec<Geohash>> {
    if cell.precision() < 2 {
        return Err(Error::invalid(format!(
            "adjacency needs precision >= 2, got '{}'",
            cell.code
        )));
    }
    let center = cell.center();
    let (dh, dw) = cell.cell_size();
    let mut out = Vec::with_capacity(8);
    for di in [-1.0f64, 0.0, 1.0] {
        for dj in [-1.0f64, 0.0, 1.0] {
            if di == 0.0 && dj == 0.0 {
                continue;
            }
            let lat = center.lat + di * dh;
            if !(-90.0..=90.0).contains(&lat) {
                continue;
            }
            let mut lon = center.lon + dj * dw;
            if lon < -180.0 {
                lon += 360.0;
            } else if lon >= 180.0 {
                lon -= 360.0;
            }
            out.push(encode_geohash(GeoPoint { lat, lon }, cell.precision())?);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}
