//! Raw ping streams to estimation dataset.
//!
//! The pipeline turns location pings into the inputs the choice model needs:
//! each user's morning location (where lunch trips start), detected
//! restaurant visits, a deduplicated roster, per-user choice sets, and the
//! final estimation sample. Every operation here is pure over its inputs, so
//! per-user work can run in parallel and re-running on the same data gives
//! byte-identical output.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime};

use crate::geo::{encode_geohash, GeoPoint, Geohash};
use crate::{Error, Result};

mod morning;
mod roster;
mod visits;

pub use morning::{filter_user_base, infer_morning_location};
pub use roster::{build_choice_set, dedupe_restaurants, filter_estimation_sample};
pub use visits::detect_visits;

/// One location ping, timezone-resolved to local time.
#[derive(Debug, Clone, PartialEq)]
pub struct Ping {
    pub user: String,
    pub t: NaiveDateTime,
    pub point: GeoPoint,
    pub accuracy_m: f64,
}

/// A user's inferred morning location with the concentration shares that
/// qualified it.
#[derive(Debug, Clone, PartialEq)]
pub struct MorningLocation {
    pub user: String,
    /// Modal precision-6 cell over weekday morning pings.
    pub broad: Geohash,
    /// Modal precision-7 cell within `broad`.
    pub narrow: Geohash,
    pub share_in_area: f64,
    pub share_broad: f64,
    pub share_narrow: f64,
}

/// A detected restaurant visit.
#[derive(Debug, Clone, PartialEq)]
pub struct Visit {
    pub user: String,
    pub restaurant: String,
    pub date: NaiveDate,
    pub week: usize,
    pub dwell_minutes: f64,
    pub ping_count: usize,
}

/// Why a user (or their morning-location inference) was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// The user has no pings at all.
    NoPings,
    /// A homes table was supplied but has no entry for the user.
    NoHome,
    /// Fewer distinct active weeks than required.
    TooFewActiveWeeks,
    /// Too few in-area weekday pings per active week on average.
    LowPingRate,
    /// No weekday pings inside the morning window.
    NoMorningPings,
    /// Modal broad cell does not intersect the area of interest.
    BroadOutsideArea,
    /// Share of morning pings inside the area below threshold.
    LowAreaShare,
    /// Share of morning pings in the modal broad cell below threshold.
    LowBroadShare,
    /// Share of morning pings in the modal narrow cell below threshold.
    LowNarrowShare,
}

impl RejectReason {
    /// Stable machine-readable code, used in rejection reports.
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::NoPings => "no-pings",
            RejectReason::NoHome => "no-home",
            RejectReason::TooFewActiveWeeks => "too-few-active-weeks",
            RejectReason::LowPingRate => "low-ping-rate",
            RejectReason::NoMorningPings => "no-morning-pings",
            RejectReason::BroadOutsideArea => "broad-outside-area",
            RejectReason::LowAreaShare => "low-area-share",
            RejectReason::LowBroadShare => "low-broad-share",
            RejectReason::LowNarrowShare => "low-narrow-share",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Thresholds and calendar for a pipeline run. All comparisons against these
/// bounds are inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub period_start: NaiveDate,
    /// Inclusive.
    pub period_end: NaiveDate,
    pub min_active_weeks: usize,
    pub min_pings_per_active_week: f64,
    pub min_share_in_area: f64,
    pub min_share_broad: f64,
    pub min_share_narrow: f64,
    pub min_user_visits: usize,
    pub min_restaurant_visits_per_week: f64,
    pub min_restaurant_visits_overall: usize,
    pub max_distance_miles: f64,
    pub distance_floor_miles: f64,
}

impl PipelineConfig {
    /// Standard thresholds over the given sample period.
    pub fn for_period(period_start: NaiveDate, period_end: NaiveDate) -> Result<Self> {
        if period_end < period_start {
            return Err(Error::invalid(format!(
                "sample period ends {period_end} before it starts {period_start}"
            )));
        }
        Ok(PipelineConfig {
            period_start,
            period_end,
            min_active_weeks: 12,
            min_pings_per_active_week: 10.0,
            min_share_in_area: 0.80,
            min_share_broad: 0.60,
            min_share_narrow: 0.40,
            min_user_visits: 3,
            min_restaurant_visits_per_week: 1.0,
            min_restaurant_visits_overall: 5,
            max_distance_miles: 20.0,
            distance_floor_miles: 0.01,
        })
    }

    /// Zero-based calendar week of `date`. Weeks run Monday through Sunday;
    /// the week containing the first day of the sample period is week 0.
    pub fn week_index(&self, date: NaiveDate) -> Result<usize> {
        if date < self.period_start || date > self.period_end {
            return Err(Error::data(format!(
                "date {date} outside sample period {}..={}",
                self.period_start, self.period_end
            )));
        }
        let days = (monday_of(date) - monday_of(self.period_start)).num_days();
        Ok((days / 7) as usize)
    }

    /// Number of calendar weeks the sample period touches.
    pub fn n_weeks(&self) -> usize {
        let days = (monday_of(self.period_end) - monday_of(self.period_start)).num_days();
        (days / 7) as usize + 1
    }
}

/// The study region: a set of precision-5 geohash cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AreaOfInterest {
    cells: BTreeSet<String>,
}

impl AreaOfInterest {
    pub fn new<I: IntoIterator<Item = Geohash>>(cells: I) -> Result<Self> {
        let mut set = BTreeSet::new();
        for cell in cells {
            if cell.precision() != 5 {
                return Err(Error::invalid(format!(
                    "area cell {} has precision {}, want 5",
                    cell.code(),
                    cell.precision()
                )));
            }
            set.insert(cell.code().to_string());
        }
        if set.is_empty() {
            return Err(Error::invalid("area of interest is empty"));
        }
        Ok(AreaOfInterest { cells: set })
    }

    /// Parse the newline-separated area file format; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cells = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cell = Geohash::parse(line)
                .map_err(|e| Error::data(format!("area file line {}: {e}", lineno + 1)))?;
            if cell.precision() != 5 {
                return Err(Error::data(format!(
                    "area file line {}: cell {} has precision {}, want 5",
                    lineno + 1,
                    cell.code(),
                    cell.precision()
                )));
            }
            cells.push(cell);
        }
        AreaOfInterest::new(cells)
    }

    pub fn contains_point(&self, p: GeoPoint) -> bool {
        match encode_geohash(p, 5) {
            Ok(cell) => self.cells.contains(cell.code()),
            Err(_) => false,
        }
    }

    /// Whether a geohash code of precision ≥ 5 falls inside the area.
    pub fn contains_code(&self, code: &str) -> bool {
        code.len() >= 5 && self.cells.contains(&code[..5])
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.cells.iter().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Group a ping stream by user id, preserving each user's pings in time
/// order.
pub fn group_by_user(pings: Vec<Ping>) -> BTreeMap<String, Vec<Ping>> {
    let mut map: BTreeMap<String, Vec<Ping>> = BTreeMap::new();
    for ping in pings {
        map.entry(ping.user.clone()).or_default().push(ping);
    }
    for stream in map.values_mut() {
        stream.sort_by_key(|p| p.t);
    }
    map
}

fn monday_of(d: NaiveDate) -> NaiveDate {
    d - Duration::days(i64::from(d.weekday().num_days_from_monday()))
}

pub(crate) fn is_weekday(d: NaiveDate) -> bool {
    d.weekday().num_days_from_monday() < 5
}

pub(crate) fn in_morning_window(t: NaiveTime) -> bool {
    let start = NaiveTime::from_hms_opt(9, 0, 0).unwrap();
    let end = NaiveTime::from_hms_opt(11, 15, 0).unwrap();
    t >= start && t <= end
}

pub(crate) fn in_lunch_window(t: NaiveTime) -> bool {
    let start = NaiveTime::from_hms_opt(11, 30, 0).unwrap();
    let end = NaiveTime::from_hms_opt(13, 30, 0).unwrap();
    t >= start && t <= end
}
