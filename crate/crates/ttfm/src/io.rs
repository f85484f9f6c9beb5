//! File formats: the CSV tables the pipeline and fitter exchange, snapshot
//! files, and atomic writes.
//!
//! Every reader validates the header against the documented column list and
//! names the file and line in parse errors. Every writer goes through
//! [`atomic_write`], formats floats with Rust's shortest round-trip
//! representation, and is a pure function of its inputs, so reruns produce
//! byte-identical files.
//!
//! Formats (one header line each):
//!
//! | table       | columns                                                    |
//! |-------------|------------------------------------------------------------|
//! | pings       | `user_id,timestamp_iso8601,lat,lon,accuracy_m`             |
//! | restaurants | `restaurant_id,name,lat,lon,price_range,rating_overall,n_ratings_overall,rating_in_sample,n_ratings_in_sample,categories,open_date,close_date[,city]` |
//! | visits      | `user_id,restaurant_id,date,week_index,dwell_minutes,ping_count` |
//! | users       | `user_id,lat,lon`                                          |
//! | homes       | `user_id,geohash`                                          |
//! | choice sets | `user_id,restaurant_id,distance_miles`                     |
//! | events      | `restaurant_id,kind,change_date,period1_start,period1_end,period2_start,period2_end` |
//! | fit trace   | `step,elbo,val_loglik,seconds`                             |
//!
//! Categories are semicolon-separated inside their single column; empty
//! optional fields mean "missing". Event periods are listed in calendar
//! order — `period1` is the earlier one, so it is the open period of a
//! closing and the closed period of an opening.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};

use crate::counterfactual::{DateRange, EventKind, OpenCloseEvent};
use crate::data::{RestaurantRecord, UserInfo};
use crate::geo::{Geohash, GeoPoint};
use crate::inference::FitTracePoint;
use crate::model::{read_snapshot, write_snapshot, Snapshot};
use crate::pipeline::{Ping, Visit};
use crate::{Error, Result};

const TIMESTAMP_FMT: &str = "%Y-%m-%dT%H:%M:%S";

/// Writes a file through a temporary sibling plus rename, so an interrupted
/// run leaves no partial file at `path` and readers never observe one.
pub fn atomic_write(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        write(&mut buf)?;
        buf.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Renders and saves a snapshot atomically.
pub fn save_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let text = write_snapshot(snap)?;
    atomic_write(path, |w| Ok(w.write_all(text.as_bytes())?))
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    read_snapshot(&text).map_err(|e| match e {
        Error::Data(msg) => Error::data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

// --------------------------------------------------------------- CSV plumbing

/// A CSV file opened for validated, line-addressed reading.
struct Table {
    path: String,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    /// Opens `path` and checks its header is exactly one of `headers`.
    /// Returns the table and the index of the matching header variant.
    fn open(path: &Path, headers: &[&[&str]]) -> Result<(Table, usize)> {
        let name = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_path(path)
            .map_err(|e| Error::data(format!("{name}: {e}")))?;
        let got = rdr.headers().map_err(|e| Error::data(format!("{name}: {e}")))?.clone();
        let variant = headers
            .iter()
            .position(|want| got.iter().eq(want.iter().copied()))
            .ok_or_else(|| {
                Error::data(format!(
                    "{name}:1: header '{}' does not match '{}'",
                    got.iter().collect::<Vec<_>>().join(","),
                    headers[0].join(",")
                ))
            })?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::data(format!("{name}: {e}")))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, rec));
        }
        Ok((Table { path: name, rows }, variant))
    }

    fn err(&self, line: u64, msg: impl std::fmt::Display) -> Error {
        Error::data(format!("{}:{line}: {msg}", self.path))
    }

    fn parse<T: FromStr>(&self, line: u64, col: &str, s: &str) -> Result<T> {
        s.parse()
            .map_err(|_| self.err(line, format!("bad {col} value '{s}'")))
    }

    fn parse_opt<T: FromStr>(&self, line: u64, col: &str, s: &str) -> Result<Option<T>> {
        if s.is_empty() {
            Ok(None)
        } else {
            self.parse(line, col, s).map(Some)
        }
    }
}

fn csv_writer(w: &mut dyn Write) -> csv::Writer<&mut dyn Write> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn finish(mut w: csv::Writer<&mut dyn Write>) -> Result<()> {
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------- pings

const PING_HEADER: [&str; 5] = ["user_id", "timestamp_iso8601", "lat", "lon", "accuracy_m"];

pub fn read_pings(path: &Path) -> Result<Vec<Ping>> {
    let (t, _) = Table::open(path, &[&PING_HEADER])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let ts = NaiveDateTime::parse_from_str(&rec[1], TIMESTAMP_FMT)
            .map_err(|_| t.err(*line, format!("bad timestamp '{}' (want 2023-01-31T12:05:00)", &rec[1])))?;
        out.push(Ping {
            user: rec[0].to_string(),
            t: ts,
            point: GeoPoint { lat: t.parse(*line, "lat", &rec[2])?, lon: t.parse(*line, "lon", &rec[3])? },
            accuracy_m: t.parse(*line, "accuracy_m", &rec[4])?,
        });
    }
    Ok(out)
}

pub fn write_pings(path: &Path, pings: &[Ping]) -> Result<()> {
    atomic_write(path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record(PING_HEADER)?;
        for p in pings {
            csv.write_record([
                p.user.as_str(),
                &p.t.format(TIMESTAMP_FMT).to_string(),
                &p.point.lat.to_string(),
                &p.point.lon.to_string(),
                &p.accuracy_m.to_string(),
            ])?;
        }
        finish(csv)
    })
}

// ---------------------------------------------------------------- restaurants

const RESTAURANT_HEADER: [&str; 12] = [
    "restaurant_id",
    "name",
    "lat",
    "lon",
    "price_range",
    "rating_overall",
    "n_ratings_overall",
    "rating_in_sample",
    "n_ratings_in_sample",
    "categories",
    "open_date",
    "close_date",
];

const RESTAURANT_HEADER_CITY: [&str; 13] = [
    "restaurant_id",
    "name",
    "lat",
    "lon",
    "price_range",
    "rating_overall",
    "n_ratings_overall",
    "rating_in_sample",
    "n_ratings_in_sample",
    "categories",
    "open_date",
    "close_date",
    "city",
];

pub fn read_restaurants(path: &Path) -> Result<Vec<RestaurantRecord>> {
    let (t, variant) = Table::open(path, &[&RESTAURANT_HEADER_CITY, &RESTAURANT_HEADER])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let categories = rec[9]
            .split(';')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_string)
            .collect();
        out.push(RestaurantRecord {
            id: rec[0].to_string(),
            name: rec[1].to_string(),
            point: GeoPoint { lat: t.parse(*line, "lat", &rec[2])?, lon: t.parse(*line, "lon", &rec[3])? },
            price_range: t.parse(*line, "price_range", &rec[4])?,
            rating_overall: t.parse_opt(*line, "rating_overall", &rec[5])?,
            n_ratings_overall: t.parse(*line, "n_ratings_overall", &rec[6])?,
            rating_in_sample: t.parse_opt(*line, "rating_in_sample", &rec[7])?,
            n_ratings_in_sample: t.parse(*line, "n_ratings_in_sample", &rec[8])?,
            categories,
            open_date: t.parse_opt(*line, "open_date", &rec[10])?,
            close_date: t.parse_opt(*line, "close_date", &rec[11])?,
            city: if variant == 0 { rec[12].to_string() } else { String::new() },
        });
    }
    Ok(out)
}

pub fn write_restaurants(path: &Path, restaurants: &[RestaurantRecord]) -> Result<()> {
    atomic_write(path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record(RESTAURANT_HEADER_CITY)?;
        for r in restaurants {
            if r.categories.iter().any(|c| c.contains(';')) {
                return Err(Error::invalid(format!(
                    "restaurant {}: category labels may not contain ';'",
                    r.id
                )));
            }
            csv.write_record([
                r.id.as_str(),
                r.name.as_str(),
                &r.point.lat.to_string(),
                &r.point.lon.to_string(),
                &r.price_range.to_string(),
                &opt_string(r.rating_overall),
                &r.n_ratings_overall.to_string(),
                &opt_string(r.rating_in_sample),
                &r.n_ratings_in_sample.to_string(),
                &r.categories.join(";"),
                &opt_string(r.open_date),
                &opt_string(r.close_date),
                r.city.as_str(),
            ])?;
        }
        finish(csv)
    })
}

fn opt_string<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

// --------------------------------------------------------------------- visits

const VISIT_HEADER: [&str; 6] =
    ["user_id", "restaurant_id", "date", "week_index", "dwell_minutes", "ping_count"];

pub fn read_visits(path: &Path) -> Result<Vec<Visit>> {
    let (t, _) = Table::open(path, &[&VISIT_HEADER])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        out.push(Visit {
            user: rec[0].to_string(),
            restaurant: rec[1].to_string(),
            date: t.parse(*line, "date", &rec[2])?,
            week: t.parse(*line, "week_index", &rec[3])?,
            dwell_minutes: t.parse(*line, "dwell_minutes", &rec[4])?,
            ping_count: t.parse(*line, "ping_count", &rec[5])?,
        });
    }
    Ok(out)
}

pub fn write_visits(path: &Path, visits: &[Visit]) -> Result<()> {
    atomic_write(path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record(VISIT_HEADER)?;
        for v in visits {
            csv.write_record([
                v.user.as_str(),
                v.restaurant.as_str(),
                &v.date.to_string(),
                &v.week.to_string(),
                &v.dwell_minutes.to_string(),
                &v.ping_count.to_string(),
            ])?;
        }
        finish(csv)
    })
}

// ---------------------------------------------------------------------- users

const USER_HEADER: [&str; 3] = ["user_id", "lat", "lon"];

pub fn read_users(path: &Path) -> Result<Vec<UserInfo>> {
    let (t, _) = Table::open(path, &[&USER_HEADER])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        out.push(UserInfo {
            id: rec[0].to_string(),
            point: GeoPoint { lat: t.parse(*line, "lat", &rec[1])?, lon: t.parse(*line, "lon", &rec[2])? },
        });
    }
    Ok(out)
}

pub fn write_users(path: &Path, users: &[UserInfo]) -> Result<()> {
    atomic_write(path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record(USER_HEADER)?;
        for u in users {
            csv.write_record([u.id.as_str(), &u.point.lat.to_string(), &u.point.lon.to_string()])?;
        }
        finish(csv)
    })
}

// ---------------------------------------------------------------------- homes

const HOME_HEADER: [&str; 2] = ["user_id", "geohash"];

pub fn read_homes(path: &Path) -> Result<BTreeMap<String, Geohash>> {
    let (t, _) = Table::open(path, &[&HOME_HEADER])?;
    let mut out = BTreeMap::new();
    for (line, rec) in &t.rows {
        let cell = Geohash::parse(&rec[1]).map_err(|e| t.err(*line, e))?;
        if out.insert(rec[0].to_string(), cell).is_some() {
            return Err(t.err(*line, format!("duplicate home for user '{}'", &rec[0])));
        }
    }
    Ok(out)
}

pub fn write_homes(path: &Path, homes: &BTreeMap<String, Geohash>) -> Result<()> {
    atomic_write(path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record(HOME_HEADER)?;
        for (user, cell) in homes {
            csv.write_record([user.as_str(), cell.code()])?;
        }
        finish(csv)
    })
}

// ---------------------------------------------------------------- choice sets

const CHOICE_SET_HEADER: [&str; 3] = ["user_id", "restaurant_id", "distance_miles"];

pub fn read_choice_sets(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let (t, _) = Table::open(path, &[&CHOICE_SET_HEADER])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        out.push((
            rec[0].to_string(),
            rec[1].to_string(),
            t.parse(*line, "distance_miles", &rec[2])?,
        ));
    }
    Ok(out)
}

pub fn write_choice_sets(path: &Path, entries: &[(String, String, f64)]) -> Result<()> {
    atomic_write(path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record(CHOICE_SET_HEADER)?;
        for (user, rest, d) in entries {
            csv.write_record([user.as_str(), rest.as_str(), &d.to_string()])?;
        }
        finish(csv)
    })
}

// --------------------------------------------------------------------- events

const EVENT_HEADER: [&str; 7] = [
    "restaurant_id",
    "kind",
    "change_date",
    "period1_start",
    "period1_end",
    "period2_start",
    "period2_end",
];

pub fn read_events(path: &Path) -> Result<Vec<OpenCloseEvent>> {
    let (t, _) = Table::open(path, &[&EVENT_HEADER])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let kind = match &rec[1] {
            "opening" => EventKind::Opening,
            "closing" => EventKind::Closing,
            other => return Err(t.err(*line, format!("bad kind '{other}' (opening|closing)"))),
        };
        let date = |col: usize, name: &str| -> Result<NaiveDate> { t.parse(*line, name, &rec[col]) };
        let first = DateRange::new(date(3, "period1_start")?, date(3 + 1, "period1_end")?)
            .map_err(|e| t.err(*line, e))?;
        let second = DateRange::new(date(5, "period2_start")?, date(5 + 1, "period2_end")?)
            .map_err(|e| t.err(*line, e))?;
        // period1 is the earlier period: before an opening the target is
        // closed, before a closing it is open.
        let (open_period, closed_period) = match kind {
            EventKind::Opening => (second, first),
            EventKind::Closing => (first, second),
        };
        let event = OpenCloseEvent {
            restaurant_id: rec[0].to_string(),
            kind,
            change_date: date(2, "change_date")?,
            open_period,
            closed_period,
        };
        event.validate().map_err(|e| t.err(*line, e))?;
        out.push(event);
    }
    Ok(out)
}

pub fn write_events(path: &Path, events: &[OpenCloseEvent]) -> Result<()> {
    for e in events {
        e.validate()?;
    }
    atomic_write(path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record(EVENT_HEADER)?;
        for e in events {
            let (first, second) = match e.kind {
                EventKind::Opening => (&e.closed_period, &e.open_period),
                EventKind::Closing => (&e.open_period, &e.closed_period),
            };
            csv.write_record([
                e.restaurant_id.as_str(),
                e.kind.as_str(),
                &e.change_date.to_string(),
                &first.start.to_string(),
                &first.end.to_string(),
                &second.start.to_string(),
                &second.end.to_string(),
            ])?;
        }
        finish(csv)
    })
}

// ------------------------------------------------------------------ fit trace

const TRACE_HEADER: [&str; 4] = ["step", "elbo", "val_loglik", "seconds"];

/// Writes a fit trace. `seconds` is wall-clock telemetry — the one column
/// that varies across reruns — so byte-level output comparisons should mask
/// it.
pub fn write_trace(path: &Path, trace: &[FitTracePoint]) -> Result<()> {
    atomic_write(path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record(TRACE_HEADER)?;
        for p in trace {
            csv.write_record([
                &p.step.to_string(),
                &p.elbo.to_string(),
                &p.val_loglik.to_string(),
                &format!("{:.3}", p.seconds),
            ])?;
        }
        finish(csv)
    })
}

pub fn read_trace(path: &Path) -> Result<Vec<FitTracePoint>> {
    let (t, _) = Table::open(path, &[&TRACE_HEADER])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        out.push(FitTracePoint {
            step: t.parse(*line, "step", &rec[0])?,
            elbo: t.parse(*line, "elbo", &rec[1])?,
            val_loglik: t.parse(*line, "val_loglik", &rec[2])?,
            seconds: t.parse(*line, "seconds", &rec[3])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use tempfile::TempDir;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, TIMESTAMP_FMT).unwrap()
    }

    #[test]
    fn pings_round_trip_and_name_bad_lines() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("pings.csv");
        let pings = vec![
            Ping {
                user: "u1".into(),
                t: ts("2023-01-31T12:05:00"),
                point: GeoPoint { lat: 37.5, lon: -122.25 },
                accuracy_m: 12.5,
            },
            Ping {
                user: "u2".into(),
                t: ts("2023-02-01T08:00:30"),
                point: GeoPoint { lat: 37.5000001, lon: -122.0 },
                accuracy_m: 3.0,
            },
        ];
        write_pings(&path, &pings).unwrap();
        assert_eq!(read_pings(&path).unwrap(), pings);

        std::fs::write(
            &path,
            "user_id,timestamp_iso8601,lat,lon,accuracy_m\nu1,2023-01-31T12:05:00,37.5,oops,3\n",
        )
        .unwrap();
        let err = read_pings(&path).unwrap_err().to_string();
        assert!(err.contains("pings.csv:2") && err.contains("lon"), "{err}");

        std::fs::write(&path, "user_id,time,lat,lon,accuracy_m\n").unwrap();
        let err = read_pings(&path).unwrap_err().to_string();
        assert!(err.contains("header"), "{err}");
    }

    #[test]
    fn restaurants_round_trip_with_missing_fields_and_commas() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("restaurants.csv");
        let rows = vec![
            RestaurantRecord {
                id: "r1".into(),
                name: "Soup, Salad & Co".into(),
                point: GeoPoint { lat: 37.1, lon: -122.2 },
                price_range: 2,
                rating_overall: Some(4.5),
                n_ratings_overall: 120.0,
                rating_in_sample: None,
                n_ratings_in_sample: 0.0,
                categories: vec!["salad".into(), "soup".into()],
                open_date: None,
                close_date: Some(date(2023, 3, 1)),
                city: "Oakland".into(),
            },
            RestaurantRecord {
                id: "r2".into(),
                name: "Plain".into(),
                point: GeoPoint { lat: 37.2, lon: -122.3 },
                price_range: 1,
                rating_overall: None,
                n_ratings_overall: 0.0,
                rating_in_sample: Some(3.25),
                n_ratings_in_sample: 7.0,
                categories: vec![],
                open_date: Some(date(2022, 12, 15)),
                close_date: None,
                city: String::new(),
            },
        ];
        write_restaurants(&path, &rows).unwrap();
        assert_eq!(read_restaurants(&path).unwrap(), rows);

        // The 12-column header without city is accepted too.
        std::fs::write(
            &path,
            "restaurant_id,name,lat,lon,price_range,rating_overall,n_ratings_overall,\
             rating_in_sample,n_ratings_in_sample,categories,open_date,close_date\n\
             r9,No City,37,-122,3,4.0,10,4.0,5,thai;bar,,\n",
        )
        .unwrap();
        let got = read_restaurants(&path).unwrap();
        assert_eq!(got[0].city, "");
        assert_eq!(got[0].categories, vec!["thai".to_string(), "bar".to_string()]);
        assert_eq!(got[0].open_date, None);
    }

    #[test]
    fn visits_users_and_choice_sets_round_trip() {
        let dir = TempDir::new().unwrap();

        let visits = vec![Visit {
            user: "u1".into(),
            restaurant: "r1".into(),
            date: date(2023, 1, 9),
            week: 1,
            dwell_minutes: 42.5,
            ping_count: 4,
        }];
        let vp = dir.path().join("visits.csv");
        write_visits(&vp, &visits).unwrap();
        assert_eq!(read_visits(&vp).unwrap(), visits);

        let users = vec![UserInfo { id: "u1".into(), point: GeoPoint { lat: 37.0, lon: -122.0 } }];
        let up = dir.path().join("users.csv");
        write_users(&up, &users).unwrap();
        assert_eq!(read_users(&up).unwrap(), users);

        let sets = vec![("u1".to_string(), "r1".to_string(), 0.7512345678901234)];
        let sp = dir.path().join("sets.csv");
        write_choice_sets(&sp, &sets).unwrap();
        assert_eq!(read_choice_sets(&sp).unwrap(), sets);

        let mut homes = BTreeMap::new();
        homes.insert("u1".to_string(), Geohash::parse("9q9jh84").unwrap());
        let hp = dir.path().join("homes.csv");
        write_homes(&hp, &homes).unwrap();
        assert_eq!(read_homes(&hp).unwrap(), homes);
    }

    #[test]
    fn events_round_trip_and_period_order_maps_by_kind() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("events.csv");
        let closing = OpenCloseEvent {
            restaurant_id: "r1".into(),
            kind: EventKind::Closing,
            change_date: date(2023, 1, 20),
            open_period: DateRange::new(date(2023, 1, 2), date(2023, 1, 15)).unwrap(),
            closed_period: DateRange::new(date(2023, 2, 1), date(2023, 2, 14)).unwrap(),
        };
        let opening = OpenCloseEvent {
            restaurant_id: "r2".into(),
            kind: EventKind::Opening,
            change_date: date(2023, 1, 18),
            open_period: DateRange::new(date(2023, 2, 1), date(2023, 2, 14)).unwrap(),
            closed_period: DateRange::new(date(2023, 1, 2), date(2023, 1, 15)).unwrap(),
        };
        write_events(&path, &[closing.clone(), opening.clone()]).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        // Both rows list the January period first regardless of kind.
        for line in text.lines().skip(1) {
            assert!(line.contains("2023-01-02,2023-01-15,2023-02-01,2023-02-14"), "{line}");
        }
        assert_eq!(read_events(&path).unwrap(), vec![closing, opening]);

        // Periods out of calendar order fail the event's own validation.
        std::fs::write(
            &path,
            "restaurant_id,kind,change_date,period1_start,period1_end,period2_start,period2_end\n\
             r1,closing,2023-01-20,2023-02-01,2023-02-14,2023-01-02,2023-01-15\n",
        )
        .unwrap();
        let err = read_events(&path).unwrap_err().to_string();
        assert!(err.contains("events.csv:2"), "{err}");

        std::fs::write(
            &path,
            "restaurant_id,kind,change_date,period1_start,period1_end,period2_start,period2_end\n\
             r1,shrinking,2023-01-20,2023-01-02,2023-01-15,2023-02-01,2023-02-14\n",
        )
        .unwrap();
        let err = read_events(&path).unwrap_err().to_string();
        assert!(err.contains("bad kind"), "{err}");
    }

    #[test]
    fn trace_round_trips_with_fixed_precision_seconds() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = vec![
            FitTracePoint { step: 50, elbo: -123.456, val_loglik: -98.7, seconds: 1.2344 },
            FitTracePoint { step: 100, elbo: -120.0, val_loglik: -97.5, seconds: 2.5 },
        ];
        write_trace(&path, &trace).unwrap();
        let got = read_trace(&path).unwrap();
        assert_eq!(got[0].step, 50);
        assert_eq!(got[0].elbo, -123.456);
        assert_eq!(got[0].val_loglik, -98.7);
        assert_eq!(got[0].seconds, 1.234);
        assert_eq!(got[1].seconds, 2.5);
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp_files() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("out.txt");
        atomic_write(&path, |w| Ok(w.write_all(b"first")?)).unwrap();
        atomic_write(&path, |w| Ok(w.write_all(b"second")?)).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");

        // A failing body must not leave anything at the target path.
        let missing = dir.path().join("never.txt");
        let r = atomic_write(&missing, |_| Err(Error::invalid("boom")));
        assert!(r.is_err());
        assert!(!missing.exists());

        let names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["out.txt".to_string()]);
    }

    #[test]
    fn snapshot_save_and_load_round_trip() {
        use crate::model::{FittedModel, MnlParams};
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("model.snapshot");
        let snap = Snapshot {
            model: FittedModel::Mnl(MnlParams::zeros(11)),
            categories: vec!["thai".to_string()],
            scales: None,
        };
        save_snapshot(&path, &snap).unwrap();
        assert_eq!(load_snapshot(&path).unwrap(), snap);
        let err = load_snapshot(&dir.path().join("absent")).unwrap_err().to_string();
        assert!(err.contains("absent"), "{err}");
    }
}
