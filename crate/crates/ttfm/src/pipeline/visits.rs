//! Restaurant-visit detection from lunch-window pings.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;

use crate::data::RestaurantRecord;
use crate::geo::{adjacent_geohashes, encode_geohash, Geohash};

use super::{in_lunch_window, MorningLocation, Ping, PipelineConfig, Visit};

/// A visit needs at least this many pings in the restaurant's cell patch…
const MIN_PINGS: usize = 2;
/// …spanning at least this many minutes.
const MIN_DWELL_MINUTES: f64 = 3.0;

/// Detect one user's restaurant visits.
///
/// For every restaurant and day, the pings between 11:30 and 13:30 that fall
/// in the restaurant's precision-8 cell or one of its adjacent cells form a
/// visit candidate; it becomes a visit when it has ≥ 2 pings spanning ≥ 3
/// minutes. A restaurant whose cell patch touches the user's narrow morning
/// cell — or the home cell when one is known — is never matched: pings there
/// say where the user lives or works, not where they eat. When candidates on
/// the same day share a ping, the longest dwell wins (ties to the smaller
/// restaurant id) and the losers are dropped entirely.
///
/// `restaurants` must already be deduplicated to one record per precision-8
/// cell. Pings outside the configured sample period are ignored.
pub fn detect_visits(
    pings: &[Ping],
    restaurants: &[RestaurantRecord],
    morning: &MorningLocation,
    home: Option<&Geohash>,
    config: &PipelineConfig,
) -> Vec<Visit> {
    let lunch: Vec<&Ping> = pings
        .iter()
        .filter(|p| in_lunch_window(p.t.time()) && config.week_index(p.t.date()).is_ok())
        .collect();
    if lunch.is_empty() {
        return Vec::new();
    }

    let mut by_cell: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (k, p) in lunch.iter().enumerate() {
        let code = encode_geohash(p.point, 8).expect("valid point").code().to_string();
        by_cell.entry(code).or_default().push(k);
    }

    struct Candidate {
        rest: usize,
        pings: Vec<usize>,
        dwell: f64,
    }

    let mut by_date: BTreeMap<NaiveDate, Vec<Candidate>> = BTreeMap::new();
    for (ri, r) in restaurants.iter().enumerate() {
        let cell = encode_geohash(r.point, 8).expect("valid point");
        let mut patch = adjacent_geohashes(&cell).expect("precision 8");
        patch.push(cell);
        let overlaps_base = patch.iter().any(|c| {
            let prefix = &c.code()[..7];
            prefix == morning.narrow.code() || home.is_some_and(|h| prefix == h.code())
        });
        if overlaps_base {
            continue;
        }

        let mut matched: Vec<usize> = patch
            .iter()
            .filter_map(|c| by_cell.get(c.code()))
            .flatten()
            .copied()
            .collect();
        matched.sort_unstable();
        matched.dedup();

        let mut days: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
        for &k in &matched {
            days.entry(lunch[k].t.date()).or_default().push(k);
        }
        for (date, idxs) in days {
            if idxs.len() < MIN_PINGS {
                continue;
            }
            let first = idxs.iter().map(|&k| lunch[k].t).min().expect("non-empty");
            let last = idxs.iter().map(|&k| lunch[k].t).max().expect("non-empty");
            let dwell = (last - first).num_milliseconds() as f64 / 60_000.0;
            if dwell >= MIN_DWELL_MINUTES {
                by_date.entry(date).or_default().push(Candidate { rest: ri, pings: idxs, dwell });
            }
        }
    }

    let mut out = Vec::new();
    for (date, mut cands) in by_date {
        cands.sort_by(|a, b| {
            b.dwell
                .partial_cmp(&a.dwell)
                .expect("finite dwell")
                .then_with(|| restaurants[a.rest].id.cmp(&restaurants[b.rest].id))
        });
        let mut used: BTreeSet<usize> = BTreeSet::new();
        for c in cands {
            if c.pings.iter().any(|k| used.contains(k)) {
                continue;
            }
            used.extend(c.pings.iter().copied());
            out.push(Visit {
                user: morning.user.clone(),
                restaurant: restaurants[c.rest].id.clone(),
                date,
                week: config.week_index(date).expect("in-period ping"),
                dwell_minutes: c.dwell,
                ping_count: c.pings.len(),
            });
        }
    }
    out.sort_by(|a, b| (a.date, &a.restaurant).cmp(&(b.date, &b.restaurant)));
    out
}
