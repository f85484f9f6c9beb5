//! Roster dedup, choice-set construction, and the estimation-sample filter.

use std::collections::{BTreeMap, BTreeSet};

use crate::data::{ChoiceSet, RestaurantRecord};
use crate::geo::{encode_geohash, haversine_miles};
use crate::{Error, Result};

use super::{MorningLocation, PipelineConfig, Visit};

/// Collapse listings that share a precision-8 cell to a single record: the
/// first in case-insensitive alphabetical name order, ties to the smaller
/// id. Output is sorted by id.
pub fn dedupe_restaurants(restaurants: &[RestaurantRecord]) -> Vec<RestaurantRecord> {
    let mut by_cell: BTreeMap<String, &RestaurantRecord> = BTreeMap::new();
    for r in restaurants {
        let code = encode_geohash(r.point, 8).expect("valid point").code().to_string();
        by_cell
            .entry(code)
            .and_modify(|kept| {
                let kept_key = (kept.name.to_lowercase(), &kept.id);
                let cand_key = (r.name.to_lowercase(), &r.id);
                if cand_key < kept_key {
                    *kept = r;
                }
            })
            .or_insert(r);
    }
    let mut out: Vec<RestaurantRecord> = by_cell.into_values().cloned().collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// A user's alternatives: every restaurant within 20 miles of the center of
/// their narrow morning cell, distances floored at 0.01 miles. Indices refer
/// to positions in `restaurants`.
pub fn build_choice_set(
    morning: &MorningLocation,
    restaurants: &[RestaurantRecord],
    config: &PipelineConfig,
) -> Result<ChoiceSet> {
    let center = morning.narrow.center();
    let mut indices = Vec::new();
    let mut distances = Vec::new();
    for (i, r) in restaurants.iter().enumerate() {
        let d = haversine_miles(center, r.point).max(config.distance_floor_miles);
        if d <= config.max_distance_miles {
            indices.push(i);
            distances.push(d);
        }
    }
    if indices.is_empty() {
        return Err(Error::data(format!(
            "no-alternatives: user {} has no restaurants within {} miles",
            morning.user, config.max_distance_miles
        )));
    }
    ChoiceSet::new(indices, distances)
}

/// Iterate to the estimation sample: users need ≥ 3 visits to surviving
/// restaurants; restaurants need an average of ≥ 1 visit per week from
/// surviving users or ≥ 5 visits overall (lifetime, over all input visits —
/// this leg never cascades). Dropping a user can starve a restaurant and
/// vice versa, so both rules are re-applied until nothing changes.
///
/// Returns the surviving visits plus the user and restaurant id lists,
/// each sorted.
pub fn filter_estimation_sample(
    visits: &[Visit],
    config: &PipelineConfig,
) -> (Vec<Visit>, Vec<String>, Vec<String>) {
    let n_weeks = config.n_weeks() as f64;

    let mut overall: BTreeMap<&str, usize> = BTreeMap::new();
    for v in visits {
        *overall.entry(v.restaurant.as_str()).or_insert(0) += 1;
    }

    let mut kept_users: BTreeSet<&str> = visits.iter().map(|v| v.user.as_str()).collect();
    let mut kept_rests: BTreeSet<&str> = overall.keys().copied().collect();

    loop {
        let mut user_visits: BTreeMap<&str, usize> = BTreeMap::new();
        for v in visits {
            if kept_rests.contains(v.restaurant.as_str()) {
                *user_visits.entry(v.user.as_str()).or_insert(0) += 1;
            }
        }
        let next_users: BTreeSet<&str> = user_visits
            .iter()
            .filter(|(_, &n)| n >= config.min_user_visits)
            .map(|(&u, _)| u)
            .collect();

        let mut base_visits: BTreeMap<&str, usize> = BTreeMap::new();
        for v in visits {
            if next_users.contains(v.user.as_str()) {
                *base_visits.entry(v.restaurant.as_str()).or_insert(0) += 1;
            }
        }
        let next_rests: BTreeSet<&str> = overall
            .iter()
            .filter(|(&r, &total)| {
                let from_base = base_visits.get(r).copied().unwrap_or(0) as f64;
                from_base / n_weeks >= config.min_restaurant_visits_per_week
                    || total >= config.min_restaurant_visits_overall
            })
            .map(|(&r, _)| r)
            .collect();

        let stable = next_users == kept_users && next_rests == kept_rests;
        kept_users = next_users;
        kept_rests = next_rests;
        if stable {
            break;
        }
    }

    let mut kept: Vec<Visit> = visits
        .iter()
        .filter(|v| {
            kept_users.contains(v.user.as_str()) && kept_rests.contains(v.restaurant.as_str())
        })
        .cloned()
        .collect();
    kept.sort_by(|a, b| {
        (&a.user, a.date, &a.restaurant).cmp(&(&b.user, b.date, &b.restaurant))
    });
    let users = kept_users.into_iter().map(str::to_string).collect();
    let rests = kept_rests.into_iter().map(str::to_string).collect();
    (kept, users, rests)
}
