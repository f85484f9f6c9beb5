//! Morning-location inference and the user-base filter.

use std::collections::BTreeMap;

use crate::geo::{encode_geohash, Geohash};

use super::{
    in_morning_window, is_weekday, AreaOfInterest, MorningLocation, Ping, PipelineConfig,
    RejectReason,
};

/// Infer where a user spends weekday mornings (09:00–11:15).
///
/// The broad location is the modal precision-6 cell over those pings and the
/// narrow location the modal precision-7 cell within it. Share denominators
/// are all weekday morning pings. Acceptance requires the broad cell to
/// intersect the area of interest and the three concentration shares to meet
/// their thresholds (inclusive). Modal ties break toward the
/// lexicographically smallest cell code so results are input-order
/// independent.
pub fn infer_morning_location(
    pings: &[Ping],
    area: &AreaOfInterest,
    config: &PipelineConfig,
) -> Result<MorningLocation, RejectReason> {
    let morning: Vec<&Ping> = pings
        .iter()
        .filter(|p| is_weekday(p.t.date()) && in_morning_window(p.t.time()))
        .collect();
    if morning.is_empty() {
        return Err(RejectReason::NoMorningPings);
    }
    let total = morning.len() as f64;

    // Every geohash below is derived from an already-validated GeoPoint, so
    // encoding cannot fail.
    let code_at = |p: &Ping, precision: usize| {
        encode_geohash(p.point, precision).expect("valid point").code().to_string()
    };

    let mut broad_counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in &morning {
        *broad_counts.entry(code_at(p, 6)).or_insert(0) += 1;
    }
    let (broad_code, broad_count) = modal(&broad_counts);

    if !area.contains_code(&broad_code) {
        return Err(RejectReason::BroadOutsideArea);
    }

    let in_area = morning.iter().filter(|p| area.contains_point(p.point)).count();
    let share_in_area = in_area as f64 / total;
    if share_in_area < config.min_share_in_area {
        return Err(RejectReason::LowAreaShare);
    }

    let share_broad = broad_count as f64 / total;
    if share_broad < config.min_share_broad {
        return Err(RejectReason::LowBroadShare);
    }

    let mut narrow_counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in &morning {
        let code = code_at(p, 7);
        if code.starts_with(broad_code.as_str()) {
            *narrow_counts.entry(code).or_insert(0) += 1;
        }
    }
    let (narrow_code, narrow_count) = modal(&narrow_counts);
    let share_narrow = narrow_count as f64 / total;
    if share_narrow < config.min_share_narrow {
        return Err(RejectReason::LowNarrowShare);
    }

    Ok(MorningLocation {
        user: morning[0].user.clone(),
        broad: Geohash::parse(&broad_code).expect("derived code"),
        narrow: Geohash::parse(&narrow_code).expect("derived code"),
        share_in_area,
        share_broad,
        share_narrow,
    })
}

/// Keep users who are observed enough to model: a home entry when a homes
/// table is supplied, enough active weeks, a high enough weekday in-area
/// ping rate, and a passing morning location. Returns accepted morning
/// locations in user-id order plus one rejection reason per excluded user.
///
/// An active week is any calendar week with at least one weekday ping; the
/// ping-rate numerator counts weekday pings inside the area only.
pub fn filter_user_base(
    users: &BTreeMap<String, Vec<Ping>>,
    area: &AreaOfInterest,
    homes: Option<&BTreeMap<String, Geohash>>,
    config: &PipelineConfig,
) -> (Vec<MorningLocation>, Vec<(String, RejectReason)>) {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (user, pings) in users {
        match screen_user(pings, area, homes.map(|h| h.contains_key(user)), config) {
            Ok(loc) => accepted.push(loc),
            Err(reason) => rejected.push((user.clone(), reason)),
        }
    }
    (accepted, rejected)
}

fn screen_user(
    pings: &[Ping],
    area: &AreaOfInterest,
    has_home: Option<bool>,
    config: &PipelineConfig,
) -> Result<MorningLocation, RejectReason> {
    if pings.is_empty() {
        return Err(RejectReason::NoPings);
    }
    if has_home == Some(false) {
        return Err(RejectReason::NoHome);
    }

    let weekday: Vec<&Ping> = pings.iter().filter(|p| is_weekday(p.t.date())).collect();
    let mut active_weeks = std::collections::BTreeSet::new();
    for p in &weekday {
        if let Ok(w) = config.week_index(p.t.date()) {
            active_weeks.insert(w);
        }
    }
    if active_weeks.len() < config.min_active_weeks {
        return Err(RejectReason::TooFewActiveWeeks);
    }

    let in_area = weekday.iter().filter(|p| area.contains_point(p.point)).count();
    let rate = in_area as f64 / active_weeks.len() as f64;
    if rate < config.min_pings_per_active_week {
        return Err(RejectReason::LowPingRate);
    }

    infer_morning_location(pings, area, config)
}

/// Largest count, ties to the smallest key. The map is never empty here.
fn modal(counts: &BTreeMap<String, usize>) -> (String, usize) {
    let (code, n) = counts
        .iter()
        .max_by(|(ca, na), (cb, nb)| na.cmp(nb).then_with(|| cb.cmp(ca)))
        .expect("non-empty counts");
    (code.clone(), *n)
}
