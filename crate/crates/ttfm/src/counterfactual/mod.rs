//! What-if analysis on a fitted model with the roster held fixed.
//!
//! Everything here is pure prediction: replacement demand asks what a
//! restaurant would sell from another restaurant's site, open/close event
//! studies ask where a closing restaurant's visitors go, and the map
//! builders sweep a few representative restaurants over candidate sites.
//! No re-fitting happens after a roster change, and competitors never
//! react.

mod demand;
mod maps;
mod similar;


pub use demand::{
    alternative_comparison, replacement_utility, AlternativeComparison, DemandContext,
};
pub use maps::{
    best_category_map, best_location_map, select_category_reps, select_target_sites,
    BestCategoryRow, DemandGrid, GridRep, GridSite, RepSelection,
};
pub use similar::{similar_restaurants, SimilarRestaurant, SimilaritySpace};

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::eval::check_band_edges;
use crate::geo::haversine_miles;
use crate::math::mean_sd;
use crate::model::FittedModel;
use crate::{Error, Result};

/// Week index used when a share should carry no seasonal effect: any index
/// at or past the panel's last week evaluates the seasonal term at its
/// prior mean, zero.
pub const SEASON_FREE_WEEK: usize = usize::MAX;

/// Smallest open-regime target share an event study accepts; below it the
/// redistribution denominator is meaningless and the event is rejected.
pub const MIN_TARGET_SHARE: f64 = 1e-6;

/// An inclusive range of calendar dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::invalid(format!("date range {start}..{end} ends before it starts")));
        }
        Ok(DateRange { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// The middle date, rounded down; used to fix one roster per period.
    pub fn midpoint(&self) -> NaiveDate {
        self.start + Duration::days((self.end - self.start).num_days() / 2)
    }
}

/// Whether the target restaurant opened or closed at the change date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Opening,
    Closing,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Opening => "opening",
            EventKind::Closing => "closing",
        }
    }
}

/// One restaurant opening or closing, with the two observation windows the
/// event study compares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenCloseEvent {
    pub restaurant_id: String,
    pub kind: EventKind,
    pub change_date: NaiveDate,
    /// Dates on which the target was open.
    pub open_period: DateRange,
    /// Dates on which the target was closed.
    pub closed_period: DateRange,
}

impl OpenCloseEvent {
    /// Checks the period layout: the periods must be disjoint and ordered
    /// by the event kind (an opening is closed first, a closing open
    /// first), with the change date in the gap between them.
    pub fn validate(&self) -> Result<()> {
        if self.restaurant_id.is_empty() {
            return Err(Error::invalid("event with empty restaurant id"));
        }
        let (first, second) = match self.kind {
            EventKind::Opening => (&self.closed_period, &self.open_period),
            EventKind::Closing => (&self.open_period, &self.closed_period),
        };
        if first.end >= second.start {
            return Err(Error::invalid(format!(
                "{} event for '{}': the {} period must end before the {} period starts",
                self.kind.as_str(),
                self.restaurant_id,
                match self.kind {
                    EventKind::Opening => "closed",
                    EventKind::Closing => "open",
                },
                match self.kind {
                    EventKind::Opening => "open",
                    EventKind::Closing => "closed",
                },
            )));
        }
        if self.change_date <= first.end || self.change_date > second.start {
            return Err(Error::invalid(format!(
                "{} event for '{}': change date {} outside the gap between periods",
                self.kind.as_str(),
                self.restaurant_id,
                self.change_date,
            )));
        }
        Ok(())
    }
}

/// Eligibility thresholds for an event cohort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortConfig {
    /// Users qualify when their morning anchor is within this many miles
    /// of the target.
    pub radius_miles: f64,
    /// Restaurants qualify when they appear in the cohort's considered
    /// sets at least this many times in each period.
    pub consideration_floor: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig { radius_miles: 3.0, consideration_floor: 500 }
    }
}

/// The users and restaurants an event study aggregates over.
#[derive(Debug, Clone, PartialEq)]
pub struct EventCohort {
    pub event: OpenCloseEvent,
    /// Roster index of the event's restaurant.
    pub target: usize,
    /// Users whose morning anchor is within the radius, ascending.
    pub users: Vec<usize>,
    /// Aligned with `users`: each user's share of the cohort's open-period
    /// visits to cohort restaurants. Sums to 1.
    pub weights: Vec<f64>,
    /// Restaurants (excluding the target) open in both periods and meeting
    /// the consideration floor in both, ascending.
    pub eligible: Vec<usize>,
}

/// Builds the cohort for one event.
///
/// Consideration is counted per visit occasion: each visit by a cohort user
/// during a period exposes every restaurant in that user's choice set that
/// is open in the period. The target's own openness comes from the event,
/// not its roster record, so the target is never eligible as an "other"
/// restaurant (it is closed throughout the closed period by definition).
pub fn build_cohort(
    dataset: &Dataset,
    event: &OpenCloseEvent,
    config: &CohortConfig,
) -> Result<EventCohort> {
    event.validate()?;
    if !(config.radius_miles > 0.0 && config.radius_miles.is_finite()) {
        return Err(Error::invalid(format!(
            "cohort radius {} must be positive and finite",
            config.radius_miles
        )));
    }
    let target = dataset
        .restaurant_index(&event.restaurant_id)
        .ok_or_else(|| Error::data(format!("unknown restaurant id '{}'", event.restaurant_id)))?;
    let target_point = dataset.restaurants[target].point;

    let users: Vec<usize> = (0..dataset.n_users())
        .filter(|&u| haversine_miles(dataset.users[u].point, target_point) <= config.radius_miles)
        .collect();
    if users.is_empty() {
        return Err(Error::data(format!(
            "empty-cohort: no users within {} miles of '{}'",
            config.radius_miles, event.restaurant_id
        )));
    }
    for &u in &users {
        if dataset.choice_sets[u].position(target).is_none() {
            return Err(Error::inconsistent(format!(
                "cohort user '{}' does not have '{}' in their choice set",
                dataset.users[u].id, event.restaurant_id
            )));
        }
    }

    // Visit occasions per cohort user in each period.
    let mut open_sessions = vec![0u64; dataset.n_users()];
    let mut closed_sessions = vec![0u64; dataset.n_users()];
    for v in &dataset.visits {
        if event.open_period.contains(v.date) {
            open_sessions[v.user] += 1;
        }
        if event.closed_period.contains(v.date) {
            closed_sessions[v.user] += 1;
        }
    }

    // How often each restaurant sits in a considered set, per period.
    let mut open_count = vec![0u64; dataset.n_restaurants()];
    let mut closed_count = vec![0u64; dataset.n_restaurants()];
    for &u in &users {
        for &r in &dataset.choice_sets[u].restaurants {
            open_count[r] += open_sessions[u];
            closed_count[r] += closed_sessions[u];
        }
    }
    let open_mid = event.open_period.midpoint();
    let closed_mid = event.closed_period.midpoint();
    let eligible: Vec<usize> = (0..dataset.n_restaurants())
        .filter(|&r| {
            r != target
                && dataset.restaurants[r].is_open(open_mid)
                && dataset.restaurants[r].is_open(closed_mid)
                && open_count[r] >= config.consideration_floor
                && closed_count[r] >= config.consideration_floor
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::data(format!(
            "empty-cohort: no restaurant other than '{}' is open in both periods and \
             considered at least {} times in each",
            event.restaurant_id, config.consideration_floor
        )));
    }

    // Weight users by their share of the cohort's open-period visits to
    // cohort restaurants (the eligible set plus the target itself).
    let universe: BTreeSet<usize> = eligible.iter().copied().chain([target]).collect();
    let mut raw = vec![0.0; users.len()];
    for v in &dataset.visits {
        if event.open_period.contains(v.date) && universe.contains(&v.restaurant) {
            if let Ok(k) = users.binary_search(&v.user) {
                raw[k] += 1.0;
            }
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::data(format!(
            "empty-cohort: no open-period visits to cohort restaurants around '{}'",
            event.restaurant_id
        )));
    }
    let weights = raw.into_iter().map(|w| w / total).collect();

    Ok(EventCohort { event: event.clone(), target, users, weights, eligible })
}

/// Whether the target restaurant is on the menu of alternatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    TargetOpen,
    TargetClosed,
}

/// Cohort market shares under one regime, keyed by roster index.
///
/// Each cohort user's choice probabilities are taken over the cohort
/// restaurants in their choice set — the eligible set plus, in the open
/// regime, the target — and combined with the open-period user weights.
/// Utilities are evaluated season-free, so a share depends on the period
/// only through which restaurants are on the menu; this is what lets the
/// event study difference out everything except the target's presence.
pub fn market_shares(
    model: &FittedModel,
    dataset: &Dataset,
    cohort: &EventCohort,
    regime: Regime,
) -> Result<BTreeMap<usize, f64>> {
    if cohort.users.len() != cohort.weights.len() {
        return Err(Error::invalid("cohort users and weights differ in length"));
    }
    let mut universe: BTreeSet<usize> = cohort.eligible.iter().copied().collect();
    if regime == Regime::TargetOpen {
        universe.insert(cohort.target);
    }
    let mut shares: BTreeMap<usize, f64> = universe.iter().map(|&r| (r, 0.0)).collect();

    let mut utils = Vec::new();
    let mut picked: Vec<(usize, f64)> = Vec::new();
    for (&u, &w) in cohort.users.iter().zip(&cohort.weights) {
        let set = &dataset.choice_sets[u];
        model.set_utilities_into(&dataset.observables, u, SEASON_FREE_WEEK, set, &mut utils);
        picked.clear();
        for (pos, &r) in set.restaurants.iter().enumerate() {
            if universe.contains(&r) {
                picked.push((r, utils[pos]));
            }
        }
        if picked.is_empty() {
            return Err(Error::inconsistent(format!(
                "cohort user '{}' has no cohort restaurant in their choice set",
                dataset.users[u].id
            )));
        }
        let max = picked.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = picked.iter().map(|(_, v)| (v - max).exp()).sum();
        for &(r, v) in &picked {
            *shares.get_mut(&r).unwrap() += w * (v - max).exp() / denom;
        }
    }
    Ok(shares)
}

/// One event's redistribution row: the fraction of the target's market
/// share absorbed within each distance band around it.
#[derive(Debug, Clone, PartialEq)]
pub struct RedistributionRow {
    pub restaurant_id: String,
    pub kind: EventKind,
    /// Aligned with the study's band edges; sums to 1.
    pub shares: Vec<f64>,
}

/// Where a closed (or not-yet-open) target's visitors go, by distance.
///
/// Per cohort restaurant the pure effect of the target's presence is the
/// closed-regime share minus the open-regime share, minus the share change
/// the model predicts between the two periods with the target closed in
/// both. Cohort restaurants are open in both periods and shares are
/// season-free, so that baseline term — the difference of two identical
/// computations — is exactly zero here; it is kept in the output contract
/// because against observed shares it is not. Band totals are normalized
/// by the target's open-regime share, so they sum to 1.
pub fn redistribution_by_distance(
    model: &FittedModel,
    dataset: &Dataset,
    cohort: &EventCohort,
    band_edges: &[f64],
) -> Result<RedistributionRow> {
    check_band_edges(band_edges)?;
    let open = market_shares(model, dataset, cohort, Regime::TargetOpen)?;
    let closed = market_shares(model, dataset, cohort, Regime::TargetClosed)?;

    let target_share = open[&cohort.target];
    if target_share < MIN_TARGET_SHARE {
        return Err(Error::data(format!(
            "degenerate-event: open-regime share {target_share:.3e} of '{}' is below {MIN_TARGET_SHARE:.0e}",
            cohort.event.restaurant_id
        )));
    }

    let target_point = dataset.restaurants[cohort.target].point;
    let mut shares = vec![0.0; band_edges.len()];
    for &r in &cohort.eligible {
        let d = haversine_miles(target_point, dataset.restaurants[r].point).max(0.01);
        let band = band_edges.partition_point(|&e| e < d);
        if band == band_edges.len() {
            return Err(Error::invalid(format!(
                "cohort restaurant '{}' lies {d:.2} miles from '{}', beyond the last band edge",
                dataset.restaurants[r].id, cohort.event.restaurant_id
            )));
        }
        shares[band] += (closed[&r] - open[&r]) / target_share;
    }
    Ok(RedistributionRow {
        restaurant_id: cohort.event.restaurant_id.clone(),
        kind: cohort.event.kind,
        shares,
    })
}

/// Across-event mean and standard error per band.
#[derive(Debug, Clone, PartialEq)]
pub struct RedistributionSummary {
    pub n_events: usize,
    pub mean: Vec<f64>,
    /// Sample standard deviation over events divided by sqrt(n); missing
    /// when there are fewer than two events.
    pub se: Vec<Option<f64>>,
}

/// Averages redistribution rows across events.
pub fn event_summary(rows: &[RedistributionRow]) -> Result<RedistributionSummary> {
    let Some(first) = rows.first() else {
        return Err(Error::invalid("no events to summarize"));
    };
    if rows.iter().any(|r| r.shares.len() != first.shares.len()) {
        return Err(Error::invalid("events disagree on the number of distance bands"));
    }
    let n = rows.len();
    let mut mean = Vec::with_capacity(first.shares.len());
    let mut se = Vec::with_capacity(first.shares.len());
    for b in 0..first.shares.len() {
        let vals: Vec<f64> = rows.iter().map(|r| r.shares[b]).collect();
        let (m, sd) = mean_sd(&vals);
        mean.push(m);
        se.push((n >= 2).then(|| sd / (n as f64).sqrt()));
    }
    Ok(RedistributionSummary { n_events: n, mean, se })
}

/// Per-event redistribution rows plus their across-event summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RedistributionTable {
    /// Band upper edges; band b is (edges[b-1], edges[b]] with a 0 floor.
    pub band_edges: Vec<f64>,
    /// One row per event, ordered by (restaurant id, change date).
    pub rows: Vec<RedistributionRow>,
    pub summary: RedistributionSummary,
}

/// Runs the full event study: cohorts, redistribution rows, and the
/// across-event summary. Events are processed in parallel and reported in
/// (restaurant id, change date) order regardless of input order.
pub fn redistribution_study(
    model: &FittedModel,
    dataset: &Dataset,
    events: &[OpenCloseEvent],
    config: &CohortConfig,
    band_edges: &[f64],
) -> Result<RedistributionTable> {
    check_band_edges(band_edges)?;
    let mut ordered: Vec<&OpenCloseEvent> = events.iter().collect();
    ordered.sort_by(|a, b| {
        (&a.restaurant_id, a.change_date).cmp(&(&b.restaurant_id, b.change_date))
    });
    let rows = ordered
        .par_iter()
        .map(|event| {
            let cohort = build_cohort(dataset, event, config)?;
            redistribution_by_distance(model, dataset, &cohort, band_edges)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = event_summary(&rows)?;
    Ok(RedistributionTable { band_edges: band_edges.to_vec(), rows, summary })
}
