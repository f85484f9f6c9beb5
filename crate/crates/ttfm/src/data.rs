//! The estimation dataset: indexed users, restaurants, choice sets, visits.
//!
//! External files key everything by string ids. Internally users and
//! restaurants are dense indices, assigned in ascending id order so that
//! index comparisons and id comparisons agree everywhere tie-breaking
//! matters.

use chrono::NaiveDate;

use crate::geo::GeoPoint;
use crate::model::Observables;
use crate::{Error, Result};

/// One restaurant row as loaded from the roster CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RestaurantRecord {
    pub id: String,
    pub name: String,
    pub point: GeoPoint,
    /// 1 ($) through 4 ($$$$).
    pub price_range: u8,
    pub rating_overall: Option<f64>,
    pub n_ratings_overall: f64,
    pub rating_in_sample: Option<f64>,
    pub n_ratings_in_sample: f64,
    pub categories: Vec<String>,
    /// None = open since before the sample.
    pub open_date: Option<NaiveDate>,
    /// None = never closed.
    pub close_date: Option<NaiveDate>,
    /// Optional label used for grouped summaries; empty when unknown.
    pub city: String,
}

impl RestaurantRecord {
    /// Whether the restaurant is open on `date` (open_date inclusive,
    /// close_date exclusive).
    pub fn is_open(&self, date: NaiveDate) -> bool {
        if let Some(open) = self.open_date {
            if date < open {
                return false;
            }
        }
        if let Some(close) = self.close_date {
            if date >= close {
                return false;
            }
        }
        true
    }

    /// The restaurant's most common category label, used where a single
    /// label is needed. With per-record labels there is no frequency to
    /// compare, so "most common" is resolved against the roster: the label
    /// carried by the most restaurants, ties to the alphabetically first.
    pub fn major_category<'a>(&'a self, roster: &[RestaurantRecord]) -> Option<&'a str> {
        self.categories
            .iter()
            .map(|c| {
                let count =
                    roster.iter().filter(|r| r.categories.iter().any(|x| x == c)).count();
                (c.as_str(), count)
            })
            .max_by(|(ca, na), (cb, nb)| na.cmp(nb).then_with(|| cb.cmp(ca)))
            .map(|(c, _)| c)
    }
}

/// A user's alternatives: restaurant indices with distances from the
/// center of the user's narrow morning cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceSet {
    /// Global restaurant indices, strictly ascending.
    pub restaurants: Vec<usize>,
    /// Miles, each in (0, 20].
    pub distances: Vec<f64>,
    /// Cached ln(distance), index-aligned.
    pub log_dist: Vec<f64>,
}

impl ChoiceSet {
    pub fn new(restaurants: Vec<usize>, distances: Vec<f64>) -> Result<Self> {
        if restaurants.len() != distances.len() {
            return Err(Error::invalid("choice set index/distance length mismatch"));
        }
        if restaurants.is_empty() {
            return Err(Error::data("no-alternatives: empty choice set"));
        }
        if !restaurants.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("choice set restaurants must be strictly ascending"));
        }
        if let Some(d) = distances.iter().find(|d| !(**d > 0.0 && **d <= 20.0)) {
            return Err(Error::invalid(format!("choice-set distance {d} outside (0, 20] miles")));
        }
        let log_dist = distances.iter().map(|d| d.ln()).collect();
        Ok(ChoiceSet { restaurants, distances, log_dist })
    }

    pub fn len(&self) -> usize {
        self.restaurants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.restaurants.is_empty()
    }

    /// Position of a global restaurant index within this set.
    pub fn position(&self, restaurant: usize) -> Option<usize> {
        self.restaurants.binary_search(&restaurant).ok()
    }
}

/// One observed visit, fully indexed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisitObs {
    pub user: usize,
    /// Global restaurant index.
    pub restaurant: usize,
    /// Position of `restaurant` in the user's choice set.
    pub alt: usize,
    pub week: usize,
    pub date: NaiveDate,
}

/// A user entry: external id plus the morning anchor point distances are
/// measured from.
#[derive(Debug, Clone, PartialEq)]
pub struct UserInfo {
    pub id: String,
    pub point: GeoPoint,
}

/// Everything the fitter, evaluator, and counterfactual engine consume.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub users: Vec<UserInfo>,
    pub restaurants: Vec<RestaurantRecord>,
    pub observables: Observables,
    /// Per-user, index-aligned with `users`.
    pub choice_sets: Vec<ChoiceSet>,
    pub visits: Vec<VisitObs>,
    pub n_weeks: usize,
}

impl Dataset {
    /// Assembles a dataset from id-keyed parts, assigning dense indices in
    /// ascending id order and validating that every visit's restaurant
    /// appears in the visitor's choice set.
    pub fn assemble(
        mut users: Vec<UserInfo>,
        mut restaurants: Vec<RestaurantRecord>,
        // (user_id, restaurant_id, distance_miles)
        set_entries: &[(String, String, f64)],
        // (user_id, restaurant_id, date, week)
        visit_entries: &[(String, String, NaiveDate, usize)],
        n_weeks: usize,
    ) -> Result<Self> {
        users.sort_by(|a, b| a.id.cmp(&b.id));
        restaurants.sort_by(|a, b| a.id.cmp(&b.id));
        if users.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::data("duplicate user id in dataset"));
        }
        if restaurants.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::data("duplicate restaurant id in dataset"));
        }
        let user_idx = |id: &str| {
            users
                .binary_search_by(|u| u.id.as_str().cmp(id))
                .map_err(|_| Error::inconsistent(format!("unknown user id '{id}'")))
        };
        let rest_idx = |id: &str| {
            restaurants
                .binary_search_by(|r| r.id.as_str().cmp(id))
                .map_err(|_| Error::inconsistent(format!("unknown restaurant id '{id}'")))
        };

        let mut per_user: Vec<Vec<(usize, f64)>> = vec![Vec::new(); users.len()];
        for (uid, rid, d) in set_entries {
            per_user[user_idx(uid)?].push((rest_idx(rid)?, *d));
        }
        let mut choice_sets = Vec::with_capacity(users.len());
        for (u, mut entries) in per_user.into_iter().enumerate() {
            entries.sort_by_key(|e| e.0);
            if entries.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::data(format!(
                    "duplicate choice-set entry for user '{}'",
                    users[u].id
                )));
            }
            if entries.is_empty() {
                return Err(Error::data(format!(
                    "no-alternatives: user '{}' has an empty choice set",
                    users[u].id
                )));
            }
            let (r, d): (Vec<usize>, Vec<f64>) = entries.into_iter().unzip();
            choice_sets.push(ChoiceSet::new(r, d)?);
        }

        let mut visits = Vec::with_capacity(visit_entries.len());
        for (uid, rid, date, week) in visit_entries {
            let user = user_idx(uid)?;
            let restaurant = rest_idx(rid)?;
            let alt = choice_sets[user].position(restaurant).ok_or_else(|| {
                Error::inconsistent(format!(
                    "visit by user '{uid}' on {date}: restaurant '{rid}' not in the user's choice set"
                ))
            })?;
            if *week >= n_weeks {
                return Err(Error::inconsistent(format!(
                    "visit by user '{uid}' on {date}: week {week} outside 0..{n_weeks}"
                )));
            }
            visits.push(VisitObs { user, restaurant, alt, week: *week, date: *date });
        }

        let observables = Observables::build(&restaurants)?;
        Ok(Dataset { users, restaurants, observables, choice_sets, visits, n_weeks })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_restaurants(&self) -> usize {
        self.restaurants.len()
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.users.binary_search_by(|u| u.id.as_str().cmp(id)).ok()
    }

    pub fn restaurant_index(&self, id: &str) -> Option<usize> {
        self.restaurants.binary_search_by(|r| r.id.as_str().cmp(id)).ok()
    }
}

#[cfg(any(test, feature = "internal-test-support"))]
pub mod test_support {
    //! Tiny constructors for unit-test fixtures.
    use super::*;

    pub fn restaurant(
        id: &str,
        lat: f64,
        lon: f64,
        price: u8,
        rating_in_sample: Option<f64>,
        rating_overall: Option<f64>,
        categories: &[&str],
    ) -> RestaurantRecord {
        RestaurantRecord {
            id: id.to_string(),
            name: format!("{id} name"),
            point: GeoPoint { lat, lon },
            price_range: price,
            rating_overall,
            n_ratings_overall: 10.0,
            rating_in_sample,
            n_ratings_in_sample: 5.0,
            categories: categories.iter().map(|s| s.to_string()).collect(),
            open_date: None,
            close_date: None,
            city: String::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use test_support::restaurant;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn two_user_dataset() -> Dataset {
        let users = vec![
            UserInfo { id: "u2".into(), point: GeoPoint { lat: 0.0, lon: 0.0 } },
            UserInfo { id: "u1".into(), point: GeoPoint { lat: 0.1, lon: 0.1 } },
        ];
        let restaurants = vec![
            restaurant("r2", 0.01, 0.0, 1, Some(4.0), Some(4.0), &["a"]),
            restaurant("r1", 0.02, 0.0, 2, Some(3.0), Some(3.0), &["b"]),
        ];
        let sets = vec![
            ("u1".to_string(), "r1".to_string(), 1.0),
            ("u1".to_string(), "r2".to_string(), 2.0),
            ("u2".to_string(), "r1".to_string(), 0.5),
            ("u2".to_string(), "r2".to_string(), 0.5),
        ];
        let visits = vec![("u1".to_string(), "r2".to_string(), date("2017-03-06"), 0)];
        Dataset::assemble(users, restaurants, &sets, &visits, 10).unwrap()
    }

    #[test]
    fn indices_follow_ascending_id_order() {
        let ds = two_user_dataset();
        assert_eq!(ds.users[0].id, "u1");
        assert_eq!(ds.restaurants[0].id, "r1");
        assert_eq!(ds.user_index("u2"), Some(1));
        assert_eq!(ds.restaurant_index("r2"), Some(1));
        let v = ds.visits[0];
        assert_eq!((v.user, v.restaurant, v.alt), (0, 1, 1));
    }

    #[test]
    fn visit_outside_choice_set_is_an_inconsistency() {
        let users = vec![UserInfo { id: "u1".into(), point: GeoPoint { lat: 0.0, lon: 0.0 } }];
        let restaurants = vec![
            restaurant("r1", 0.01, 0.0, 1, Some(4.0), Some(4.0), &["a"]),
            restaurant("r2", 0.02, 0.0, 1, Some(4.0), Some(4.0), &["a"]),
        ];
        let sets = vec![("u1".to_string(), "r1".to_string(), 1.0)];
        let visits = vec![("u1".to_string(), "r2".to_string(), date("2017-03-06"), 0)];
        let err = Dataset::assemble(users, restaurants, &sets, &visits, 10).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("u1") && msg.contains("r2"), "unhelpful error: {msg}");
    }

    #[test]
    fn open_interval_is_inclusive_exclusive() {
        let mut r = restaurant("r1", 0.0, 0.0, 1, None, None, &["a"]);
        r.open_date = Some(date("2017-02-01"));
        r.close_date = Some(date("2017-06-01"));
        assert!(!r.is_open(date("2017-01-31")));
        assert!(r.is_open(date("2017-02-01")));
        assert!(r.is_open(date("2017-05-31")));
        assert!(!r.is_open(date("2017-06-01")));
    }

    #[test]
    fn major_category_prefers_roster_frequency_then_alphabetical() {
        let roster = vec![
            restaurant("r1", 0.0, 0.0, 1, None, None, &["deli", "pizza"]),
            restaurant("r2", 0.0, 0.1, 1, None, None, &["pizza"]),
            restaurant("r3", 0.0, 0.2, 1, None, None, &["bar", "cafe"]),
        ];
        // "pizza" appears on two restaurants, "deli" on one: frequency wins
        // even though "deli" sorts first.
        assert_eq!(roster[0].major_category(&roster), Some("pizza"));
        // "bar" and "cafe" both appear once; the tie goes alphabetically.
        assert_eq!(roster[2].major_category(&roster), Some("bar"));
    }
}
