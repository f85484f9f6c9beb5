//! Summary statistics over elasticity records: the overall trip-weighted
//! moments, between/within decompositions by user or restaurant, and
//! restaurant-attribute groupings.

use std::collections::{BTreeMap, BTreeSet};

use crate::data::RestaurantRecord;
use crate::geo::encode_geohash;
use crate::{Error, Result};

use super::ElasticityRecord;

/// Group label for restaurants whose grouping attribute is absent.
const NO_LABEL: &str = "(none)";

/// How elasticity records are aggregated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grouping {
    /// Trip-weighted mean and SD over every record.
    Overall,
    /// Between/within decomposition across users.
    ByUser,
    /// Between/within decomposition across restaurants.
    ByItem,
    /// Restaurant-level means grouped by the most common category label.
    ByCategory,
    /// Restaurant-level means grouped by price range.
    ByPrice,
    /// Restaurant-level means grouped by city label.
    ByCity,
    /// Restaurant-level means grouped by precision-6 geohash cell.
    ByGeohash6,
}

/// Between/within spread for [`Grouping::ByUser`] / [`Grouping::ByItem`]:
/// how much elasticities vary across groups versus inside them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub n_groups: usize,
    /// SD of the per-group trip-weighted means, one point per group.
    pub sd_of_group_means: f64,
    /// Unweighted mean of the per-group trip-weighted SDs.
    pub mean_of_within_group_sds: f64,
}

/// One attribute group's row: restaurant-level mean elasticities
/// aggregated with trip-count weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub key: String,
    /// Restaurants contributing at least one record.
    pub n_items: usize,
    /// Total trips behind the group.
    pub weight: f64,
    pub mean: f64,
    /// Trip-weighted SD of the restaurant-level means.
    pub sd: f64,
}

/// The result of [`elasticity_summary`]. The overall moments are always
/// filled; `decomposition` only for the user/item groupings, `groups` only
/// for the attribute groupings.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticitySummary {
    pub grouping: Grouping,
    pub n_records: usize,
    pub total_weight: f64,
    /// Trip-weighted mean over all records.
    pub mean: f64,
    /// Trip-weighted SD over all records.
    pub sd: f64,
    pub decomposition: Option<Decomposition>,
    pub groups: Vec<GroupRow>,
    /// Attribute values present in the roster but backed by no record;
    /// their rows are omitted and the caller should surface these.
    pub omitted_groups: Vec<String>,
}

fn weighted_moments(pairs: &[(f64, f64)]) -> (f64, f64, f64) {
    let (xs, ws): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let (mean, sd) = crate::math::weighted_mean_sd(&xs, &ws);
    (mean, sd, ws.iter().sum())
}

fn unweighted_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).max(0.0).sqrt()
}

/// Aggregates elasticity records under `grouping`. The roster is consulted
/// only by the attribute groupings, which first collapse records to
/// restaurant-level trip-weighted means and then pool those by the
/// attribute; an attribute value with no backing record is omitted from
/// `groups` and listed in `omitted_groups` instead.
///
/// All standard deviations are population-form (divide by the weight, not
/// weight minus one): these are descriptive tables, not inference.
pub fn elasticity_summary(
    records: &[ElasticityRecord],
    grouping: Grouping,
    restaurants: &[RestaurantRecord],
) -> Result<ElasticitySummary> {
    if records.is_empty() {
        return Err(Error::invalid("no elasticity records to summarize"));
    }
    for r in records {
        if !(r.weight >= 0.0) {
            return Err(Error::invalid(format!(
                "elasticity record (user {}, restaurant {}) has negative weight {}",
                r.user, r.restaurant, r.weight
            )));
        }
    }
    let all: Vec<(f64, f64)> = records.iter().map(|r| (r.elasticity, r.weight)).collect();
    if all.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
        return Err(Error::invalid("elasticity records carry zero total weight"));
    }
    let (mean, sd, total_weight) = weighted_moments(&all);

    let mut out = ElasticitySummary {
        grouping,
        n_records: records.len(),
        total_weight,
        mean,
        sd,
        decomposition: None,
        groups: Vec::new(),
        omitted_groups: Vec::new(),
    };

    match grouping {
        Grouping::Overall => {}
        Grouping::ByUser => out.decomposition = Some(decompose(records, |r| r.user)),
        Grouping::ByItem => out.decomposition = Some(decompose(records, |r| r.restaurant)),
        Grouping::ByCategory | Grouping::ByPrice | Grouping::ByCity | Grouping::ByGeohash6 => {
            let key_of = |r: &RestaurantRecord| -> Result<String> {
                Ok(match grouping {
                    Grouping::ByCategory => r
                        .major_category(restaurants)
                        .map(str::to_string)
                        .unwrap_or_else(|| NO_LABEL.to_string()),
                    Grouping::ByPrice => r.price_range.to_string(),
                    Grouping::ByCity => {
                        if r.city.is_empty() {
                            NO_LABEL.to_string()
                        } else {
                            r.city.clone()
                        }
                    }
                    Grouping::ByGeohash6 => encode_geohash(r.point, 6)?.code().to_string(),
                    _ => unreachable!(),
                })
            };
            let (groups, omitted) = attribute_groups(records, restaurants, key_of)?;
            out.groups = groups;
            out.omitted_groups = omitted;
        }
    }
    Ok(out)
}

fn decompose(records: &[ElasticityRecord], key: impl Fn(&ElasticityRecord) -> usize) -> Decomposition {
    let mut by_group: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        by_group.entry(key(r)).or_default().push((r.elasticity, r.weight));
    }
    let mut means = Vec::with_capacity(by_group.len());
    let mut sds = Vec::with_capacity(by_group.len());
    for pairs in by_group.values() {
        let (m, s, _) = weighted_moments(pairs);
        means.push(m);
        sds.push(s);
    }
    Decomposition {
        n_groups: by_group.len(),
        sd_of_group_means: unweighted_sd(&means),
        mean_of_within_group_sds: sds.iter().sum::<f64>() / sds.len() as f64,
    }
}

fn attribute_groups(
    records: &[ElasticityRecord],
    restaurants: &[RestaurantRecord],
    key_of: impl Fn(&RestaurantRecord) -> Result<String>,
) -> Result<(Vec<GroupRow>, Vec<String>)> {
    // Restaurant-level means first, so heavy users inside one restaurant
    // don't leak across the attribute groups.
    let mut by_item: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for r in records {
        if r.restaurant >= restaurants.len() {
            return Err(Error::inconsistent(format!(
                "elasticity record references restaurant index {} of {}",
                r.restaurant,
                restaurants.len()
            )));
        }
        let slot = by_item.entry(r.restaurant).or_insert((0.0, 0.0));
        slot.0 += r.elasticity * r.weight;
        slot.1 += r.weight;
    }

    let mut by_key: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, (ew, w)) in &by_item {
        if *w <= 0.0 {
            continue;
        }
        by_key.entry(key_of(&restaurants[*i])?).or_default().push((ew / w, *w));
    }

    let expected: BTreeSet<String> =
        restaurants.iter().map(&key_of).collect::<Result<_>>()?;
    let omitted = expected.into_iter().filter(|k| !by_key.contains_key(k)).collect();

    let groups = by_key
        .into_iter()
        .map(|(key, pairs)| {
            let (mean, sd, weight) = weighted_moments(&pairs);
            GroupRow { key, n_items: pairs.len(), weight, mean, sd }
        })
        .collect();
    Ok((groups, omitted))
}
