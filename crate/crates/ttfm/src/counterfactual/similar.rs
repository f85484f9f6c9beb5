//! Nearest-neighbor queries over fitted restaurant representations.

use std::collections::BTreeMap;

use ndarray::Array1;

use crate::data::Dataset;
use crate::geo::haversine_miles;
use crate::model::FittedModel;
use crate::{Error, Result};

/// Which representation distances are measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilaritySpace {
    /// Euclidean distance between latent attribute rows. Captures what a
    /// restaurant is, independent of where its customers live.
    Latent,
    /// Euclidean distance between per-user mean utility vectors, each
    /// entry a user's utility for the restaurant averaged over that user's
    /// observed visit contexts. Distance terms make geographic neighbors
    /// score alike here.
    Utility,
}

/// One similarity hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarRestaurant {
    pub restaurant: usize,
    pub distance: f64,
}

/// The `n` restaurants nearest to `i` in the chosen space, ascending by
/// distance with index ties ascending, `i` itself excluded. Asking for
/// more neighbors than exist returns them all.
///
/// Utility space averages over each user's observed visit contexts, so it
/// covers users with at least one visit; a restaurant outside a user's
/// choice set is priced at that user's geographic distance to it.
pub fn similar_restaurants(
    model: &FittedModel,
    dataset: &Dataset,
    i: usize,
    n: usize,
    space: SimilaritySpace,
) -> Result<Vec<SimilarRestaurant>> {
    let n_rest = dataset.n_restaurants();
    if i >= n_rest {
        return Err(Error::invalid(format!("restaurant index {i} out of range 0..{n_rest}")));
    }
    if n == 0 {
        return Err(Error::invalid("neighbor count must be positive"));
    }
    let dist2 = match space {
        SimilaritySpace::Latent => latent_distances(model, i, n_rest)?,
        SimilaritySpace::Utility => utility_distances(model, dataset, i)?,
    };
    let mut order: Vec<usize> = (0..n_rest).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| dist2[a].total_cmp(&dist2[b]).then(a.cmp(&b)));
    order.truncate(n);
    Ok(order
        .into_iter()
        .map(|j| SimilarRestaurant { restaurant: j, distance: dist2[j].sqrt() })
        .collect())
}

fn latent_distances(model: &FittedModel, i: usize, n_rest: usize) -> Result<Vec<f64>> {
    let FittedModel::Ttfm(params) = model else {
        return Err(Error::invalid(
            "latent-space similarity requires the factorization model",
        ));
    };
    let target = params.item_attr.row(i);
    Ok((0..n_rest)
        .map(|j| {
            let row = params.item_attr.row(j);
            target.iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum()
        })
        .collect())
}

fn utility_distances(model: &FittedModel, dataset: &Dataset, i: usize) -> Result<Vec<f64>> {
    let mut weeks_by_user: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in &dataset.visits {
        weeks_by_user.entry(v.user).or_default().push(v.week);
    }
    if weeks_by_user.is_empty() {
        return Err(Error::invalid("utility-space similarity needs at least one visit"));
    }

    let n_rest = dataset.n_restaurants();
    let mut dist2 = vec![0.0; n_rest];
    let mut log_dist = vec![0.0; n_rest];
    for (&u, weeks) in &weeks_by_user {
        let set = &dataset.choice_sets[u];
        let anchor = dataset.users[u].point;
        for j in 0..n_rest {
            log_dist[j] = match set.position(j) {
                Some(pos) => set.log_dist[pos],
                None => {
                    haversine_miles(anchor, dataset.restaurants[j].point).max(0.01).ln()
                }
            };
        }
        let utilities: Vec<f64> = match model {
            FittedModel::Ttfm(params) => {
                // Utility is linear in the week-season vector, so the mean
                // over contexts is the utility at the mean seasonal state.
                let mut season_bar = Array1::zeros(params.week_season.ncols());
                for &w in weeks {
                    season_bar += &params.week_season.row(w);
                }
                season_bar /= weeks.len() as f64;
                let static_part = &params.popularity
                    + &params.item_attr.dot(&params.user_pref.row(u))
                    + &params.item_season.dot(&season_bar);
                let sensitivity = params.item_travel.dot(&params.user_travel.row(u));
                (0..n_rest).map(|j| static_part[j] - sensitivity[j] * log_dist[j]).collect()
            }
            FittedModel::Mnl(params) => (0..n_rest)
                .map(|j| {
                    params.weights.dot(&dataset.observables.row(j))
                        - params.dist_coef * log_dist[j]
                })
                .collect(),
        };
        let target_utility = utilities[i];
        for j in 0..n_rest {
            dist2[j] += (target_utility - utilities[j]).powi(2);
        }
    }
    Ok(dist2)
}
