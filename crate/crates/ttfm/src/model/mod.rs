//! The travel-time factorization choice model.
//!
//! A visit is a draw from a softmax over the visitor's choice set. The
//! deterministic utility of restaurant i for user u in week w at distance d
//! (miles) is
//!
//! ```text
//! U = popularity[i]
//!   + user_pref[u] · item_attr[i]
//!   + item_season[i] · week_season[w]
//!   - (user_travel[u] · item_travel[i]) * ln(d)
//! ```
//!
//! Latent attributes and travel factors get hierarchical Gaussian priors
//! centered on block-masked linear maps of the restaurant observables; all
//! other latents get independent mean-zero Gaussian priors. The additive
//! noise on top of U is standard Gumbel, which is what makes the choice
//! probabilities a softmax.

mod fitted;
mod mask;
mod mnl;
mod observables;
mod params;
mod snapshot;

pub use fitted::FittedModel;
pub use mask::{block_mask, free_entries};
pub use mnl::{mnl_log_likelihood, mnl_set_utilities, mnl_utility, MnlParams};
pub use observables::{ObsLayout, Observables, N_PRICE_LEVELS, N_RATING_COLS};
pub use params::{LatentParams, ModelDims, PriorSpec};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot, SnapshotScales, SNAPSHOT_HEADER};

use crate::data::{ChoiceSet, VisitObs};
use crate::math::log_sum_exp;
use crate::{Error, Result};

/// Deterministic utility of one alternative.
///
/// `week` at or past `n_weeks` is treated as out of sample: its seasonal
/// effect is the prior mean, zero.
pub fn utility(
    params: &LatentParams,
    u: usize,
    i: usize,
    week: usize,
    d_miles: f64,
) -> Result<f64> {
    if !(d_miles > 0.0) {
        return Err(Error::invalid(format!("distance {d_miles} must be positive")));
    }
    let mut v = params.popularity[i]
        + params.user_pref.row(u).dot(&params.item_attr.row(i))
        - params.user_travel.row(u).dot(&params.item_travel.row(i)) * d_miles.ln();
    if week < params.week_season.nrows() {
        v += params.item_season.row(i).dot(&params.week_season.row(week));
    }
    Ok(v)
}

/// Utilities for every alternative in a choice set, appended to `out`.
pub fn set_utilities_into(
    params: &LatentParams,
    u: usize,
    week: usize,
    set: &ChoiceSet,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.reserve(set.len());
    let pref = params.user_pref.row(u);
    let travel = params.user_travel.row(u);
    let season = if week < params.week_season.nrows() {
        Some(params.week_season.row(week))
    } else {
        None
    };
    for (pos, &i) in set.restaurants.iter().enumerate() {
        let mut v = params.popularity[i] + pref.dot(&params.item_attr.row(i))
            - travel.dot(&params.item_travel.row(i)) * set.log_dist[pos];
        if let Some(w) = &season {
            v += params.item_season.row(i).dot(w);
        }
        out.push(v);
    }
}

/// Softmax choice probabilities over a user's choice set.
pub fn choice_probabilities(
    params: &LatentParams,
    u: usize,
    week: usize,
    set: &ChoiceSet,
) -> Result<Vec<f64>> {
    if set.is_empty() {
        return Err(Error::invalid("empty choice set"));
    }
    let mut probs = Vec::new();
    set_utilities_into(params, u, week, set, &mut probs);
    crate::math::softmax_in_place(&mut probs);
    Ok(probs)
}

/// Total log-likelihood of the visits under `params`.
pub fn log_likelihood(
    params: &LatentParams,
    visits: &[VisitObs],
    choice_sets: &[ChoiceSet],
) -> Result<f64> {
    let mut total = 0.0;
    let mut utils = Vec::new();
    for (k, v) in visits.iter().enumerate() {
        let set = &choice_sets[v.user];
        if v.alt >= set.len() || set.restaurants[v.alt] != v.restaurant {
            return Err(Error::inconsistent(format!(
                "visit #{k} (user index {}, restaurant index {}): chosen restaurant not in the user's choice set",
                v.user, v.restaurant
            )));
        }
        set_utilities_into(params, v.user, v.week, set, &mut utils);
        total += utils[v.alt] - log_sum_exp(&utils);
    }
    Ok(total)
}

/// Joint log prior density of a full parameter set.
///
/// Attribute and travel rows are Gaussian around the masked observable maps
/// with the residual variances; every other family (and each unmasked weight
/// entry) is an independent mean-zero Gaussian with its family variance.
/// Masked weight entries are structural zeros, not random variables, and
/// contribute nothing.
pub fn hierarchical_prior_logdensity(
    params: &LatentParams,
    observables: &Observables,
    prior: &PriorSpec,
) -> Result<f64> {
    let dims = params.dims();
    let ln_norm = |var: f64| -0.5 * (2.0 * std::f64::consts::PI * var).ln();

    let mut total = 0.0;
    for &v in &params.popularity {
        total += ln_norm(prior.popularity) - v * v / (2.0 * prior.popularity);
    }
    for &v in &params.user_pref {
        total += ln_norm(prior.user_pref) - v * v / (2.0 * prior.user_pref);
    }
    for &v in &params.user_travel {
        total += ln_norm(prior.user_travel) - v * v / (2.0 * prior.user_travel);
    }
    for &v in &params.item_season {
        total += ln_norm(prior.item_season) - v * v / (2.0 * prior.item_season);
    }
    for &v in &params.week_season {
        total += ln_norm(prior.week_season) - v * v / (2.0 * prior.week_season);
    }

    // Hierarchical families: rows centered on the masked observable maps.
    for i in 0..dims.n_restaurants {
        let x = observables.row(i);
        let attr_mean = params.attr_weights.dot(&x);
        for (a, m) in params.item_attr.row(i).iter().zip(attr_mean.iter()) {
            total += ln_norm(prior.attr_resid) - (a - m).powi(2) / (2.0 * prior.attr_resid);
        }
        let travel_mean = params.travel_weights.dot(&x);
        for (b, m) in params.item_travel.row(i).iter().zip(travel_mean.iter()) {
            total += ln_norm(prior.travel_resid) - (b - m).powi(2) / (2.0 * prior.travel_resid);
        }
    }

    // Weight matrices: unmasked entries only.
    for (k, w) in [
        (dims.pref_dim, &params.attr_weights),
        (dims.travel_dim, &params.travel_weights),
    ] {
        for (r, c) in free_entries(k, &observables.layout)? {
            let v = w[(r, c)];
            total += ln_norm(prior.weights) - v * v / (2.0 * prior.weights);
        }
        // Masked entries must be structural zeros.
        let mask = block_mask(k, &observables.layout)?;
        for ((r, c), &m) in mask.indexed_iter().map(|(rc, m)| (rc, m)) {
            if m == 0.0 && w[(r, c)] != 0.0 {
                return Err(Error::invalid(format!(
                    "masked weight entry ({r}, {c}) is {} but must be exactly zero",
                    w[(r, c)]
                )));
            }
        }
    }
    Ok(total)
}
