//! The flat multinomial-logit restriction.
//!
//! Popularity is absorbed into the intercept-free observables, item
//! attributes are the observables themselves, every user shares one weight
//! vector, seasonal effects are dropped, and the travel interaction
//! collapses to a single scalar coefficient:
//!
//! ```text
//! U = weights · x_i - dist_coef * ln(d)
//! ```

use ndarray::Array1;

use super::observables::Observables;
use crate::data::{ChoiceSet, VisitObs};
use crate::math::log_sum_exp;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MnlParams {
    /// Shared observable weights, length k_obs.
    pub weights: Array1<f64>,
    /// Shared distance coefficient (enters with a minus sign).
    pub dist_coef: f64,
}

impl MnlParams {
    pub fn zeros(obs_dim: usize) -> Self {
        MnlParams { weights: Array1::zeros(obs_dim), dist_coef: 0.0 }
    }
}

/// Deterministic MNL utility of one alternative.
pub fn mnl_utility(
    params: &MnlParams,
    observables: &Observables,
    i: usize,
    d_miles: f64,
) -> Result<f64> {
    if !(d_miles > 0.0) {
        return Err(Error::invalid(format!("distance {d_miles} must be positive")));
    }
    Ok(params.weights.dot(&observables.row(i)) - params.dist_coef * d_miles.ln())
}

/// Utilities for every alternative in a choice set, appended to `out`.
pub fn mnl_set_utilities(
    params: &MnlParams,
    observables: &Observables,
    set: &ChoiceSet,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.reserve(set.len());
    for (pos, &i) in set.restaurants.iter().enumerate() {
        out.push(params.weights.dot(&observables.row(i)) - params.dist_coef * set.log_dist[pos]);
    }
}

/// Total MNL log-likelihood over visits.
pub fn mnl_log_likelihood(
    params: &MnlParams,
    observables: &Observables,
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
        mnl_set_utilities(params, observables, set, &mut utils);
        total += utils[v.alt] - log_sum_exp(&utils);
    }
    Ok(total)
}
