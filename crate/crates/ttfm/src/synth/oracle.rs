//! Brute-force reference implementations for testing the fast paths.
//!
//! Everything here trades efficiency and numerical armor for obviousness:
//! likelihoods exponentiate and normalize directly with no max-subtraction,
//! and evidence is a dense grid sum over the latent prior. Deliberately
//! written against the raw parameter arrays rather than the model's own
//! utility routines, so the two paths share nothing but the formula.

use crate::data::{ChoiceSet, VisitObs};
use crate::model::LatentParams;
use crate::{Error, Result};

/// Largest |utility| the naive oracle accepts before exp() accuracy decays.
const MAX_ORACLE_UTILITY: f64 = 30.0;

/// Largest instance (total alternative terms) the oracle will touch.
const MAX_ORACLE_TERMS: usize = 10_000;

/// Naive exponentiate-and-normalize log-likelihood.
pub fn oracle_loglik(
    params: &LatentParams,
    visits: &[VisitObs],
    sets: &[ChoiceSet],
) -> Result<f64> {
    let terms: usize = visits.iter().map(|v| sets[v.user].len()).sum();
    if terms > MAX_ORACLE_TERMS {
        return Err(Error::invalid(format!(
            "instance has {terms} utility terms, oracle is limited to {MAX_ORACLE_TERMS}"
        )));
    }
    let k1 = params.user_pref.ncols();
    let k2 = params.user_travel.ncols();
    let k3 = params.item_season.ncols();
    let n_weeks = params.week_season.nrows();

    let mut ll = 0.0;
    for v in visits {
        let set = &sets[v.user];
        let mut numer = 0.0;
        let mut denom = 0.0;
        for j in 0..set.len() {
            let i = set.restaurants[j];
            let mut u = params.popularity[i];
            for k in 0..k1 {
                u += params.user_pref[(v.user, k)] * params.item_attr[(i, k)];
            }
            let mut travel = 0.0;
            for k in 0..k2 {
                travel += params.user_travel[(v.user, k)] * params.item_travel[(i, k)];
            }
            u -= travel * set.distances[j].ln();
            if v.week < n_weeks {
                for k in 0..k3 {
                    u += params.item_season[(i, k)] * params.week_season[(v.week, k)];
                }
            }
            if u.abs() > MAX_ORACLE_UTILITY {
                return Err(Error::invalid(format!(
                    "utility {u} exceeds the oracle's |U| <= {MAX_ORACLE_UTILITY} contract"
                )));
            }
            let e = u.exp();
            denom += e;
            if j == v.alt {
                numer = e;
            }
        }
        ll += (numer / denom).ln();
    }
    Ok(ll)
}

/// log p(y) for a popularity-only instance (all factor dimensions zero) by
/// dense grid quadrature over the latent prior.
///
/// The latents are the popularity scalars of restaurants `0..n_latents`;
/// every utility is just that scalar, so the likelihood at a grid node is a
/// plain product of softmax terms. The grid spans ±6 prior SDs per
/// dimension. Refuses more than two latent dimensions — past that, use a
/// bound, not a grid.
pub fn oracle_evidence_quadrature(
    visits: &[VisitObs],
    sets: &[ChoiceSet],
    prior_var: f64,
    n_latents: usize,
    points_per_dim: usize,
) -> Result<f64> {
    if n_latents > 2 {
        return Err(Error::invalid(format!(
            "quadrature covers at most 2 latent scalars, got {n_latents}"
        )));
    }
    if !(prior_var > 0.0) {
        return Err(Error::invalid("prior variance must be positive"));
    }
    if n_latents > 0 && points_per_dim < 2 {
        return Err(Error::invalid("need at least 2 grid points per dimension"));
    }
    for v in visits {
        let set = &sets[v.user];
        if n_latents > 0 && set.restaurants.iter().any(|&i| i >= n_latents) {
            return Err(Error::invalid(
                "choice sets reference restaurants beyond the latent popularity vector",
            ));
        }
        if v.alt >= set.len() {
            return Err(Error::invalid("visit alternative outside its choice set"));
        }
    }

    // Likelihood of the panel at a fixed popularity vector, naively.
    let like_at = |z: &[f64]| -> f64 {
        let mut l = 1.0;
        for v in visits {
            let set = &sets[v.user];
            let mut numer = 0.0;
            let mut denom = 0.0;
            for j in 0..set.len() {
                let u = if z.is_empty() { 0.0 } else { z[set.restaurants[j]] };
                let e = u.exp();
                denom += e;
                if j == v.alt {
                    numer = e;
                }
            }
            l *= numer / denom;
        }
        l
    };

    if n_latents == 0 {
        return Ok(like_at(&[]).ln());
    }

    let sd = prior_var.sqrt();
    let lo = -6.0 * sd;
    let h = 12.0 * sd / (points_per_dim - 1) as f64;
    let node = |k: usize| lo + h * k as f64;
    let density = |z: f64| {
        (-z * z / (2.0 * prior_var)).exp() / (2.0 * std::f64::consts::PI * prior_var).sqrt()
    };

    let mut total = 0.0;
    match n_latents {
        1 => {
            for a in 0..points_per_dim {
                let z = node(a);
                total += like_at(&[z]) * density(z) * h;
            }
        }
        _ => {
            for a in 0..points_per_dim {
                let za = node(a);
                let wa = density(za) * h;
                for b in 0..points_per_dim {
                    let zb = node(b);
                    total += like_at(&[za, zb]) * wa * density(zb) * h;
                }
            }
        }
    }
    Ok(total.ln())
}
