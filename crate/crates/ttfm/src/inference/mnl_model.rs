//! The observables-only logit restriction wired into the SVI engine.
//!
//! Utilities collapse to `w·x_i − c·ln d_ui`: one common taste vector over
//! the observables and one scalar distance coefficient, no seasonal term.
//! Fitting it with the same engine as the full model keeps the comparison
//! honest — identical splits, optimizer, and convergence rule.

use ndarray::Array1;

use crate::data::{ChoiceSet, VisitObs};
use crate::math::log_sum_exp;
use crate::model::{MnlParams, Observables};
use crate::{Error, Result};

use super::{SviModel, VariationalPosterior};

/// Prior variance of the observable weights.
pub const MNL_WEIGHTS_VAR: f64 = 1.0;
/// Prior variance of the distance coefficient, matching the travel
/// families of the full model.
pub const MNL_DIST_VAR: f64 = 0.1;

pub struct MnlModel<'a> {
    obs: &'a Observables,
    sets: &'a [ChoiceSet],
    visits: &'a [VisitObs],
}

impl<'a> MnlModel<'a> {
    pub fn new(
        obs: &'a Observables,
        sets: &'a [ChoiceSet],
        visits: &'a [VisitObs],
    ) -> Result<Self> {
        for (u, set) in sets.iter().enumerate() {
            if let Some(&i) = set.restaurants.last() {
                if i >= obs.n_restaurants() {
                    return Err(Error::invalid(format!(
                        "choice set of user {u} references restaurant {i}, roster has {}",
                        obs.n_restaurants()
                    )));
                }
            }
        }
        for (k, v) in visits.iter().enumerate() {
            let set = sets.get(v.user).ok_or_else(|| {
                Error::inconsistent(format!("visit #{} has unknown user {}", k + 1, v.user))
            })?;
            if set.restaurants.get(v.alt) != Some(&v.restaurant) {
                return Err(Error::inconsistent(format!(
                    "visit #{}: alternative {} of user {} is not restaurant {}",
                    k + 1,
                    v.alt,
                    v.user,
                    v.restaurant
                )));
            }
        }
        Ok(MnlModel { obs, sets, visits })
    }

    /// Variational means as point estimates.
    pub fn posterior_means(&self, q: &VariationalPosterior) -> MnlParams {
        let kobs = self.obs.n_cols();
        MnlParams {
            weights: Array1::from_vec(q.mean[..kobs].to_vec()),
            dist_coef: q.mean[kobs],
        }
    }

    fn utilities_into(&self, z: &[f64], v: &VisitObs, out: &mut Vec<f64>) {
        let kobs = self.obs.n_cols();
        let w = &z[..kobs];
        let c = z[kobs];
        let set = &self.sets[v.user];
        out.clear();
        for (j, &i) in set.restaurants.iter().enumerate() {
            let xi = self.obs.row(i);
            let mut u = -c * set.log_dist[j];
            for (wk, &xk) in w.iter().zip(xi) {
                u += wk * xk;
            }
            out.push(u);
        }
    }
}

impl SviModel for MnlModel<'_> {
    fn n_latents(&self) -> usize {
        self.obs.n_cols() + 1
    }

    fn data_len(&self) -> usize {
        self.visits.len()
    }

    fn loglik(&self, z: &[f64], obs: &[usize]) -> Result<f64> {
        let mut util = Vec::new();
        let mut ll = 0.0;
        for &k in obs {
            let v = self
                .visits
                .get(k)
                .ok_or_else(|| Error::invalid(format!("visit index {k} out of range")))?;
            self.utilities_into(z, v, &mut util);
            ll += util[v.alt] - log_sum_exp(&util);
        }
        Ok(ll)
    }

    fn loglik_grad(&self, z: &[f64], obs: &[usize], scale: f64, grad: &mut [f64]) -> Result<f64> {
        let kobs = self.obs.n_cols();
        let mut util = Vec::new();
        let mut p = Vec::new();
        let mut ll = 0.0;
        for &k in obs {
            let v = self
                .visits
                .get(k)
                .ok_or_else(|| Error::invalid(format!("visit index {k} out of range")))?;
            let set = &self.sets[v.user];
            self.utilities_into(z, v, &mut util);
            let max = util.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            p.clear();
            let mut sum = 0.0;
            for &u in &util {
                let e = (u - max).exp();
                p.push(e);
                sum += e;
            }
            ll += util[v.alt] - (max + sum.ln());
            for (j, &i) in set.restaurants.iter().enumerate() {
                let e = if j == v.alt { 1.0 - p[j] / sum } else { -p[j] / sum };
                let w = scale * e;
                let xi = self.obs.row(i);
                for (g, &xk) in grad[..kobs].iter_mut().zip(xi) {
                    *g += w * xk;
                }
                grad[kobs] -= w * set.log_dist[j];
            }
        }
        Ok(ll)
    }

    fn prior_expectation(&self, mean: &[f64], sigma: &[f64]) -> f64 {
        let kobs = self.obs.n_cols();
        let term = |m: f64, s: f64, v: f64| {
            -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (m * m + s * s) / (2.0 * v)
        };
        let mut acc = term(mean[kobs], sigma[kobs], MNL_DIST_VAR);
        for i in 0..kobs {
            acc += term(mean[i], sigma[i], MNL_WEIGHTS_VAR);
        }
        acc
    }

    fn prior_expectation_grad(
        &self,
        mean: &[f64],
        sigma: &[f64],
        gmean: &mut [f64],
        gsigma: &mut [f64],
    ) {
        let kobs = self.obs.n_cols();
        for i in 0..kobs {
            gmean[i] -= mean[i] / MNL_WEIGHTS_VAR;
            gsigma[i] -= sigma[i] / MNL_WEIGHTS_VAR;
        }
        gmean[kobs] -= mean[kobs] / MNL_DIST_VAR;
        gsigma[kobs] -= sigma[kobs] / MNL_DIST_VAR;
    }

    fn family_name(&self, idx: usize) -> &'static str {
        if idx < self.obs.n_cols() {
            "weights"
        } else {
            "dist_coef"
        }
    }
}
