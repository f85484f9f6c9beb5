//! The factorization model wired into the SVI engine.
//!
//! Likelihood gradients are hand-derived from the softmax: with choice
//! probabilities p over a visit's alternatives and e_j = 1{j chosen} − p_j,
//! every utility parameter's gradient is e_j times its utility coefficient.
//! The prior expectation E_q[log p(z)] is exact: Gaussian families
//! contribute −(m² + σ²)/2v terms, and the hierarchical rows use
//!
//! ```text
//! E[(α_ir − Σ_c H_rc x_ic)²] = (m_α − Σ_c m_H x)² + σ_α² + Σ_c σ_H² x_ic²
//! ```
//!
//! since the posterior factors are independent.

use crate::data::{ChoiceSet, VisitObs};
use crate::math::log_sum_exp;
use crate::model::{LatentParams, ModelDims, Observables, PriorSpec};
use crate::rng::Prng;
use crate::{Error, Result};

use super::layout::{Family, ParamLayout};
use super::{SviModel, VariationalPosterior};

/// The travel-time factorization model over an estimation dataset, ready
/// for [`super::fit`].
pub struct TtfmModel<'a> {
    dims: ModelDims,
    layout: ParamLayout,
    obs: &'a Observables,
    sets: &'a [ChoiceSet],
    visits: &'a [VisitObs],
    prior: PriorSpec,
    /// Σ_i x_ic² per observable column, for the weight-scale prior terms.
    xsq: Vec<f64>,
}

impl<'a> TtfmModel<'a> {
    pub fn new(
        dims: &ModelDims,
        obs: &'a Observables,
        sets: &'a [ChoiceSet],
        visits: &'a [VisitObs],
        prior: PriorSpec,
    ) -> Result<Self> {
        dims.validate()?;
        prior.validate()?;
        if obs.n_restaurants() != dims.n_restaurants || obs.n_cols() != dims.obs_dim {
            return Err(Error::invalid(format!(
                "observables are {}×{}, dims want {}×{}",
                obs.n_restaurants(),
                obs.n_cols(),
                dims.n_restaurants,
                dims.obs_dim
            )));
        }
        if sets.len() != dims.n_users {
            return Err(Error::invalid(format!(
                "{} choice sets for {} users",
                sets.len(),
                dims.n_users
            )));
        }
        for (u, set) in sets.iter().enumerate() {
            if let Some(&i) = set.restaurants.last() {
                if i >= dims.n_restaurants {
                    return Err(Error::invalid(format!(
                        "choice set of user {u} references restaurant {i}, roster has {}",
                        dims.n_restaurants
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
            if v.week >= dims.n_weeks {
                return Err(Error::inconsistent(format!(
                    "visit #{} in week {} beyond the {}-week panel",
                    k + 1,
                    v.week,
                    dims.n_weeks
                )));
            }
        }
        let layout = ParamLayout::new(dims, &obs.layout)?;
        let xsq = (0..dims.obs_dim)
            .map(|c| obs.x.column(c).iter().map(|v| v * v).sum())
            .collect();
        Ok(TtfmModel { dims: *dims, layout, obs, sets, visits, prior, xsq })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    /// Variational means as structured point estimates.
    pub fn posterior_means(&self, q: &VariationalPosterior) -> LatentParams {
        self.layout.unpack(&q.mean)
    }

    /// Per-latent posterior standard deviations in the same structured
    /// shape (masked weight entries read 0).
    pub fn posterior_sigmas(&self, q: &VariationalPosterior) -> LatentParams {
        self.layout.unpack(&q.sigmas())
    }

    fn utilities_into(&self, z: &[f64], v: &VisitObs, out: &mut Vec<f64>) {
        let lay = &self.layout;
        let set = &self.sets[v.user];
        let up = &z[lay.user_pref(v.user)];
        let ut = &z[lay.user_travel(v.user)];
        let ws = &z[lay.week_season(v.week)];
        out.clear();
        for (j, &i) in set.restaurants.iter().enumerate() {
            let mut u = z[lay.popularity(i)];
            u += dot(up, &z[lay.item_attr(i)]);
            u += dot(ws, &z[lay.item_season(i)]);
            u -= dot(ut, &z[lay.item_travel(i)]) * set.log_dist[j];
            out.push(u);
        }
    }

    /// E_q[log p] of the independent Gaussian span `family` ~ N(0, v).
    fn gauss_block(&self, mean: &[f64], sigma: &[f64], family: Family, v: f64) -> f64 {
        let span = self.layout.span(family);
        let c = -0.5 * (2.0 * std::f64::consts::PI * v).ln();
        let inv2v = 1.0 / (2.0 * v);
        span.map(|i| c - (mean[i] * mean[i] + sigma[i] * sigma[i]) * inv2v).sum()
    }

    fn gauss_block_grad(
        &self,
        mean: &[f64],
        sigma: &[f64],
        family: Family,
        v: f64,
        gmean: &mut [f64],
        gsigma: &mut [f64],
    ) {
        for i in self.layout.span(family) {
            gmean[i] -= mean[i] / v;
            gsigma[i] -= sigma[i] / v;
        }
    }

    /// E_q[log p] of one hierarchical side: item rows ~ N(W·x_i, resid_var)
    /// with the free weight entries themselves latent.
    fn hier_value(&self, mean: &[f64], sigma: &[f64], side: HierSide) -> f64 {
        let k = side.k;
        if k == 0 {
            return 0.0;
        }
        let n = self.dims.n_restaurants;
        let kobs = self.dims.obs_dim;
        let (mh, sh) = self.dense_weights(mean, sigma, side);
        let mut acc = -0.5 * (n * k) as f64 * (2.0 * std::f64::consts::PI * side.resid_var).ln();
        let inv2v = 1.0 / (2.0 * side.resid_var);
        for i in 0..n {
            let xi = self.obs.row(i);
            for r in 0..k {
                let mut hx = 0.0;
                for c in 0..kobs {
                    hx += mh[r * kobs + c] * xi[c];
                }
                let idx = side.item_start + i * k + r;
                let resid = mean[idx] - hx;
                acc -= (resid * resid + sigma[idx] * sigma[idx]) * inv2v;
            }
        }
        for (r, c) in side.free {
            let s = sh[r * kobs + c];
            acc -= s * s * self.xsq[*c] * inv2v;
        }
        acc
    }

    fn hier_grad(
        &self,
        mean: &[f64],
        sigma: &[f64],
        side: HierSide,
        gmean: &mut [f64],
        gsigma: &mut [f64],
    ) {
        let k = side.k;
        if k == 0 {
            return;
        }
        let n = self.dims.n_restaurants;
        let kobs = self.dims.obs_dim;
        let (mh, sh) = self.dense_weights(mean, sigma, side);
        let inv_v = 1.0 / side.resid_var;
        let mut gmh = vec![0.0; k * kobs];
        for i in 0..n {
            let xi = self.obs.row(i);
            for r in 0..k {
                let mut hx = 0.0;
                for c in 0..kobs {
                    hx += mh[r * kobs + c] * xi[c];
                }
                let idx = side.item_start + i * k + r;
                let resid = mean[idx] - hx;
                gmean[idx] -= resid * inv_v;
                gsigma[idx] -= sigma[idx] * inv_v;
                for c in 0..kobs {
                    gmh[r * kobs + c] += resid * xi[c] * inv_v;
                }
            }
        }
        for (t, &(r, c)) in side.free.iter().enumerate() {
            gmean[side.w_start + t] += gmh[r * kobs + c];
            gsigma[side.w_start + t] -= sh[r * kobs + c] * self.xsq[c] * inv_v;
        }
    }

    /// Dense k×k_obs weight means and sigmas (masked entries zero).
    fn dense_weights(&self, mean: &[f64], sigma: &[f64], side: HierSide) -> (Vec<f64>, Vec<f64>) {
        let kobs = self.dims.obs_dim;
        let mut mh = vec![0.0; side.k * kobs];
        let mut sh = vec![0.0; side.k * kobs];
        for (t, &(r, c)) in side.free.iter().enumerate() {
            mh[r * kobs + c] = mean[side.w_start + t];
            sh[r * kobs + c] = sigma[side.w_start + t];
        }
        (mh, sh)
    }

    fn attr_side(&self) -> HierSide<'_> {
        HierSide {
            k: self.dims.pref_dim,
            item_start: self.layout.span(Family::ItemAttr).start,
            w_start: self.layout.span(Family::AttrWeights).start,
            free: self.layout.attr_free(),
            resid_var: self.prior.attr_resid,
        }
    }

    fn travel_side(&self) -> HierSide<'_> {
        HierSide {
            k: self.dims.travel_dim,
            item_start: self.layout.span(Family::ItemTravel).start,
            w_start: self.layout.span(Family::TravelWeights).start,
            free: self.layout.travel_free(),
            resid_var: self.prior.travel_resid,
        }
    }
}

#[derive(Clone, Copy)]
struct HierSide<'a> {
    k: usize,
    item_start: usize,
    w_start: usize,
    free: &'a [(usize, usize)],
    resid_var: f64,
}

impl SviModel for TtfmModel<'_> {
    fn n_latents(&self) -> usize {
        self.layout.n_latents()
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
        let lay = &self.layout;
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
                grad[lay.popularity(i)] += w;
                axpy(w, &z[lay.item_attr(i)], &mut grad[lay.user_pref(v.user)]);
                axpy(w, &z[lay.user_pref(v.user)], &mut grad[lay.item_attr(i)]);
                let wt = -set.log_dist[j] * w;
                axpy(wt, &z[lay.item_travel(i)], &mut grad[lay.user_travel(v.user)]);
                axpy(wt, &z[lay.user_travel(v.user)], &mut grad[lay.item_travel(i)]);
                axpy(w, &z[lay.item_season(i)], &mut grad[lay.week_season(v.week)]);
                axpy(w, &z[lay.week_season(v.week)], &mut grad[lay.item_season(i)]);
            }
        }
        Ok(ll)
    }

    fn prior_expectation(&self, mean: &[f64], sigma: &[f64]) -> f64 {
        let p = &self.prior;
        self.gauss_block(mean, sigma, Family::Popularity, p.popularity)
            + self.gauss_block(mean, sigma, Family::UserPref, p.user_pref)
            + self.gauss_block(mean, sigma, Family::UserTravel, p.user_travel)
            + self.gauss_block(mean, sigma, Family::ItemSeason, p.item_season)
            + self.gauss_block(mean, sigma, Family::WeekSeason, p.week_season)
            + self.gauss_block(mean, sigma, Family::AttrWeights, p.weights)
            + self.gauss_block(mean, sigma, Family::TravelWeights, p.weights)
            + self.hier_value(mean, sigma, self.attr_side())
            + self.hier_value(mean, sigma, self.travel_side())
    }

    fn prior_expectation_grad(
        &self,
        mean: &[f64],
        sigma: &[f64],
        gmean: &mut [f64],
        gsigma: &mut [f64],
    ) {
        let p = self.prior;
        self.gauss_block_grad(mean, sigma, Family::Popularity, p.popularity, gmean, gsigma);
        self.gauss_block_grad(mean, sigma, Family::UserPref, p.user_pref, gmean, gsigma);
        self.gauss_block_grad(mean, sigma, Family::UserTravel, p.user_travel, gmean, gsigma);
        self.gauss_block_grad(mean, sigma, Family::ItemSeason, p.item_season, gmean, gsigma);
        self.gauss_block_grad(mean, sigma, Family::WeekSeason, p.week_season, gmean, gsigma);
        self.gauss_block_grad(mean, sigma, Family::AttrWeights, p.weights, gmean, gsigma);
        self.gauss_block_grad(mean, sigma, Family::TravelWeights, p.weights, gmean, gsigma);
        self.hier_grad(mean, sigma, self.attr_side(), gmean, gsigma);
        self.hier_grad(mean, sigma, self.travel_side(), gmean, gsigma);
    }

    fn family_name(&self, idx: usize) -> &'static str {
        self.layout.family_of(idx).name()
    }
}

/// Draw structured parameters from the posterior, returning the standard
/// normal noise that produced them (z = m + σ·ε per scalar, flat index
/// order). Masked weight entries stay exactly zero.
pub fn sample_latents(
    layout: &ParamLayout,
    q: &VariationalPosterior,
    rng: &mut Prng,
) -> (LatentParams, Vec<f64>) {
    use rand::Rng;
    let sigma = q.sigmas();
    let n = q.n_latents();
    let mut eps = vec![0.0; n];
    let mut z = vec![0.0; n];
    for i in 0..n {
        eps[i] = rng.sample::<f64, _>(rand_distr::StandardNormal);
        z[i] = q.mean[i] + sigma[i] * eps[i];
    }
    (layout.unpack(&z), eps)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
