//! Mean-field Gaussian stochastic variational inference.
//!
//! The engine is generic over an [`SviModel`]: anything that can score a
//! minibatch of observations at a latent vector, accumulate the likelihood
//! gradient, and supply its prior expectation in closed form. The ELBO is
//! estimated as
//!
//! ```text
//! ELBO(q) = E_q[log p(y | z)]  (Monte Carlo, reparameterized)
//!         + E_q[log p(z)]      (closed form)
//!         + H(q)               (closed form Gaussian entropy)
//! ```
//!
//! Only the likelihood term is stochastic, which keeps gradient variance
//! down and makes the ELBO a deterministic function of (posterior, seed).
//! Noise is drawn latent-by-latent within each Monte Carlo sample in flat
//! index order, so an estimate and a gradient computed from equally seeded
//! generators see exactly the same draws — finite differences of
//! [`elbo_estimate`] converge to [`elbo_gradient`] without MC error.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::math::{sigmoid, softplus, softplus_inv};
use crate::rng::{stream, Prng};
use crate::{Error, Result};

mod adam;
mod layout;
mod mnl_model;
mod ttfm_model;

pub use adam::Adam;
pub use layout::{Family, ParamLayout};
pub use mnl_model::MnlModel;
pub use ttfm_model::{sample_latents, TtfmModel};


/// Initial posterior standard deviation of every latent scalar.
pub const INIT_SIGMA: f64 = 0.1;
/// Initial spread of the posterior means.
pub const INIT_MEAN_SD: f64 = 0.01;

/// A diagonal Gaussian over the flat latent vector. Scales live on the raw
/// (pre-softplus) axis so any optimizer step keeps every σ positive.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalPosterior {
    pub mean: Vec<f64>,
    /// σ_i = softplus(raw_scale_i).
    pub raw_scale: Vec<f64>,
}

impl VariationalPosterior {
    pub fn n_latents(&self) -> usize {
        self.mean.len()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.raw_scale.iter().map(|&s| softplus(s)).collect()
    }

    /// Construct from means and standard deviations (σ > 0 required).
    pub fn from_moments(mean: Vec<f64>, sigma: &[f64]) -> Result<Self> {
        if mean.len() != sigma.len() {
            return Err(Error::invalid("mean/sigma length mismatch"));
        }
        if let Some(s) = sigma.iter().find(|&&s| !(s > 0.0)) {
            return Err(Error::invalid(format!("posterior sigma {s} must be positive")));
        }
        let raw_scale = sigma.iter().map(|&s| softplus_inv(s)).collect();
        Ok(VariationalPosterior { mean, raw_scale })
    }
}

/// What the SVI engine needs from a model.
///
/// `z` is always the flat latent vector; observation indices refer to the
/// model's own data. Implementations must be deterministic.
pub trait SviModel {
    fn n_latents(&self) -> usize;

    /// Number of observations the likelihood factorizes over.
    fn data_len(&self) -> usize;

    /// Sum of log-likelihood terms of the given observations at `z`.
    fn loglik(&self, z: &[f64], obs: &[usize]) -> Result<f64>;

    /// Adds `scale · ∂/∂z` of the summed log-likelihood into `grad` and
    /// returns the (unscaled) summed log-likelihood.
    fn loglik_grad(&self, z: &[f64], obs: &[usize], scale: f64, grad: &mut [f64]) -> Result<f64>;

    /// E_q[log p(z)] for the mean-field posterior N(mean, diag σ²).
    fn prior_expectation(&self, mean: &[f64], sigma: &[f64]) -> f64;

    /// Adds ∂/∂mean and ∂/∂σ of [`Self::prior_expectation`] into the two
    /// buffers.
    fn prior_expectation_grad(
        &self,
        mean: &[f64],
        sigma: &[f64],
        gmean: &mut [f64],
        gsigma: &mut [f64],
    );

    /// Latent family of a flat index, for diagnostics.
    fn family_name(&self, idx: usize) -> &'static str;
}

/// Draw a starting posterior: means scattered N(0, 0.01²), every σ = 0.1.
pub fn init_posterior(n_latents: usize, rng: &mut Prng) -> VariationalPosterior {
    let mean = (0..n_latents)
        .map(|_| INIT_MEAN_SD * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let raw = softplus_inv(INIT_SIGMA);
    VariationalPosterior { mean, raw_scale: vec![raw; n_latents] }
}

/// Gaussian entropy Σ_i ½·ln(2πe·σ_i²).
pub fn entropy(sigma: &[f64]) -> f64 {
    let half_ln_2pi_e = 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln());
    sigma.iter().map(|s| half_ln_2pi_e + s.ln()).sum()
}

/// Monte Carlo ELBO over the model's full dataset.
pub fn elbo_estimate<M: SviModel>(
    model: &M,
    q: &VariationalPosterior,
    n_samples: usize,
    rng: &mut Prng,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let n = model.n_latents();
    check_posterior_shape(q, n)?;
    let sigma = q.sigmas();
    let all: Vec<usize> = (0..model.data_len()).collect();
    let mut z = vec![0.0; n];
    let mut like = 0.0;
    for _ in 0..n_samples {
        for i in 0..n {
            let eps: f64 = rng.sample(StandardNormal);
            z[i] = q.mean[i] + sigma[i] * eps;
        }
        like += model.loglik(&z, &all)?;
    }
    like /= n_samples as f64;
    Ok(like + model.prior_expectation(&q.mean, &sigma) + entropy(&sigma))
}

/// A stochastic ELBO gradient, with the matching ELBO estimate thrown in
/// (it falls out of the same pass for free).
#[derive(Debug, Clone)]
pub struct ElboGradient {
    pub mean: Vec<f64>,
    pub raw_scale: Vec<f64>,
    pub elbo: f64,
}

/// Reparameterized gradient of the minibatch ELBO
///
/// ```text
/// (data_len/|minibatch|) · Σ_minibatch log p(y | z) + E_q[log p(z)] + H(q)
/// ```
///
/// with respect to every mean and raw scale. Unbiased for the full-data
/// ELBO gradient when minibatches are sampled uniformly.
pub fn elbo_gradient<M: SviModel>(
    model: &M,
    q: &VariationalPosterior,
    minibatch: &[usize],
    n_samples: usize,
    rng: &mut Prng,
) -> Result<ElboGradient> {
    if minibatch.is_empty() {
        return Err(Error::invalid("empty minibatch"));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let n = model.n_latents();
    check_posterior_shape(q, n)?;
    let sigma = q.sigmas();
    let scale = model.data_len() as f64 / minibatch.len() as f64;
    let per_sample = scale / n_samples as f64;

    let mut gmean = vec![0.0; n];
    let mut gsigma = vec![0.0; n];
    let mut eps = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut gz = vec![0.0; n];
    let mut like = 0.0;
    for _ in 0..n_samples {
        for i in 0..n {
            eps[i] = rng.sample(StandardNormal);
            z[i] = q.mean[i] + sigma[i] * eps[i];
        }
        gz.fill(0.0);
        like += model.loglik_grad(&z, minibatch, per_sample, &mut gz)?;
        // z = m + σ·ε, so ∂z/∂m = 1 and ∂z/∂σ = ε.
        for i in 0..n {
            gmean[i] += gz[i];
            gsigma[i] += gz[i] * eps[i];
        }
    }
    model.prior_expectation_grad(&q.mean, &sigma, &mut gmean, &mut gsigma);
    for i in 0..n {
        gsigma[i] += 1.0 / sigma[i]; // entropy term
    }
    // Chain through σ = softplus(raw): dσ/draw = sigmoid(raw).
    let raw_grad: Vec<f64> =
        gsigma.iter().zip(&q.raw_scale).map(|(&g, &r)| g * sigmoid(r)).collect();

    let elbo = like / n_samples as f64 * scale
        + model.prior_expectation(&q.mean, &sigma)
        + entropy(&sigma);
    Ok(ElboGradient { mean: gmean, raw_scale: raw_grad, elbo })
}

/// Knobs for [`fit`]. `Default` gives the documented standard settings;
/// set `seed` for reproducible runs.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub minibatch: usize,
    pub n_mc_samples: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub max_steps: usize,
    /// Steps between validation evaluations / trace points.
    pub eval_every: usize,
    /// Consecutive eval points without relative improvement that stop the
    /// run.
    pub convergence_window: usize,
    /// Relative validation log-likelihood improvement threshold.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            minibatch: 128,
            n_mc_samples: 1,
            step_size: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            max_steps: 50_000,
            eval_every: 200,
            convergence_window: 5,
            convergence_tol: 1e-4,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.minibatch == 0 {
            return Err(Error::invalid("minibatch must be at least 1"));
        }
        if self.n_mc_samples == 0 {
            return Err(Error::invalid("n_mc_samples must be at least 1"));
        }
        if self.max_steps == 0 || self.eval_every == 0 || self.convergence_window == 0 {
            return Err(Error::invalid(
                "max_steps, eval_every, and convergence_window must be at least 1",
            ));
        }
        if !(self.step_size > 0.0) || !(self.beta1 >= 0.0 && self.beta1 < 1.0)
            || !(self.beta2 >= 0.0 && self.beta2 < 1.0)
        {
            return Err(Error::invalid("bad optimizer constants"));
        }
        Ok(())
    }
}

/// One trace row per evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTracePoint {
    pub step: usize,
    /// Mean of the per-step stochastic ELBO estimates since the previous
    /// eval point.
    pub elbo: f64,
    /// Validation log-likelihood at the current posterior mean.
    pub val_loglik: f64,
    /// Wall-clock seconds since fit start.
    pub seconds: f64,
}

/// Maximize the ELBO by minibatch stochastic gradient ascent.
///
/// Minibatches are drawn by shuffling the training indices once per epoch
/// and walking them in chunks, so every observation is touched equally
/// often. The run stops at `max_steps` or as soon as the best validation
/// log-likelihood over the last `convergence_window` eval points fails to
/// beat the best before them by `convergence_tol` in relative terms.
/// Everything is a deterministic function of (model data, config).
pub fn fit<M: SviModel>(
    model: &M,
    train: &[usize],
    val: &[usize],
    config: &FitConfig,
) -> Result<(VariationalPosterior, Vec<FitTracePoint>)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let t0 = std::time::Instant::now();
    let n = model.n_latents();
    let mut q = init_posterior(n, &mut stream(config.seed, "svi-init", 0));
    let mut adam = Adam::new(2 * n, config.step_size, config.beta1, config.beta2);

    let mut trace: Vec<FitTracePoint> = Vec::new();
    let mut val_history: Vec<f64> = Vec::new();
    let mut window_elbo_sum = 0.0;
    let mut window_len = 0usize;
    let mut step = 0usize;
    let mut order: Vec<usize> = train.to_vec();

    'outer: for epoch in 0.. {
        shuffle(&mut order, &mut stream(config.seed, "svi-shuffle", epoch));
        for chunk in order.chunks(config.minibatch) {
            step += 1;
            let mut noise = stream(config.seed, "svi-noise", step as u64);
            let g = elbo_gradient(model, &q, chunk, config.n_mc_samples, &mut noise)?;
            check_finite(&g, model, step)?;
            adam.step_pair(&mut q.mean, &mut q.raw_scale, &g.mean, &g.raw_scale);
            window_elbo_sum += g.elbo;
            window_len += 1;

            if step % config.eval_every == 0 || step == config.max_steps {
                let val_ll = model.loglik(&q.mean, val)?;
                trace.push(FitTracePoint {
                    step,
                    elbo: window_elbo_sum / window_len as f64,
                    val_loglik: val_ll,
                    seconds: t0.elapsed().as_secs_f64(),
                });
                window_elbo_sum = 0.0;
                window_len = 0;
                val_history.push(val_ll);
                if converged(&val_history, config) || step >= config.max_steps {
                    break 'outer;
                }
            }
        }
    }
    Ok((q, trace))
}

fn converged(history: &[f64], config: &FitConfig) -> bool {
    let w = config.convergence_window;
    if history.len() <= w {
        return false;
    }
    let split = history.len() - w;
    let before = history[..split].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let recent = history[split..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rel = (recent - before) / before.abs().max(1e-12);
    rel < config.convergence_tol
}

fn check_finite<M: SviModel>(g: &ElboGradient, model: &M, step: usize) -> Result<()> {
    for (buf, kind) in [(&g.mean, "mean"), (&g.raw_scale, "scale")] {
        if let Some(i) = buf.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite {kind} gradient in family {} at step {step}",
                model.family_name(i)
            )));
        }
    }
    Ok(())
}

fn check_posterior_shape(q: &VariationalPosterior, n: usize) -> Result<()> {
    if q.mean.len() != n || q.raw_scale.len() != n {
        return Err(Error::invalid(format!(
            "posterior has {} means / {} scales, model has {n} latents",
            q.mean.len(),
            q.raw_scale.len()
        )));
    }
    Ok(())
}

/// Fisher–Yates with our deterministic stream type.
fn shuffle(xs: &mut [usize], rng: &mut Prng) {
    for i in (1..xs.len()).rev() {
        let j = rng.gen_range(0..=i);
        xs.swap(i, j);
    }
}
