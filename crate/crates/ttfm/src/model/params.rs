//! Model dimensions, prior variances, and the latent parameter collection.

use ndarray::{Array1, Array2};

use crate::{Error, Result};

/// Sizes of every parameter family.
///
/// `pref_dim` and `travel_dim` must be divisible by 4 so the quarter masking
/// rule applies; zero is allowed for degenerate test instances. `season_dim`
/// defaults to 5 and is rarely changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n_users: usize,
    pub n_restaurants: usize,
    pub n_weeks: usize,
    /// Length of user_pref / item_attr vectors (default 80).
    pub pref_dim: usize,
    /// Length of user_travel / item_travel vectors (default 16).
    pub travel_dim: usize,
    /// Length of item_season / week_season vectors (default 5).
    pub season_dim: usize,
    /// Number of observable columns.
    pub obs_dim: usize,
}

pub const DEFAULT_PREF_DIM: usize = 80;
pub const DEFAULT_TRAVEL_DIM: usize = 16;
pub const DEFAULT_SEASON_DIM: usize = 5;

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_restaurants == 0 {
            return Err(Error::invalid("model needs at least one user and one restaurant"));
        }
        if self.obs_dim == 0 {
            return Err(Error::invalid("model needs at least one observable column"));
        }
        if self.pref_dim % 4 != 0 {
            return Err(Error::invalid(format!(
                "pref_dim {} is not divisible by 4 (block masking)",
                self.pref_dim
            )));
        }
        if self.travel_dim % 4 != 0 {
            return Err(Error::invalid(format!(
                "travel_dim {} is not divisible by 4 (block masking)",
                self.travel_dim
            )));
        }
        Ok(())
    }
}

/// Prior variance of each latent family.
///
/// The attribute and travel families are hierarchical: their rows are
/// Gaussian around the masked observable maps with the `*_resid` variances.
/// Their standalone family entries (`item_attr`, `item_travel`) are kept for
/// completeness — the density only consults them when no hierarchy applies,
/// which for this model never happens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub popularity: f64,
    pub user_pref: f64,
    pub item_attr: f64,
    pub user_travel: f64,
    pub item_travel: f64,
    pub item_season: f64,
    pub week_season: f64,
    pub weights: f64,
    /// Residual variance of item_attr rows around attr_weights · x.
    pub attr_resid: f64,
    /// Residual variance of item_travel rows around travel_weights · x.
    pub travel_resid: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            popularity: 1.0,
            user_pref: 1.0,
            item_attr: 1.0,
            user_travel: 0.1,
            item_travel: 0.1,
            item_season: 0.01,
            week_season: 0.01,
            weights: 1.0,
            attr_resid: 1.0,
            travel_resid: 1.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.popularity,
            self.user_pref,
            self.item_attr,
            self.user_travel,
            self.item_travel,
            self.item_season,
            self.week_season,
            self.weights,
            self.attr_resid,
            self.travel_resid,
        ];
        if all.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("all prior variances must be positive"));
        }
        Ok(())
    }
}

/// Every latent parameter of the model, one array per family.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentParams {
    /// Per-restaurant popularity intercept.
    pub popularity: Array1<f64>,
    /// n_users × pref_dim.
    pub user_pref: Array2<f64>,
    /// n_restaurants × pref_dim.
    pub item_attr: Array2<f64>,
    /// n_users × travel_dim.
    pub user_travel: Array2<f64>,
    /// n_restaurants × travel_dim.
    pub item_travel: Array2<f64>,
    /// n_restaurants × season_dim.
    pub item_season: Array2<f64>,
    /// n_weeks × season_dim.
    pub week_season: Array2<f64>,
    /// pref_dim × obs_dim, block-masked.
    pub attr_weights: Array2<f64>,
    /// travel_dim × obs_dim, block-masked.
    pub travel_weights: Array2<f64>,
}

impl LatentParams {
    pub fn zeros(dims: &ModelDims) -> Self {
        LatentParams {
            popularity: Array1::zeros(dims.n_restaurants),
            user_pref: Array2::zeros((dims.n_users, dims.pref_dim)),
            item_attr: Array2::zeros((dims.n_restaurants, dims.pref_dim)),
            user_travel: Array2::zeros((dims.n_users, dims.travel_dim)),
            item_travel: Array2::zeros((dims.n_restaurants, dims.travel_dim)),
            item_season: Array2::zeros((dims.n_restaurants, dims.season_dim)),
            week_season: Array2::zeros((dims.n_weeks, dims.season_dim)),
            attr_weights: Array2::zeros((dims.pref_dim, dims.obs_dim)),
            travel_weights: Array2::zeros((dims.travel_dim, dims.obs_dim)),
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            n_users: self.user_pref.nrows(),
            n_restaurants: self.popularity.len(),
            n_weeks: self.week_season.nrows(),
            pref_dim: self.user_pref.ncols(),
            travel_dim: self.user_travel.ncols(),
            season_dim: self.item_season.ncols(),
            obs_dim: self.attr_weights.ncols(),
        }
    }

    /// Distance sensitivity of user u toward restaurant i.
    pub fn travel_sensitivity(&self, u: usize, i: usize) -> f64 {
        self.user_travel.row(u).dot(&self.item_travel.row(i))
    }

    /// Consistency check against dims (shapes only; mask zeros are checked
    /// where the layout is known).
    pub fn check_dims(&self, dims: &ModelDims) -> Result<()> {
        let got = self.dims();
        if got != *dims {
            return Err(Error::invalid(format!(
                "parameter shapes {got:?} do not match model dims {dims:?}"
            )));
        }
        Ok(())
    }
}
