//! Flat indexing of every latent scalar the posterior tracks.
//!
//! The variational posterior and all gradient buffers are plain `Vec<f64>`s;
//! this module fixes the order once: popularity, user preferences, item
//! attributes, user travel, item travel, item seasonality, week seasonality,
//! then the *free* entries of the two observable-weight matrices in
//! row-major order. Masked weight entries are structural zeros — they never
//! appear in the flat vector, so nothing downstream can accidentally give
//! them mass or gradient.

use std::ops::Range;

use ndarray::Array2;

use crate::model::{free_entries, LatentParams, ModelDims, ObsLayout};
use crate::Result;

/// Which latent family a flat index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Popularity,
    UserPref,
    ItemAttr,
    UserTravel,
    ItemTravel,
    ItemSeason,
    WeekSeason,
    AttrWeights,
    TravelWeights,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Popularity => "popularity",
            Family::UserPref => "user_pref",
            Family::ItemAttr => "item_attr",
            Family::UserTravel => "user_travel",
            Family::ItemTravel => "item_travel",
            Family::ItemSeason => "item_season",
            Family::WeekSeason => "week_season",
            Family::AttrWeights => "attr_weights",
            Family::TravelWeights => "travel_weights",
        }
    }
}

const FAMILIES: [Family; 9] = [
    Family::Popularity,
    Family::UserPref,
    Family::ItemAttr,
    Family::UserTravel,
    Family::ItemTravel,
    Family::ItemSeason,
    Family::WeekSeason,
    Family::AttrWeights,
    Family::TravelWeights,
];

/// Maps between `LatentParams` and the flat latent vector.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    dims: ModelDims,
    /// Unmasked (row, col) positions of attr_weights, row-major.
    attr_free: Vec<(usize, usize)>,
    /// Unmasked (row, col) positions of travel_weights, row-major.
    travel_free: Vec<(usize, usize)>,
    /// Start offset per family, index-aligned with `FAMILIES`; a tenth
    /// entry holds the total.
    offsets: [usize; 10],
}

impl ParamLayout {
    pub fn new(dims: &ModelDims, obs: &ObsLayout) -> Result<Self> {
        dims.validate()?;
        let attr_free = free_entries(dims.pref_dim, obs)?;
        let travel_free = free_entries(dims.travel_dim, obs)?;
        let sizes = [
            dims.n_restaurants,
            dims.n_users * dims.pref_dim,
            dims.n_restaurants * dims.pref_dim,
            dims.n_users * dims.travel_dim,
            dims.n_restaurants * dims.travel_dim,
            dims.n_restaurants * dims.season_dim,
            dims.n_weeks * dims.season_dim,
            attr_free.len(),
            travel_free.len(),
        ];
        let mut offsets = [0usize; 10];
        for (k, sz) in sizes.iter().enumerate() {
            offsets[k + 1] = offsets[k] + sz;
        }
        Ok(ParamLayout { dims: dims.clone(), attr_free, travel_free, offsets })
    }

    pub fn n_latents(&self) -> usize {
        self.offsets[9]
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn span(&self, family: Family) -> Range<usize> {
        let k = FAMILIES.iter().position(|f| *f == family).expect("known family");
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn family_of(&self, idx: usize) -> Family {
        assert!(idx < self.n_latents(), "latent index {idx} out of range");
        let k = self.offsets[1..].partition_point(|&end| end <= idx);
        FAMILIES[k]
    }

    pub fn attr_free(&self) -> &[(usize, usize)] {
        &self.attr_free
    }

    pub fn travel_free(&self) -> &[(usize, usize)] {
        &self.travel_free
    }

    // Per-entity index helpers. All return positions in the flat vector.

    #[inline]
    pub fn popularity(&self, i: usize) -> usize {
        self.offsets[0] + i
    }

    #[inline]
    pub fn user_pref(&self, u: usize) -> Range<usize> {
        let s = self.offsets[1] + u * self.dims.pref_dim;
        s..s + self.dims.pref_dim
    }

    #[inline]
    pub fn item_attr(&self, i: usize) -> Range<usize> {
        let s = self.offsets[2] + i * self.dims.pref_dim;
        s..s + self.dims.pref_dim
    }

    #[inline]
    pub fn user_travel(&self, u: usize) -> Range<usize> {
        let s = self.offsets[3] + u * self.dims.travel_dim;
        s..s + self.dims.travel_dim
    }

    #[inline]
    pub fn item_travel(&self, i: usize) -> Range<usize> {
        let s = self.offsets[4] + i * self.dims.travel_dim;
        s..s + self.dims.travel_dim
    }

    #[inline]
    pub fn item_season(&self, i: usize) -> Range<usize> {
        let s = self.offsets[5] + i * self.dims.season_dim;
        s..s + self.dims.season_dim
    }

    #[inline]
    pub fn week_season(&self, w: usize) -> Range<usize> {
        let s = self.offsets[6] + w * self.dims.season_dim;
        s..s + self.dims.season_dim
    }

    /// Flat position of the t-th free attr_weights entry.
    #[inline]
    pub fn attr_weight(&self, t: usize) -> usize {
        self.offsets[7] + t
    }

    /// Flat position of the t-th free travel_weights entry.
    #[inline]
    pub fn travel_weight(&self, t: usize) -> usize {
        self.offsets[8] + t
    }

    /// Expand a flat vector into structured parameters. Masked weight
    /// entries come out exactly zero.
    pub fn unpack(&self, z: &[f64]) -> LatentParams {
        assert_eq!(z.len(), self.n_latents(), "flat vector length mismatch");
        let d = &self.dims;
        let mut p = LatentParams::zeros(d);
        p.popularity = ndarray::Array1::from_vec(z[self.span(Family::Popularity)].to_vec());
        let grab2 = |family: Family, rows: usize, cols: usize| {
            Array2::from_shape_vec((rows, cols), z[self.span(family)].to_vec())
                .expect("span size matches shape")
        };
        p.user_pref = grab2(Family::UserPref, d.n_users, d.pref_dim);
        p.item_attr = grab2(Family::ItemAttr, d.n_restaurants, d.pref_dim);
        p.user_travel = grab2(Family::UserTravel, d.n_users, d.travel_dim);
        p.item_travel = grab2(Family::ItemTravel, d.n_restaurants, d.travel_dim);
        p.item_season = grab2(Family::ItemSeason, d.n_restaurants, d.season_dim);
        p.week_season = grab2(Family::WeekSeason, d.n_weeks, d.season_dim);
        for (t, &(r, c)) in self.attr_free.iter().enumerate() {
            p.attr_weights[(r, c)] = z[self.attr_weight(t)];
        }
        for (t, &(r, c)) in self.travel_free.iter().enumerate() {
            p.travel_weights[(r, c)] = z[self.travel_weight(t)];
        }
        p
    }

    /// Flatten structured parameters; masked weight entries are dropped.
    pub fn pack(&self, p: &LatentParams) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.n_latents());
        z.extend(p.popularity.iter());
        for arr in [&p.user_pref, &p.item_attr, &p.user_travel, &p.item_travel, &p.item_season,
            &p.week_season]
        {
            z.extend(arr.iter());
        }
        z.extend(self.attr_free.iter().map(|&(r, c)| p.attr_weights[(r, c)]));
        z.extend(self.travel_free.iter().map(|&(r, c)| p.travel_weights[(r, c)]));
        debug_assert_eq!(z.len(), self.n_latents());
        z
    }
}
