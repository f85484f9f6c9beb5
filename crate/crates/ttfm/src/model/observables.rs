//! Restaurant observables: the x_i vector each restaurant exposes to the
//! hierarchical prior.
//!
//! Column order is fixed: the rating block (in-sample rating + missing flag,
//! overall rating + missing flag, both rating counts), then one indicator per
//! category, then the four price-range indicators. Missing ratings are
//! imputed with the sample mean and flagged, once, at construction time, so
//! downstream code never sees sentinel values. Continuous columns (ratings
//! and counts) are z-scored; indicator columns are left as 0/1.

use std::collections::BTreeSet;
use std::ops::Range;

use ndarray::{Array2, ArrayView1};

use crate::data::RestaurantRecord;
use crate::{Error, Result};

pub const N_RATING_COLS: usize = 6;
pub const N_PRICE_LEVELS: usize = 4;

/// Column spans of the observables matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsLayout {
    pub rating: Range<usize>,
    pub category: Range<usize>,
    pub price: Range<usize>,
    /// Category labels in column order within the category span.
    pub categories: Vec<String>,
}

impl ObsLayout {
    /// The fixed rating/category/price column layout for a category list —
    /// the one [`Observables::build`] produces.
    pub fn standard(categories: Vec<String>) -> Self {
        let n_cat = categories.len();
        ObsLayout {
            rating: 0..N_RATING_COLS,
            category: N_RATING_COLS..N_RATING_COLS + n_cat,
            price: N_RATING_COLS + n_cat..N_RATING_COLS + n_cat + N_PRICE_LEVELS,
            categories,
        }
    }

    pub fn n_cols(&self) -> usize {
        self.rating.end.max(self.category.end).max(self.price.end)
    }

    /// Human-readable column names, index-aligned with the matrix.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec![
            "rating_in_sample".to_string(),
            "rating_in_sample_missing".to_string(),
            "rating_overall".to_string(),
            "rating_overall_missing".to_string(),
            "n_ratings_in_sample".to_string(),
            "n_ratings_overall".to_string(),
        ];
        names.extend(self.categories.iter().map(|c| format!("cat:{c}")));
        names.extend((1..=N_PRICE_LEVELS).map(|p| format!("price:{p}")));
        names
    }
}

/// The n_restaurants × k_obs observables matrix plus its column layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Observables {
    pub x: Array2<f64>,
    pub layout: ObsLayout,
}

impl Observables {
    /// Builds the matrix from restaurant records.
    ///
    /// Categories are the sorted union of all labels present. The same
    /// roster must be used wherever the fitted model is evaluated, since
    /// z-scoring statistics are taken from it.
    pub fn build(restaurants: &[RestaurantRecord]) -> Result<Self> {
        if restaurants.is_empty() {
            return Err(Error::invalid("cannot build observables for an empty roster"));
        }
        let cats: BTreeSet<String> =
            restaurants.iter().flat_map(|r| r.categories.iter().cloned()).collect();
        let layout = ObsLayout::standard(cats.into_iter().collect());

        let n = restaurants.len();
        let mut x = Array2::<f64>::zeros((n, layout.n_cols()));

        let mean_of = |vals: Vec<f64>| {
            if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        let in_sample_mean =
            mean_of(restaurants.iter().filter_map(|r| r.rating_in_sample).collect());
        let overall_mean = mean_of(restaurants.iter().filter_map(|r| r.rating_overall).collect());

        for (i, r) in restaurants.iter().enumerate() {
            match r.rating_in_sample {
                Some(v) => x[(i, 0)] = v,
                None => {
                    x[(i, 0)] = in_sample_mean;
                    x[(i, 1)] = 1.0;
                }
            }
            match r.rating_overall {
                Some(v) => x[(i, 2)] = v,
                None => {
                    x[(i, 2)] = overall_mean;
                    x[(i, 3)] = 1.0;
                }
            }
            x[(i, 4)] = r.n_ratings_in_sample;
            x[(i, 5)] = r.n_ratings_overall;
            for c in &r.categories {
                let j = layout
                    .categories
                    .binary_search(c)
                    .expect("category collected from the same roster");
                x[(i, layout.category.start + j)] = 1.0;
            }
            if !(1..=N_PRICE_LEVELS as u8).contains(&r.price_range) {
                return Err(Error::data(format!(
                    "restaurant {}: price_range {} out of 1..={N_PRICE_LEVELS}",
                    r.id, r.price_range
                )));
            }
            x[(i, layout.price.start + (r.price_range as usize - 1))] = 1.0;
        }

        // Z-score the continuous rating block columns (0, 2, 4, 5). Flags and
        // indicators stay 0/1. Constant columns are centered only.
        for col in [0usize, 2, 4, 5] {
            let mut column = x.column_mut(col);
            let n_f = column.len() as f64;
            let mean = column.sum() / n_f;
            let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_f;
            let sd = var.sqrt();
            for v in column.iter_mut() {
                *v -= mean;
                if sd > 0.0 {
                    *v /= sd;
                }
            }
        }
        Ok(Observables { x, layout })
    }

    pub fn n_restaurants(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }
}
