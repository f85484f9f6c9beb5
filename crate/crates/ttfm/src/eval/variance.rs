//! Variance decomposition of mean utility onto the restaurant observables.
//!
//! The quantity decomposed is each restaurant's time- and distance-free
//! mean utility: the popularity intercept plus the average user's taste
//! match. R² is ordinary least squares with an intercept, computed per
//! observable block alone and incrementally against all other blocks.

use ndarray::{Array1, Axis};

use crate::model::{LatentParams, Observables};
use crate::{Error, Result};

/// Per-restaurant mean utility with distance and seasonal terms excluded:
/// popularity plus the population-average preference applied to the
/// restaurant's latent attributes.
pub fn mean_static_utilities(params: &LatentParams) -> Array1<f64> {
    let k = params.user_pref.ncols();
    let mean_pref =
        params.user_pref.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(k));
    &params.popularity + &params.item_attr.dot(&mean_pref)
}

/// One observable block's explanatory power.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub group: String,
    /// R² of the block's columns alone.
    pub r2_alone: f64,
    /// R² lost when the block is removed from the full regression.
    pub r2_incremental: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecomposition {
    /// R² of all observable columns together.
    pub combined_r2: f64,
    pub rows: Vec<VarianceRow>,
    /// Column names dropped as collinear from the full regression; the
    /// caller should surface these.
    pub dropped: Vec<String>,
}

/// Regresses `mean_utilities` on the observable blocks (rating, category,
/// price) and reports each block's R² alone and incremental to the rest.
///
/// Collinear columns — constants, or linear combinations of columns kept
/// earlier — are dropped, which leaves every R² unchanged and well defined;
/// the drops from the full regression are reported by column name.
pub fn variance_decomposition(
    mean_utilities: &Array1<f64>,
    observables: &Observables,
) -> Result<VarianceDecomposition> {
    let n = observables.x.nrows();
    if mean_utilities.len() != n {
        return Err(Error::invalid(format!(
            "{} mean utilities for {} restaurants",
            mean_utilities.len(),
            n
        )));
    }
    let y_mean = mean_utilities.mean().unwrap_or(0.0);
    let y: Array1<f64> = mean_utilities - y_mean;
    let sst = y.dot(&y);
    if sst <= 0.0 {
        return Err(Error::invalid(
            "mean utilities are constant across restaurants; nothing to decompose",
        ));
    }

    let layout = &observables.layout;
    let blocks: Vec<(&str, Vec<usize>)> = [
        ("rating", &layout.rating),
        ("category", &layout.category),
        ("price", &layout.price),
    ]
    .into_iter()
    .filter(|(_, r)| !r.is_empty())
    .map(|(name, r)| (name, r.clone().collect()))
    .collect();

    let all_cols: Vec<usize> = blocks.iter().flat_map(|(_, c)| c.iter().copied()).collect();
    let (combined_r2, dropped_idx) = r_squared(&y, sst, observables, &all_cols);
    let names = layout.column_names();
    let dropped = dropped_idx
        .iter()
        .map(|&c| names.get(c).cloned().unwrap_or_else(|| format!("col{c}")))
        .collect();

    let mut rows = Vec::with_capacity(blocks.len());
    for (name, cols) in &blocks {
        let (alone, _) = r_squared(&y, sst, observables, cols);
        let without: Vec<usize> =
            all_cols.iter().copied().filter(|c| !cols.contains(c)).collect();
        let (rest, _) = if without.is_empty() {
            (0.0, Vec::new())
        } else {
            r_squared(&y, sst, observables, &without)
        };
        rows.push(VarianceRow {
            group: name.to_string(),
            r2_alone: alone,
            r2_incremental: combined_r2 - rest,
        });
    }
    Ok(VarianceDecomposition { combined_r2, rows, dropped })
}

/// R² of `y` (already centered, sum of squares `sst`) on the given design
/// columns plus an intercept, with collinear columns dropped.
///
/// Modified Gram–Schmidt with a second orthogonalization pass; a column
/// whose residual against the kept basis falls below 1e-9 of its centered
/// norm is treated as dependent and dropped.
fn r_squared(
    y: &Array1<f64>,
    sst: f64,
    observables: &Observables,
    cols: &[usize],
) -> (f64, Vec<usize>) {
    let mut basis: Vec<Array1<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for &c in cols {
        let col = observables.x.column(c);
        let mut v: Array1<f64> = &col - col.mean().unwrap_or(0.0);
        let scale = v.dot(&v).sqrt();
        if scale <= 0.0 {
            dropped.push(c);
            continue;
        }
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.scaled_add(-proj, q);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm <= 1e-9 * scale {
            dropped.push(c);
            continue;
        }
        basis.push(v / norm);
    }
    let explained: f64 = basis.iter().map(|q| q.dot(y).powi(2)).sum();
    ((explained / sst).clamp(0.0, 1.0), dropped)
}
