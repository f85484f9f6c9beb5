//! Best-location and best-category maps: a few representative restaurants
//! swept over candidate sites.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use super::demand::DemandContext;
use crate::data::RestaurantRecord;
use crate::geo::encode_geohash;
use crate::math::mean_sd;
use crate::rng::stream;
use crate::{Error, Result};

/// A category's stand-in restaurant on the demand grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridRep {
    pub category: String,
    pub restaurant: usize,
}

/// A candidate site: one restaurant standing in for its geohash6 cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSite {
    pub geohash6: String,
    pub restaurant: usize,
}

/// Category representatives plus the categories that had no candidate in
/// the acceptance band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepSelection {
    /// Ascending by category name.
    pub reps: Vec<GridRep>,
    pub skipped_categories: Vec<String>,
}

/// Picks one representative per major category: a restaurant whose market
/// share sits within 0.1 standard deviations of the roster-wide mean
/// share, drawn uniformly among the qualifiers. Categories with no
/// qualifier are reported as skipped. Shares are predicted visit counts
/// over the context window divided by the number of visit occasions.
pub fn select_category_reps(
    ctx: &DemandContext,
    roster: &[RestaurantRecord],
    seed: u64,
) -> Result<RepSelection> {
    if roster.is_empty() {
        return Err(Error::invalid("empty roster"));
    }
    let mut shares = Vec::with_capacity(roster.len());
    for r in 0..roster.len() {
        shares.push(ctx.predicted_demand(r)? / ctx.n_occasions());
    }
    let (mean, sd) = mean_sd(&shares);

    let mut by_category: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (r, rec) in roster.iter().enumerate() {
        if let Some(cat) = rec.major_category(roster) {
            by_category.entry(cat).or_default().push(r);
        }
    }
    if by_category.is_empty() {
        return Err(Error::data("no restaurant has a category label"));
    }

    let mut rng = stream(seed, "cf-reps", 0);
    let mut reps = Vec::new();
    let mut skipped = Vec::new();
    for (cat, members) in by_category {
        let qualifying: Vec<usize> = members
            .into_iter()
            .filter(|&r| (shares[r] - mean).abs() <= 0.1 * sd)
            .collect();
        if qualifying.is_empty() {
            skipped.push(cat.to_string());
        } else {
            let pick = qualifying[rng.gen_range(0..qualifying.len())];
            reps.push(GridRep { category: cat.to_string(), restaurant: pick });
        }
    }
    if reps.is_empty() {
        return Err(Error::data(
            "no category has a representative within 0.1 SD of the mean market share",
        ));
    }
    Ok(RepSelection { reps, skipped_categories: skipped })
}

/// Picks one site per geohash6 cell: a restaurant drawn uniformly from the
/// cell's roster, ascending by cell code. Every cell listed comes from the
/// roster itself, so none is empty.
pub fn select_target_sites(roster: &[RestaurantRecord], seed: u64) -> Result<Vec<GridSite>> {
    if roster.is_empty() {
        return Err(Error::invalid("empty roster"));
    }
    let mut by_cell: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (r, rec) in roster.iter().enumerate() {
        by_cell.entry(encode_geohash(rec.point, 6)?.code().to_string()).or_default().push(r);
    }
    let mut rng = stream(seed, "cf-sites", 0);
    Ok(by_cell
        .into_iter()
        .map(|(geohash6, members)| GridSite {
            geohash6,
            restaurant: members[rng.gen_range(0..members.len())],
        })
        .collect())
}

/// Replacement demand for every representative at every site.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandGrid {
    pub reps: Vec<GridRep>,
    pub sites: Vec<GridSite>,
    /// demand[[rep, site]]: predicted visits to the rep relocated to the
    /// site restaurant's location.
    pub demand: Array2<f64>,
}

/// Evaluates the demand grid. Cells are independent queries against the
/// same context, computed in parallel; the output layout depends only on
/// the given rep and site order.
pub fn best_location_map(
    ctx: &DemandContext,
    reps: &[GridRep],
    sites: &[GridSite],
) -> Result<DemandGrid> {
    if reps.is_empty() || sites.is_empty() {
        return Err(Error::invalid("demand grid needs at least one rep and one site"));
    }
    let cells: Vec<f64> = (0..reps.len() * sites.len())
        .into_par_iter()
        .map(|k| ctx.demand(reps[k / sites.len()].restaurant, sites[k % sites.len()].restaurant))
        .collect::<Result<_>>()?;
    let demand = Array2::from_shape_vec((reps.len(), sites.len()), cells)
        .expect("cell count matches grid shape");
    Ok(DemandGrid { reps: reps.to_vec(), sites: sites.to_vec(), demand })
}

/// The winning category at one site within one rep group.
#[derive(Debug, Clone, PartialEq)]
pub struct BestCategoryRow {
    pub group: String,
    pub geohash6: String,
    pub category: String,
    pub demand: f64,
}

/// Per site and group, the category of the demand-argmax representative.
///
/// A group is a labeled subset of the grid's rep categories (price tiers,
/// cuisine families, or a single group holding everything). Ties go to the
/// alphabetically first category name.
pub fn best_category_map(
    grid: &DemandGrid,
    groups: &[(String, Vec<String>)],
) -> Result<Vec<BestCategoryRow>> {
    if groups.is_empty() {
        return Err(Error::invalid("no rep groups given"));
    }
    let mut rows = Vec::new();
    for (label, categories) in groups {
        let mut members: Vec<usize> = (0..grid.reps.len())
            .filter(|&k| categories.contains(&grid.reps[k].category))
            .collect();
        if members.is_empty() {
            return Err(Error::invalid(format!(
                "group '{label}' matches no category representative"
            )));
        }
        // Ascending category order makes "first strict maximum" implement
        // the alphabetical tie-break.
        members.sort_by(|&a, &b| grid.reps[a].category.cmp(&grid.reps[b].category));
        for (s, site) in grid.sites.iter().enumerate() {
            let mut best = members[0];
            for &k in &members[1..] {
                if grid.demand[[k, s]] > grid.demand[[best, s]] {
                    best = k;
                }
            }
            rows.push(BestCategoryRow {
                group: label.clone(),
                geohash6: site.geohash6.clone(),
                category: grid.reps[best].category.clone(),
                demand: grid.demand[[best, s]],
            });
        }
    }
    Ok(rows)
}
