//! Replacement demand: predicted visits to a restaurant relocated to
//! another restaurant's site, all non-distance characteristics retained.

use std::collections::BTreeMap;

use crate::data::{ChoiceSet, Dataset, RestaurantRecord, VisitObs};
use crate::model::{FittedModel, Observables};
use crate::rng::stream;
use crate::{Error, Result};

/// Utility of restaurant `i_prime` relocated to another site: its own
/// utility with the distance term corrected from `d_ui_prime` (its own
/// distance from user `u`) to `d_ui` (the site's distance).
///
/// When `i_prime` stays put (`d_ui == d_ui_prime`) the correction is
/// exactly zero, so the value equals the ordinary utility bit for bit.
pub fn replacement_utility(
    model: &FittedModel,
    observables: &Observables,
    u: usize,
    week: usize,
    i_prime: usize,
    d_ui: f64,
    d_ui_prime: f64,
) -> Result<f64> {
    if !(d_ui > 0.0) {
        return Err(Error::invalid(format!("site distance {d_ui} must be positive")));
    }
    let base = model.utility(observables, u, i_prime, week, d_ui_prime)?;
    Ok(base - model.travel_sensitivity(u, i_prime) * (d_ui.ln() - d_ui_prime.ln()))
}

struct Session {
    user: usize,
    week: usize,
    /// Number of observed visit occasions sharing this (user, week).
    count: f64,
    /// exp(U - max) per choice-set position, and their sum.
    exps: Vec<f64>,
    max: f64,
    sum_exp: f64,
}

/// Observed visit contexts with cached utilities, ready for repeated
/// replacement-demand queries against one fitted model.
///
/// A session is one observed visit occasion; occasions sharing a (user,
/// week) context share one softmax and enter sums with multiplicity.
pub struct DemandContext<'a> {
    model: &'a FittedModel,
    observables: &'a Observables,
    choice_sets: &'a [ChoiceSet],
    n_restaurants: usize,
    sessions: Vec<Session>,
    n_occasions: f64,
}

impl<'a> DemandContext<'a> {
    /// Caches per-context utilities for the given visit window.
    pub fn new(
        model: &'a FittedModel,
        dataset: &'a Dataset,
        visits: &[VisitObs],
    ) -> Result<Self> {
        if visits.is_empty() {
            return Err(Error::invalid("no visit contexts to predict demand over"));
        }
        let mut counts: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (k, v) in visits.iter().enumerate() {
            if v.user >= dataset.choice_sets.len() {
                return Err(Error::inconsistent(format!(
                    "visit #{k}: user index {} out of range",
                    v.user
                )));
            }
            *counts.entry((v.user, v.week)).or_insert(0.0) += 1.0;
        }
        let sessions = counts
            .into_iter()
            .map(|((user, week), count)| {
                let set = &dataset.choice_sets[user];
                let mut exps = Vec::new();
                model.set_utilities_into(&dataset.observables, user, week, set, &mut exps);
                let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum_exp = 0.0;
                for v in exps.iter_mut() {
                    *v = (*v - max).exp();
                    sum_exp += *v;
                }
                Session { user, week, count, exps, max, sum_exp }
            })
            .collect();
        Ok(DemandContext {
            model,
            observables: &dataset.observables,
            choice_sets: &dataset.choice_sets,
            n_restaurants: dataset.n_restaurants(),
            sessions,
            n_occasions: visits.len() as f64,
        })
    }

    /// Total visit occasions in the window.
    pub fn n_occasions(&self) -> f64 {
        self.n_occasions
    }

    /// The model's predicted visit count for restaurant `i` over the
    /// window: its choice probability summed over all sessions that have
    /// it on the menu.
    pub fn predicted_demand(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        let mut total = 0.0;
        for s in &self.sessions {
            if let Some(pos) = self.choice_sets[s.user].position(i) {
                total += s.count * s.exps[pos] / s.sum_exp;
            }
        }
        Ok(total)
    }

    /// Predicted visits to restaurant `i_prime` relocated to `i`'s site.
    ///
    /// Per session, `i` leaves the choice set, `i_prime` enters at `i`'s
    /// distance with its other characteristics unchanged, and the visit
    /// probability is re-evaluated; the result sums those probabilities.
    /// Sessions without `i` on the menu contribute nothing — the site is
    /// out of the user's consideration range, so anything placed there is
    /// too. Replacing a restaurant with itself reproduces its predicted
    /// demand exactly.
    pub fn demand(&self, i_prime: usize, i: usize) -> Result<f64> {
        self.check_index(i_prime)?;
        self.check_index(i)?;
        let mut total = 0.0;
        for s in &self.sessions {
            let set = &self.choice_sets[s.user];
            let Some(pos_i) = set.position(i) else { continue };
            if i_prime == i {
                total += s.count * s.exps[pos_i] / s.sum_exp;
                continue;
            }
            let u_new = self.model.utility(
                self.observables,
                s.user,
                i_prime,
                s.week,
                set.distances[pos_i],
            )?;
            let e_old = set.position(i_prime).map_or(0.0, |p| s.exps[p]);
            // Alternatives other than the removed target and the mover's
            // old seat; clamped because subtracting two addends of the
            // cached sum can round a hair below zero.
            let others = (s.sum_exp - s.exps[pos_i] - e_old).max(0.0);
            total += s.count / (1.0 + others * (s.max - u_new).exp());
        }
        Ok(total)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n_restaurants {
            return Err(Error::invalid(format!(
                "restaurant index {i} out of range 0..{}",
                self.n_restaurants
            )));
        }
        Ok(())
    }
}

/// Demand at the target's site: the target itself against sampled
/// same-category and different-category stand-ins.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternativeComparison {
    pub target_demand: f64,
    /// Mean replacement demand over the same-category sample, and how many
    /// candidates were actually sampled.
    pub same_category_mean: f64,
    pub same_category_n: usize,
    pub different_category_mean: f64,
    pub different_category_n: usize,
    /// The per-stratum sample size asked for; a stratum smaller than this
    /// is used whole.
    pub requested: usize,
}

/// Compares the target's own demand with sampled alternatives at its site.
///
/// Same-category candidates share the target's major category;
/// different-category candidates share none of its category labels at all.
/// Each stratum is sampled uniformly without replacement; when a stratum
/// has fewer candidates than requested, all of them are used (the counts
/// in the result expose this).
pub fn alternative_comparison(
    ctx: &DemandContext,
    roster: &[RestaurantRecord],
    target: usize,
    requested: usize,
    seed: u64,
) -> Result<AlternativeComparison> {
    if requested == 0 {
        return Err(Error::invalid("requested sample size must be positive"));
    }
    if target >= roster.len() {
        return Err(Error::invalid(format!("restaurant index {target} out of range")));
    }
    let target_major = roster[target]
        .major_category(roster)
        .ok_or_else(|| {
            Error::data(format!("restaurant '{}' has no category labels", roster[target].id))
        })?
        .to_string();
    let target_cats = &roster[target].categories;

    let mut same: Vec<usize> = Vec::new();
    let mut diff: Vec<usize> = Vec::new();
    for (r, rec) in roster.iter().enumerate() {
        if r == target {
            continue;
        }
        if rec.major_category(roster) == Some(target_major.as_str()) {
            same.push(r);
        } else if !rec.categories.iter().any(|c| target_cats.contains(c)) {
            diff.push(r);
        }
    }
    if same.is_empty() {
        return Err(Error::data(format!(
            "no other restaurant shares major category '{target_major}'"
        )));
    }
    if diff.is_empty() {
        return Err(Error::data(format!(
            "every other restaurant shares a category with '{}'",
            roster[target].id
        )));
    }
    sample_in_place(&mut same, requested, seed, "cf-alt-same");
    sample_in_place(&mut diff, requested, seed, "cf-alt-diff");

    let target_demand = ctx.predicted_demand(target)?;
    let mean_over = |picked: &[usize]| -> Result<f64> {
        let mut sum = 0.0;
        for &r in picked {
            sum += ctx.demand(r, target)?;
        }
        Ok(sum / picked.len() as f64)
    };
    Ok(AlternativeComparison {
        target_demand,
        same_category_mean: mean_over(&same)?,
        same_category_n: same.len(),
        different_category_mean: mean_over(&diff)?,
        different_category_n: diff.len(),
        requested,
    })
}

/// Uniform sample without replacement via a partial shuffle; keeps
/// everything when `k` covers the whole pool.
fn sample_in_place(pool: &mut Vec<usize>, k: usize, seed: u64, label: &str) {
    use rand::Rng;
    if pool.len() <= k {
        return;
    }
    let mut rng = stream(seed, label, 0);
    for a in 0..k {
        let b = rng.gen_range(a..pool.len());
        pool.swap(a, b);
    }
    pool.truncate(k);
}
