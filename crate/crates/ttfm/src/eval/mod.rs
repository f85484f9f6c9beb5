//! Model evaluation: dataset splitting, precision@k, distance elasticities,
//! and predicted-versus-actual share tables.
//!
//! Everything here consumes a fitted parameter point (posterior means) and
//! the estimation dataset; nothing mutates either. Metrics that need choice
//! probabilities accept a [`FittedModel`] so the factorized model and the
//! restricted one are scored through the same code path.

mod summary;
mod variance;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{ChoiceSet, VisitObs};
use crate::model::{FittedModel, Observables};
use crate::rng::stream;
use crate::{Error, Result};

pub use summary::{elasticity_summary, Decomposition, ElasticitySummary, GroupRow, Grouping};
pub use variance::{
    mean_static_utilities, variance_decomposition, VarianceDecomposition, VarianceRow,
};

/// Default distance-band upper edges (miles): (0,1], (1,2], (2,5], (5,20].
pub const DEFAULT_DISTANCE_BANDS: [f64; 4] = [1.0, 2.0, 5.0, 20.0];

/// How a visit panel is partitioned into train/validation/test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// The default 70.6 / 5.0 / 24.4 percent split.
    pub fn with_seed(seed: u64) -> Self {
        SplitSpec { train: 0.706, validation: 0.050, test: 0.244, seed }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in
            [("train", self.train), ("validation", self.validation), ("test", self.test)]
        {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(format!("{name} fraction {f} outside [0, 1]")));
            }
        }
        let sum = self.train + self.validation + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// The three parts of a split, each in the input's visit order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub train: Vec<VisitObs>,
    pub validation: Vec<VisitObs>,
    pub test: Vec<VisitObs>,
    /// Users whose assignment had to be forced into training — a single
    /// visit, or no donor slot left to swap with — so their placement is
    /// deterministic rather than random. Ascending user indices.
    pub forced_to_train: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq)]
enum Part {
    Train,
    Val,
    Test,
}

/// Seeded partition of visits into train/validation/test by the spec's
/// fractions, with every user keeping at least one training visit.
///
/// Part sizes are `round(n * fraction)` for train and validation, remainder
/// test. A user left without a training visit gets one of their visits
/// promoted (chosen at random) by swapping labels with a training visit of
/// a user who has training visits to spare, so part sizes are preserved.
/// When no such donor exists — every user holds at most one training visit —
/// the visit is promoted without a swap and the user is reported in
/// `forced_to_train`, as are single-visit users, whose placement can never
/// be random.
pub fn split_dataset(visits: &[VisitObs], spec: &SplitSpec) -> Result<SplitOutcome> {
    spec.validate()?;
    if visits.is_empty() {
        return Err(Error::invalid("cannot split an empty visit panel"));
    }

    let n = visits.len();
    let n_train = (n as f64 * spec.train).round() as usize;
    // Rounding both fractions up can oversubscribe by one; validation absorbs it.
    let n_val = ((n as f64 * spec.validation).round() as usize).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(spec.seed, "split-shuffle", 0));
    let mut part = vec![Part::Test; n];
    for &v in &order[..n_train] {
        part[v] = Part::Train;
    }
    for &v in &order[n_train..n_train + n_val] {
        part[v] = Part::Val;
    }

    let n_users = visits.iter().map(|v| v.user + 1).max().unwrap_or(0);
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for (k, v) in visits.iter().enumerate() {
        by_user[v.user].push(k);
    }
    let mut train_count = vec![0usize; n_users];
    for (k, p) in part.iter().enumerate() {
        if *p == Part::Train {
            train_count[visits[k].user] += 1;
        }
    }

    let mut fix_rng = stream(spec.seed, "split-fix", 0);
    let mut forced = Vec::new();
    for u in 0..n_users {
        if by_user[u].is_empty() || train_count[u] > 0 {
            continue;
        }
        let promote = if by_user[u].len() == 1 {
            forced.push(u);
            by_user[u][0]
        } else {
            by_user[u][fix_rng.gen_range(0..by_user[u].len())]
        };
        let donors: Vec<usize> = (0..n)
            .filter(|&k| part[k] == Part::Train && train_count[visits[k].user] >= 2)
            .collect();
        match donors.as_slice() {
            [] => {
                // Nothing to swap with: promote in place and let the part
                // sizes drift rather than strand the user outside training.
                if forced.last() != Some(&u) {
                    forced.push(u);
                }
                part[promote] = Part::Train;
            }
            pool => {
                let donor = pool[fix_rng.gen_range(0..pool.len())];
                part.swap(promote, donor);
                train_count[visits[donor].user] -= 1;
            }
        }
        train_count[u] += 1;
    }

    let mut out = SplitOutcome {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        forced_to_train: forced,
    };
    for (k, v) in visits.iter().enumerate() {
        match part[k] {
            Part::Train => out.train.push(*v),
            Part::Val => out.validation.push(*v),
            Part::Test => out.test.push(*v),
        }
    }
    Ok(out)
}

fn check_visit(k: usize, v: &VisitObs, choice_sets: &[ChoiceSet]) -> Result<()> {
    let set = choice_sets.get(v.user).ok_or_else(|| {
        Error::inconsistent(format!("visit #{k}: user index {} has no choice set", v.user))
    })?;
    if v.alt >= set.len() || set.restaurants[v.alt] != v.restaurant {
        return Err(Error::inconsistent(format!(
            "visit #{k} (user index {}, restaurant index {}): chosen restaurant not in the user's choice set",
            v.user, v.restaurant
        )));
    }
    Ok(())
}

/// Share of visits whose chosen restaurant ranks in the model's top `k`
/// by predicted probability, ties at the boundary broken toward the lower
/// restaurant index (indices follow ascending restaurant id).
pub fn precision_at_k(
    model: &FittedModel,
    observables: &Observables,
    visits: &[VisitObs],
    choice_sets: &[ChoiceSet],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("precision@k needs k >= 1"));
    }
    if visits.is_empty() {
        return Err(Error::invalid("precision@k over zero visits is undefined"));
    }
    let mut hits = 0usize;
    for (n, v) in visits.iter().enumerate() {
        check_visit(n, v, choice_sets)?;
        let set = &choice_sets[v.user];
        let probs = model.probabilities(observables, v.user, v.week, set);
        let p_chosen = probs[v.alt];
        let ahead = probs
            .iter()
            .zip(&set.restaurants)
            .filter(|(p, r)| **p > p_chosen || (**p == p_chosen && **r < v.restaurant))
            .count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / visits.len() as f64)
}

fn elasticity_from_prob(sensitivity: f64, p: f64) -> f64 {
    -sensitivity * (1.0 - p)
}

/// Elasticity of the choice probability with respect to distance,
/// d ln p / d ln d, for restaurant `i` in user `u`'s choice set at `week`.
///
/// Under a softmax with a −s·ln(d) utility term this is −s·(1−p): a
/// dominant alternative (p near 1) is insensitive, a negligible one moves
/// one-for-one with its distance coefficient.
pub fn distance_elasticity(
    model: &FittedModel,
    observables: &Observables,
    u: usize,
    i: usize,
    week: usize,
    set: &ChoiceSet,
) -> Result<f64> {
    let pos = set
        .position(i)
        .ok_or_else(|| Error::invalid(format!("restaurant index {i} not in the choice set")))?;
    let probs = model.probabilities(observables, u, week, set);
    Ok(elasticity_from_prob(model.travel_sensitivity(u, i), probs[pos]))
}

/// One user–restaurant pair's elasticity, averaged over that pair's
/// observed visit contexts, with the trip count as aggregation weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticityRecord {
    pub user: usize,
    pub restaurant: usize,
    pub elasticity: f64,
    /// Number of observed trips behind the estimate; never negative.
    pub weight: f64,
}

/// Per-visit elasticities aggregated to one record per (user, restaurant)
/// pair, in ascending (user, restaurant) order.
///
/// The elasticity is evaluated at each visit's own context (its week, the
/// user's choice set) and averaged within the pair; the record's weight is
/// the pair's trip count, so a weighted mean over records equals the plain
/// mean over visits.
pub fn elasticity_records(
    model: &FittedModel,
    observables: &Observables,
    visits: &[VisitObs],
    choice_sets: &[ChoiceSet],
) -> Result<Vec<ElasticityRecord>> {
    if visits.is_empty() {
        return Err(Error::invalid("no visits to evaluate elasticities at"));
    }
    for (k, v) in visits.iter().enumerate() {
        check_visit(k, v, choice_sets)?;
    }
    // One softmax per (user, week) context, not per visit.
    let mut order: Vec<usize> = (0..visits.len()).collect();
    order.sort_by_key(|&k| (visits[k].user, visits[k].week));

    let mut acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    let mut context: Option<(usize, usize)> = None;
    let mut probs = Vec::new();
    for &k in &order {
        let v = &visits[k];
        if context != Some((v.user, v.week)) {
            probs = model.probabilities(observables, v.user, v.week, &choice_sets[v.user]);
            context = Some((v.user, v.week));
        }
        let e = elasticity_from_prob(model.travel_sensitivity(v.user, v.restaurant), probs[v.alt]);
        let slot = acc.entry((v.user, v.restaurant)).or_insert((0.0, 0));
        slot.0 += e;
        slot.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|((user, restaurant), (sum, n))| ElasticityRecord {
            user,
            restaurant,
            elasticity: sum / n as f64,
            weight: n as f64,
        })
        .collect())
}

/// Actual versus predicted share of visits per distance band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceBandShare {
    /// Band is (lo, hi] miles.
    pub lo: f64,
    pub hi: f64,
    /// Fraction of visits whose chosen restaurant lies in the band.
    pub actual: f64,
    /// Mean over visits of the model's probability mass on the band.
    pub predicted: f64,
}

/// Validates distance-band upper edges: finite, strictly ascending,
/// positive, and reaching the 20-mile choice-set radius.
pub(crate) fn check_band_edges(band_edges: &[f64]) -> Result<()> {
    if band_edges.is_empty() {
        return Err(Error::invalid("no distance bands given"));
    }
    if band_edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::invalid("distance band edges must be finite"));
    }
    if !band_edges.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("distance band edges must be strictly ascending"));
    }
    if band_edges[0] <= 0.0 {
        return Err(Error::invalid("distance band edges must be positive"));
    }
    if *band_edges.last().unwrap() < 20.0 {
        return Err(Error::invalid("distance bands must cover (0, 20] miles"));
    }
    Ok(())
}

/// Visit shares by distance band, actual against the model's prediction.
///
/// `band_edges` are upper edges of half-open bands starting at zero:
/// `[1, 2, 5, 20]` means (0,1], (1,2], (2,5], (5,20]. The edges must be
/// strictly ascending and reach 20 miles, the choice-set radius, so that
/// every alternative falls in exactly one band and both columns sum to one.
pub fn share_by_distance(
    model: &FittedModel,
    observables: &Observables,
    visits: &[VisitObs],
    choice_sets: &[ChoiceSet],
    band_edges: &[f64],
) -> Result<Vec<DistanceBandShare>> {
    check_band_edges(band_edges)?;
    if visits.is_empty() {
        return Err(Error::invalid("no visits to tabulate"));
    }

    let band_of = |d: f64| band_edges.partition_point(|&e| e < d);
    let n = visits.len() as f64;
    let mut actual = vec![0.0; band_edges.len()];
    let mut predicted = vec![0.0; band_edges.len()];
    for (k, v) in visits.iter().enumerate() {
        check_visit(k, v, choice_sets)?;
        let set = &choice_sets[v.user];
        actual[band_of(set.distances[v.alt])] += 1.0 / n;
        let probs = model.probabilities(observables, v.user, v.week, set);
        for (pos, p) in probs.iter().enumerate() {
            predicted[band_of(set.distances[pos])] += p / n;
        }
    }
    Ok((0..band_edges.len())
        .map(|b| DistanceBandShare {
            lo: if b == 0 { 0.0 } else { band_edges[b - 1] },
            hi: band_edges[b],
            actual: actual[b],
            predicted: predicted[b],
        })
        .collect())
}

/// Which training-frequency ranking the decile table groups by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecileAxis {
    /// Users ranked by their training visit counts. Choice probabilities
    /// condition on the visitor, so probability mass cannot move across
    /// users and the predicted column equals the actual one by
    /// construction; the table reports how evaluation visits spread over
    /// user deciles.
    UserFrequency,
    /// Restaurants ranked by their training visit counts; predicted share
    /// is the model's probability mass on each decile's restaurants.
    RestaurantFrequency,
}

/// One decile's share of evaluation visits, actual and predicted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecileShare {
    /// 1 = least training visits, 10 = most.
    pub decile: usize,
    /// Users or restaurants assigned to the decile.
    pub members: usize,
    pub actual: f64,
    pub predicted: f64,
}

/// Visit shares by training-frequency decile.
///
/// Deciles are formed on the training panel only: members are ranked by
/// ascending training visit count, ties broken by ascending index (= id),
/// and split into ten contiguous groups of near-equal size. Shares are
/// tabulated on `eval_visits`.
pub fn share_by_decile(
    model: &FittedModel,
    observables: &Observables,
    train_visits: &[VisitObs],
    eval_visits: &[VisitObs],
    choice_sets: &[ChoiceSet],
    n_restaurants: usize,
    axis: DecileAxis,
) -> Result<Vec<DecileShare>> {
    if eval_visits.is_empty() {
        return Err(Error::invalid("no visits to tabulate"));
    }
    let n_members = match axis {
        DecileAxis::UserFrequency => choice_sets.len(),
        DecileAxis::RestaurantFrequency => n_restaurants,
    };
    if n_members == 0 {
        return Err(Error::invalid("no members to rank into deciles"));
    }

    let mut freq = vec![0usize; n_members];
    for (k, v) in train_visits.iter().enumerate() {
        check_visit(k, v, choice_sets)?;
        let m = match axis {
            DecileAxis::UserFrequency => v.user,
            DecileAxis::RestaurantFrequency => v.restaurant,
        };
        if m >= n_members {
            return Err(Error::inconsistent(format!(
                "training visit #{k} references member index {m} of {n_members}"
            )));
        }
        freq[m] += 1;
    }

    let mut order: Vec<usize> = (0..n_members).collect();
    order.sort_by_key(|&m| (freq[m], m));
    let mut decile_of = vec![0usize; n_members];
    let mut members = vec![0usize; 10];
    for g in 0..10 {
        for rank in g * n_members / 10..(g + 1) * n_members / 10 {
            decile_of[order[rank]] = g;
            members[g] += 1;
        }
    }

    let n = eval_visits.len() as f64;
    let mut actual = vec![0.0; 10];
    let mut predicted = vec![0.0; 10];
    for (k, v) in eval_visits.iter().enumerate() {
        check_visit(k, v, choice_sets)?;
        let set = &choice_sets[v.user];
        match axis {
            DecileAxis::UserFrequency => {
                actual[decile_of[v.user]] += 1.0 / n;
                predicted[decile_of[v.user]] += 1.0 / n;
            }
            DecileAxis::RestaurantFrequency => {
                if v.restaurant >= n_members {
                    return Err(Error::inconsistent(format!(
                        "visit #{k} references restaurant index {} of {n_members}",
                        v.restaurant
                    )));
                }
                actual[decile_of[v.restaurant]] += 1.0 / n;
                let probs = model.probabilities(observables, v.user, v.week, set);
                for (pos, p) in probs.iter().enumerate() {
                    let r = set.restaurants[pos];
                    if r >= n_members {
                        return Err(Error::inconsistent(format!(
                            "choice set for user {} references restaurant index {r} of {n_members}",
                            v.user
                        )));
                    }
                    predicted[decile_of[r]] += p / n;
                }
            }
        }
    }
    Ok((0..10)
        .map(|g| DecileShare {
            decile: g + 1,
            members: members[g],
            actual: actual[g],
            predicted: predicted[g],
        })
        .collect())
}

#[cfg(test)]
mod tests;
