use approx::{assert_abs_diff_eq, assert_relative_eq};
use chrono::NaiveDate;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::data::test_support::restaurant;
use crate::data::{ChoiceSet, RestaurantRecord, VisitObs};
use crate::geo::encode_geohash;
use crate::model::{FittedModel, LatentParams, MnlParams, ModelDims, Observables, ObsLayout};
use crate::rng::{stream, Prng};

fn date0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 4, 3).unwrap()
}

fn visit(user: usize, restaurant: usize, alt: usize, week: usize) -> VisitObs {
    VisitObs { user, restaurant, alt, week, date: date0() }
}

fn dims(n_users: usize, n_restaurants: usize, n_weeks: usize) -> ModelDims {
    ModelDims {
        n_users,
        n_restaurants,
        n_weeks,
        pref_dim: 4,
        travel_dim: 4,
        season_dim: 2,
        obs_dim: 1,
    }
}

fn plain_roster(n: usize) -> Vec<RestaurantRecord> {
    (0..n)
        .map(|i| {
            restaurant(
                &format!("r{i:02}"),
                40.0 + 0.01 * i as f64,
                -100.0,
                (i % 4) as u8 + 1,
                Some(3.0 + 0.2 * i as f64),
                Some(4.0 - 0.1 * i as f64),
                &["lunch"],
            )
        })
        .collect()
}

fn obs_for(n: usize) -> Observables {
    Observables::build(&plain_roster(n)).unwrap()
}

fn uniform_set(n: usize) -> ChoiceSet {
    ChoiceSet::new((0..n).collect(), (0..n).map(|i| 1.0 + i as f64).collect()).unwrap()
}

fn fill<'a>(values: impl Iterator<Item = &'a mut f64>, rng: &mut Prng, scale: f64) {
    for v in values {
        *v = scale * rng.sample::<f64, _>(StandardNormal);
    }
}

fn random_params(d: &ModelDims, seed: u64, scale: f64) -> LatentParams {
    let mut rng = stream(seed, "eval-test-params", 0);
    let mut p = LatentParams::zeros(d);
    fill(p.popularity.iter_mut(), &mut rng, scale);
    fill(p.user_pref.iter_mut(), &mut rng, scale);
    fill(p.item_attr.iter_mut(), &mut rng, scale);
    fill(p.user_travel.iter_mut(), &mut rng, scale);
    fill(p.item_travel.iter_mut(), &mut rng, scale);
    fill(p.item_season.iter_mut(), &mut rng, scale);
    fill(p.week_season.iter_mut(), &mut rng, scale);
    p
}

fn sorted_keys(vs: &[VisitObs]) -> Vec<(usize, usize, usize, usize)> {
    let mut k: Vec<_> = vs.iter().map(|v| (v.user, v.restaurant, v.alt, v.week)).collect();
    k.sort();
    k
}

// ---------------------------------------------------------------- splits

fn thousand_visits() -> Vec<VisitObs> {
    let mut vs = Vec::new();
    for u in 0..100 {
        for w in 0..10 {
            vs.push(visit(u, w, w, w));
        }
    }
    vs
}

#[test]
fn split_matches_the_stated_fractions() {
    let visits = thousand_visits();
    let out = split_dataset(&visits, &SplitSpec::with_seed(11)).unwrap();
    assert_eq!(out.train.len(), 706);
    assert_eq!(out.validation.len(), 50);
    assert_eq!(out.test.len(), 244);
    assert!(out.forced_to_train.is_empty());

    let mut train_users = vec![0usize; 100];
    for v in &out.train {
        train_users[v.user] += 1;
    }
    assert!(train_users.iter().all(|&c| c >= 1), "a user lost all training visits");

    let mut union = out.train.clone();
    union.extend_from_slice(&out.validation);
    union.extend_from_slice(&out.test);
    assert_eq!(sorted_keys(&union), sorted_keys(&visits));
}

#[test]
fn split_is_seed_deterministic() {
    let visits = thousand_visits();
    let a = split_dataset(&visits, &SplitSpec::with_seed(4)).unwrap();
    let b = split_dataset(&visits, &SplitSpec::with_seed(4)).unwrap();
    assert_eq!(a, b);
    let c = split_dataset(&visits, &SplitSpec::with_seed(5)).unwrap();
    assert_ne!(a.train, c.train);
}

#[test]
fn single_visit_users_are_forced_into_training() {
    let visits = vec![visit(0, 0, 0, 0), visit(1, 0, 0, 0), visit(2, 0, 0, 0)];
    let out = split_dataset(&visits, &SplitSpec::with_seed(3)).unwrap();
    assert_eq!(out.train.len(), 3);
    assert!(out.validation.is_empty() && out.test.is_empty());
    assert_eq!(out.forced_to_train.len(), 1);
}

#[test]
fn constraint_fixes_swap_rather_than_resize() {
    let mut visits = Vec::new();
    for w in 0..50 {
        visits.push(visit(0, w % 5, w % 5, w));
    }
    visits.push(visit(1, 0, 0, 0));
    visits.push(visit(1, 1, 1, 1));
    let spec = |seed| SplitSpec { train: 0.5, validation: 0.1, test: 0.4, seed };
    for seed in 0..40 {
        let out = split_dataset(&visits, &spec(seed)).unwrap();
        assert_eq!(
            (out.train.len(), out.validation.len(), out.test.len()),
            (26, 5, 21),
            "seed {seed}"
        );
        assert!(out.forced_to_train.is_empty(), "seed {seed}");
        assert!(out.train.iter().any(|v| v.user == 1), "seed {seed}: user 1 lost training");
        let mut union = out.train.clone();
        union.extend_from_slice(&out.validation);
        union.extend_from_slice(&out.test);
        assert_eq!(union.len(), visits.len(), "seed {seed}");
    }
}

#[test]
fn split_rejects_bad_inputs() {
    let visits = vec![visit(0, 0, 0, 0)];
    let bad = SplitSpec { train: 0.5, validation: 0.5, test: 0.1, seed: 0 };
    assert!(split_dataset(&visits, &bad).is_err());
    assert!(split_dataset(&[], &SplitSpec::with_seed(0)).is_err());
}

// ----------------------------------------------------------- precision@k

#[test]
fn precision_ranks_ties_by_restaurant_index() {
    let params = LatentParams::zeros(&dims(1, 4, 2));
    let model = FittedModel::Ttfm(params);
    let obs = obs_for(4);
    let sets = vec![uniform_set(4)];

    // All four alternatives tie; the top of the ranking is index order.
    let mid = [visit(0, 2, 2, 0)];
    assert_eq!(precision_at_k(&model, &obs, &mid, &sets, 1).unwrap(), 0.0);
    assert_eq!(precision_at_k(&model, &obs, &mid, &sets, 3).unwrap(), 1.0);
    assert_eq!(precision_at_k(&model, &obs, &mid, &sets, 4).unwrap(), 1.0);

    let first = [visit(0, 0, 0, 0)];
    assert_eq!(precision_at_k(&model, &obs, &first, &sets, 1).unwrap(), 1.0);

    assert!(precision_at_k(&model, &obs, &mid, &sets, 0).is_err());
    assert!(precision_at_k(&model, &obs, &[], &sets, 1).is_err());
}

#[test]
fn precision_is_one_for_a_dominant_alternative() {
    let mut params = LatentParams::zeros(&dims(1, 4, 2));
    params.popularity[2] = 10.0;
    let model = FittedModel::Ttfm(params);
    let obs = obs_for(4);
    let sets = vec![uniform_set(4)];
    let visits = [visit(0, 2, 2, 0), visit(0, 2, 2, 1)];
    assert_eq!(precision_at_k(&model, &obs, &visits, &sets, 1).unwrap(), 1.0);

    // Same property through the restricted model: a strong distance
    // coefficient makes the nearest alternative dominant.
    let obs = obs_for(4);
    let mnl = FittedModel::Mnl(MnlParams {
        weights: Array1::zeros(obs.n_cols()),
        dist_coef: 5.0,
    });
    let nearest = [visit(0, 0, 0, 0)];
    assert_eq!(precision_at_k(&mnl, &obs, &nearest, &sets, 1).unwrap(), 1.0);
}

#[test]
fn precision_is_monotone_in_k() {
    let mut params = LatentParams::zeros(&dims(1, 6, 3));
    let mut rng = stream(41, "eval-test-popularity", 0);
    for v in params.popularity.iter_mut() {
        *v = rng.sample::<f64, _>(StandardNormal);
    }
    let model = FittedModel::Ttfm(params);
    let obs = obs_for(6);
    let sets = vec![uniform_set(6)];
    let visits: Vec<VisitObs> = (0..6).map(|i| visit(0, i, i, i % 3)).collect();

    let mut last = 0.0;
    for k in 1..=6 {
        let p = precision_at_k(&model, &obs, &visits, &sets, k).unwrap();
        assert!(p >= last, "precision@{k} = {p} dropped below {last}");
        last = p;
    }
    assert_eq!(last, 1.0);
}

#[test]
fn uniform_choices_score_half_at_k1_with_two_alternatives() {
    // Under a flat model every ranking tie resolves to index 0, so
    // precision@1 is the empirical share of visits that picked it: a
    // binomial mean around one half (sd ~ 0.005 at this count).
    let params = LatentParams::zeros(&dims(1, 2, 1));
    let model = FittedModel::Ttfm(params);
    let obs = obs_for(2);
    let sets = vec![ChoiceSet::new(vec![0, 1], vec![1.0, 1.0]).unwrap()];
    let mut rng = stream(29, "eval-test-uniform", 0);
    let visits: Vec<VisitObs> = (0..10_000)
        .map(|_| {
            let c = rng.gen_range(0..2usize);
            visit(0, c, c, 0)
        })
        .collect();
    let p1 = precision_at_k(&model, &obs, &visits, &sets, 1).unwrap();
    assert!((p1 - 0.5).abs() < 0.02, "precision@1 = {p1}");
}

// ----------------------------------------------------------- elasticity

#[test]
fn plugin_elasticity_values() {
    let mut params = LatentParams::zeros(&dims(1, 2, 1));
    params.user_travel[[0, 0]] = 1.0;
    params.user_travel[[0, 1]] = 1.0;
    params.item_travel[[0, 0]] = 1.0;
    params.item_travel[[0, 1]] = 1.0;
    let obs = obs_for(2);
    // Both distances ln(1) = 0: utilities tie, p = 1/2, sensitivity 2.
    let set = ChoiceSet::new(vec![0, 1], vec![1.0, 1.0]).unwrap();
    let model = FittedModel::Ttfm(params.clone());
    assert_eq!(distance_elasticity(&model, &obs, 0, 0, 0, &set).unwrap(), -1.0);

    // A dominant alternative is insensitive to its own distance.
    params.popularity[0] = 40.0;
    let model = FittedModel::Ttfm(params);
    let e = distance_elasticity(&model, &obs, 0, 0, 0, &set).unwrap();
    assert!(e.abs() < 1e-15, "elasticity {e} for p ~ 1");

    assert!(distance_elasticity(&model, &obs, 0, 7, 0, &set).is_err());
}

fn fd_log_prob(
    model: &FittedModel,
    obs: &Observables,
    u: usize,
    pos: usize,
    week: usize,
    set: &ChoiceSet,
    h: f64,
) -> f64 {
    let bump = |s: f64| {
        let mut d = set.distances.clone();
        d[pos] *= s.exp();
        let pset = ChoiceSet::new(set.restaurants.clone(), d).unwrap();
        model.probabilities(obs, u, week, &pset)[pos].ln()
    };
    (bump(h) - bump(-h)) / (2.0 * h)
}

#[test]
fn elasticity_matches_log_probability_finite_differences() {
    let d = dims(2, 6, 3);
    let params = random_params(&d, 57, 0.5);
    let obs = obs_for(6);
    let sets = vec![
        ChoiceSet::new((0..6).collect(), vec![0.5, 0.9, 1.7, 3.3, 6.4, 8.0]).unwrap(),
        ChoiceSet::new((0..6).collect(), vec![0.6, 1.1, 2.2, 4.0, 5.5, 7.7]).unwrap(),
    ];
    let model = FittedModel::Ttfm(params);
    let mut rng = stream(58, "eval-test-fd", 0);
    let h = 1e-5;
    for _ in 0..50 {
        let u = rng.gen_range(0..2usize);
        let pos = rng.gen_range(0..6usize);
        // Week 3 is past the panel: the out-of-sample context must hold too.
        let week = rng.gen_range(0..4usize);
        let set = &sets[u];
        let analytic =
            distance_elasticity(&model, &obs, u, set.restaurants[pos], week, set).unwrap();
        let fd = fd_log_prob(&model, &obs, u, pos, week, set, h);
        assert_relative_eq!(analytic, fd, max_relative = 1e-6, epsilon = 1e-9);
    }

    let mut weights = Array1::zeros(obs.n_cols());
    for v in weights.iter_mut() {
        *v = 0.3 * rng.sample::<f64, _>(StandardNormal);
    }
    let mnl = FittedModel::Mnl(MnlParams { weights, dist_coef: 1.3 });
    for _ in 0..20 {
        let u = rng.gen_range(0..2usize);
        let pos = rng.gen_range(0..6usize);
        let set = &sets[u];
        let analytic =
            distance_elasticity(&mnl, &obs, u, set.restaurants[pos], 0, set).unwrap();
        let fd = fd_log_prob(&mnl, &obs, u, pos, 0, set, h);
        assert_relative_eq!(analytic, fd, max_relative = 1e-6, epsilon = 1e-9);
    }
}

#[test]
fn restricted_elasticities_vary_only_through_the_baseline() {
    let obs = obs_for(4);
    let c = 0.7;
    let mut weights = Array1::zeros(obs.n_cols());
    let mut rng = stream(9, "eval-test-mnl", 0);
    for v in weights.iter_mut() {
        *v = 0.2 * rng.sample::<f64, _>(StandardNormal);
    }
    let model = FittedModel::Mnl(MnlParams { weights, dist_coef: c });
    let sets = vec![uniform_set(4), ChoiceSet::new((0..4).collect(), vec![2.0; 4]).unwrap()];
    // One visit per (user, restaurant) pair, so each record is a single context.
    let visits =
        [visit(0, 1, 1, 0), visit(0, 3, 3, 0), visit(1, 0, 0, 1), visit(1, 2, 2, 1)];
    let records = elasticity_records(&model, &obs, &visits, &sets).unwrap();
    assert_eq!(records.len(), 4);
    for (r, v) in records.iter().zip([&visits[0], &visits[1], &visits[2], &visits[3]]) {
        assert_eq!((r.user, r.restaurant), (v.user, v.restaurant));
        assert_eq!(r.weight, 1.0);
        let p = model.probabilities(&obs, v.user, v.week, &sets[v.user])[v.alt];
        assert_eq!(r.elasticity + c * (1.0 - p), 0.0, "identity must hold exactly");
    }
    // Dispersion comes from the baseline probability alone.
    assert_ne!(records[0].elasticity, records[1].elasticity);
}

#[test]
fn records_average_over_contexts_and_weight_by_trips() {
    let d = dims(1, 2, 2);
    let mut params = LatentParams::zeros(&d);
    params.user_travel[[0, 0]] = 1.0;
    params.item_travel[[0, 0]] = 1.5;
    params.item_travel[[1, 0]] = 0.8;
    // Seasonal swing so the two weeks are genuinely different contexts.
    params.item_season[[0, 0]] = 1.0;
    params.week_season[[0, 0]] = 1.0;
    params.week_season[[1, 0]] = -1.0;
    let obs = obs_for(2);
    let set = ChoiceSet::new(vec![0, 1], vec![1.0, 2.0]).unwrap();
    let sets = vec![set.clone()];
    let model = FittedModel::Ttfm(params);

    let e00 = distance_elasticity(&model, &obs, 0, 0, 0, &set).unwrap();
    let e01 = distance_elasticity(&model, &obs, 0, 0, 1, &set).unwrap();
    let e10 = distance_elasticity(&model, &obs, 0, 1, 0, &set).unwrap();
    assert_ne!(e00, e01, "weeks should move the baseline probability");

    let visits = [visit(0, 0, 0, 0), visit(0, 0, 0, 1), visit(0, 1, 1, 0)];
    let records = elasticity_records(&model, &obs, &visits, &sets).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!((records[0].user, records[0].restaurant), (0, 0));
    assert_eq!(records[0].weight, 2.0);
    assert_eq!(records[0].elasticity, (e00 + e01) / 2.0);
    assert_eq!((records[1].user, records[1].restaurant), (0, 1));
    assert_eq!(records[1].weight, 1.0);
    assert_eq!(records[1].elasticity, e10);
}

// ------------------------------------------------------------- summaries

fn rec(user: usize, restaurant: usize, elasticity: f64, weight: f64) -> ElasticityRecord {
    ElasticityRecord { user, restaurant, elasticity, weight }
}

#[test]
fn two_user_decomposition_example() {
    let records = [
        rec(0, 0, -1.0, 1.0),
        rec(0, 1, -1.0, 1.0),
        rec(1, 2, -2.0, 1.0),
        rec(1, 3, -2.0, 1.0),
    ];
    let roster = plain_roster(4);

    let overall = elasticity_summary(&records, Grouping::Overall, &roster).unwrap();
    assert_eq!(overall.mean, -1.5);
    assert_eq!(overall.sd, 0.5);
    assert_eq!(overall.total_weight, 4.0);

    let by_user = elasticity_summary(&records, Grouping::ByUser, &roster).unwrap();
    let d = by_user.decomposition.unwrap();
    assert_eq!(d.n_groups, 2);
    assert_eq!(d.sd_of_group_means, 0.5);
    assert_eq!(d.mean_of_within_group_sds, 0.0);

    let by_item = elasticity_summary(&records, Grouping::ByItem, &roster).unwrap();
    let d = by_item.decomposition.unwrap();
    assert_eq!(d.n_groups, 4);
    assert_eq!(d.sd_of_group_means, 0.5);
    assert_eq!(d.mean_of_within_group_sds, 0.0);
}

#[test]
fn equal_elasticities_have_zero_spread() {
    let records = [rec(0, 0, -1.3, 1.0), rec(0, 1, -1.3, 2.0), rec(1, 0, -1.3, 3.0)];
    let roster = plain_roster(2);
    let overall = elasticity_summary(&records, Grouping::Overall, &roster).unwrap();
    assert_abs_diff_eq!(overall.mean, -1.3, epsilon = 1e-12);
    assert_abs_diff_eq!(overall.sd, 0.0, epsilon = 1e-12);
    let by_item = elasticity_summary(&records, Grouping::ByItem, &roster).unwrap();
    let d = by_item.decomposition.unwrap();
    assert_abs_diff_eq!(d.sd_of_group_means, 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(d.mean_of_within_group_sds, 0.0, epsilon = 1e-12);
}

fn attribute_roster() -> Vec<RestaurantRecord> {
    let mut r0 = restaurant("r00", 40.0, -100.0, 1, Some(3.0), Some(4.0), &["mexican"]);
    let mut r1 = restaurant("r01", 40.0005, -100.0005, 2, Some(3.2), Some(4.1), &["pizza"]);
    let mut r2 = restaurant("r02", 41.0, -101.0, 1, Some(3.4), Some(4.2), &["mexican", "pizza"]);
    let mut r3 = restaurant("r03", 41.5, -101.5, 4, Some(3.6), Some(4.3), &[]);
    r0.city = "northtown".into();
    r1.city = "northtown".into();
    r2.city = "southtown".into();
    r3.city = "southtown".into();
    vec![r0, r1, r2, r3]
}

#[test]
fn attribute_groups_pool_restaurant_level_means() {
    let roster = attribute_roster();
    // r0 carries two users; its item mean is (3(-1) + 1(-2))/4 = -1.25.
    let records = [
        rec(0, 0, -1.0, 3.0),
        rec(1, 0, -2.0, 1.0),
        rec(0, 1, -3.0, 1.0),
        rec(0, 2, -2.0, 2.0),
    ];

    let by_city = elasticity_summary(&records, Grouping::ByCity, &roster).unwrap();
    assert!(by_city.omitted_groups.is_empty());
    assert_eq!(by_city.groups.len(), 2);
    let north = &by_city.groups[0];
    assert_eq!(north.key, "northtown");
    assert_eq!(north.n_items, 2);
    assert_eq!(north.weight, 5.0);
    assert_relative_eq!(north.mean, -1.6, max_relative = 1e-12);
    assert_relative_eq!(north.sd, 0.7, max_relative = 1e-12);
    let south = &by_city.groups[1];
    assert_eq!((south.key.as_str(), south.n_items), ("southtown", 1));
    assert_eq!((south.mean, south.sd), (-2.0, 0.0));

    // Price level 4 exists in the roster but has no records behind it.
    let by_price = elasticity_summary(&records, Grouping::ByPrice, &roster).unwrap();
    let keys: Vec<&str> = by_price.groups.iter().map(|g| g.key.as_str()).collect();
    assert_eq!(keys, ["1", "2"]);
    assert_eq!(by_price.omitted_groups, ["4"]);
    assert_eq!(by_price.groups[0].n_items, 2);

    // r2's label tie resolves alphabetically, so it pools with "mexican";
    // the uncategorized r3 would form "(none)" but has no records.
    let by_cat = elasticity_summary(&records, Grouping::ByCategory, &roster).unwrap();
    let keys: Vec<&str> = by_cat.groups.iter().map(|g| g.key.as_str()).collect();
    assert_eq!(keys, ["mexican", "pizza"]);
    assert_eq!(by_cat.omitted_groups, ["(none)"]);
    assert_eq!(by_cat.groups[0].n_items, 2);

    let by_hash = elasticity_summary(&records, Grouping::ByGeohash6, &roster).unwrap();
    let expect: std::collections::BTreeSet<String> = [0usize, 1, 2]
        .iter()
        .map(|&i| encode_geohash(roster[i].point, 6).unwrap().code().to_string())
        .collect();
    let got: std::collections::BTreeSet<String> =
        by_hash.groups.iter().map(|g| g.key.clone()).collect();
    assert_eq!(got, expect);
}

#[test]
fn summary_rejects_degenerate_inputs() {
    let roster = plain_roster(1);
    assert!(elasticity_summary(&[], Grouping::Overall, &roster).is_err());
    assert!(
        elasticity_summary(&[rec(0, 0, -1.0, -0.5)], Grouping::Overall, &roster).is_err()
    );
    assert!(elasticity_summary(&[rec(0, 0, -1.0, 0.0)], Grouping::Overall, &roster).is_err());
}

// ---------------------------------------------------------- share tables

#[test]
fn single_band_covers_everything() {
    let params = LatentParams::zeros(&dims(1, 3, 1));
    let model = FittedModel::Ttfm(params);
    let obs = obs_for(3);
    let sets = vec![uniform_set(3)];
    let visits = [visit(0, 0, 0, 0), visit(0, 2, 2, 0)];
    let table = share_by_distance(&model, &obs, &visits, &sets, &[20.0]).unwrap();
    assert_eq!(table.len(), 1);
    assert_eq!((table[0].lo, table[0].hi), (0.0, 20.0));
    assert_abs_diff_eq!(table[0].actual, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(table[0].predicted, 1.0, epsilon = 1e-12);
}

#[test]
fn band_shares_match_hand_counts() {
    let params = LatentParams::zeros(&dims(1, 4, 1));
    let model = FittedModel::Ttfm(params);
    let obs = obs_for(4);
    let sets =
        vec![ChoiceSet::new(vec![0, 1, 2, 3], vec![0.5, 1.5, 3.0, 10.0]).unwrap()];
    let visits = [visit(0, 0, 0, 0), visit(0, 0, 0, 0), visit(0, 2, 2, 0)];
    let table =
        share_by_distance(&model, &obs, &visits, &sets, &DEFAULT_DISTANCE_BANDS).unwrap();
    let actual: Vec<f64> = table.iter().map(|b| b.actual).collect();
    let predicted: Vec<f64> = table.iter().map(|b| b.predicted).collect();
    for (got, want) in actual.iter().zip([2.0 / 3.0, 0.0, 1.0 / 3.0, 0.0]) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
    }
    for p in &predicted {
        assert_abs_diff_eq!(*p, 0.25, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(actual.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    assert_abs_diff_eq!(predicted.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
}

#[test]
fn band_membership_is_right_closed() {
    let params = LatentParams::zeros(&dims(1, 4, 1));
    let model = FittedModel::Ttfm(params);
    let obs = obs_for(4);
    // Every distance sits exactly on an edge: (0,1] takes 1.0, and so on.
    let sets =
        vec![ChoiceSet::new(vec![0, 1, 2, 3], vec![1.0, 2.0, 5.0, 20.0]).unwrap()];
    let visits: Vec<VisitObs> = (0..4).map(|i| visit(0, i, i, 0)).collect();
    let table =
        share_by_distance(&model, &obs, &visits, &sets, &DEFAULT_DISTANCE_BANDS).unwrap();
    for row in &table {
        assert_abs_diff_eq!(row.actual, 0.25, epsilon = 1e-12);
    }
}

#[test]
fn share_by_distance_rejects_bad_bands() {
    let params = LatentParams::zeros(&dims(1, 2, 1));
    let model = FittedModel::Ttfm(params);
    let obs = obs_for(2);
    let sets = vec![uniform_set(2)];
    let visits = [visit(0, 0, 0, 0)];
    for bad in [
        vec![],
        vec![2.0, 1.0, 20.0],
        vec![5.0],
        vec![0.0, 20.0],
        vec![f64::NAN],
        vec![1.0, f64::INFINITY],
    ] {
        assert!(
            share_by_distance(&model, &obs, &visits, &sets, &bad).is_err(),
            "edges {bad:?} should be rejected"
        );
    }
}

#[test]
fn decile_table_follows_training_frequencies() {
    let params = LatentParams::zeros(&dims(1, 20, 1));
    let model = FittedModel::Ttfm(params);
    let obs = obs_for(20);
    let sets = vec![uniform_set(20)];
    // Restaurant i gets i training visits: rank order equals index order.
    let mut train = Vec::new();
    for i in 0..20 {
        for _ in 0..i {
            train.push(visit(0, i, i, 0));
        }
    }
    let eval_visits =
        [visit(0, 19, 19, 0), visit(0, 19, 19, 0), visit(0, 0, 0, 0), visit(0, 10, 10, 0)];
    let table = share_by_decile(
        &model,
        &obs,
        &train,
        &eval_visits,
        &sets,
        20,
        DecileAxis::RestaurantFrequency,
    )
    .unwrap();
    assert_eq!(table.len(), 10);
    assert!(table.iter().all(|row| row.members == 2));
    assert!(table.iter().enumerate().all(|(g, row)| row.decile == g + 1));

    let actual: Vec<f64> = table.iter().map(|r| r.actual).collect();
    assert_abs_diff_eq!(actual[0], 0.25, epsilon = 1e-12);
    assert_abs_diff_eq!(actual[5], 0.25, epsilon = 1e-12);
    assert_abs_diff_eq!(actual[9], 0.5, epsilon = 1e-12);
    for row in &table {
        assert_abs_diff_eq!(row.predicted, 0.1, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(actual.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    assert_abs_diff_eq!(
        table.iter().map(|r| r.predicted).sum::<f64>(),
        1.0,
        epsilon = 1e-9
    );
}

#[test]
fn user_axis_shares_are_degenerate_but_consistent() {
    let params = LatentParams::zeros(&dims(4, 3, 1));
    let model = FittedModel::Ttfm(params);
    let obs = obs_for(3);
    let sets = vec![uniform_set(3), uniform_set(3), uniform_set(3), uniform_set(3)];
    let eval_visits = [
        visit(0, 0, 0, 0),
        visit(1, 1, 1, 0),
        visit(1, 2, 2, 0),
        visit(3, 0, 0, 0),
        visit(3, 1, 1, 0),
        visit(3, 2, 2, 0),
    ];
    let table =
        share_by_decile(&model, &obs, &[], &eval_visits, &sets, 3, DecileAxis::UserFrequency)
            .unwrap();
    assert_eq!(table.iter().map(|r| r.members).sum::<usize>(), 4);
    for row in &table {
        assert_eq!(row.actual, row.predicted, "user axis cannot redistribute mass");
    }
    assert_abs_diff_eq!(table.iter().map(|r| r.actual).sum::<f64>(), 1.0, epsilon = 1e-9);
}

// ------------------------------------------------------------- variance

#[test]
fn mean_static_utilities_combine_popularity_and_average_taste() {
    let d = dims(2, 3, 1);
    let mut params = LatentParams::zeros(&d);
    params.popularity = ndarray::arr1(&[1.0, 2.0, 3.0]);
    params.user_pref[[0, 0]] = 1.0;
    params.user_pref[[1, 0]] = 3.0;
    params.item_attr[[0, 0]] = 0.5;
    params.item_attr[[1, 0]] = 1.0;
    let u_bar = mean_static_utilities(&params);
    assert_eq!(u_bar.as_slice().unwrap(), &[2.0, 4.0, 3.0]);
}

#[test]
fn orthogonal_observables_explain_nothing() {
    let x = Array2::from_shape_vec((4, 2), vec![1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0, -1.0])
        .unwrap();
    let obs = Observables {
        x,
        layout: ObsLayout {
            rating: 0..1,
            category: 1..2,
            price: 2..2,
            categories: vec!["x".into()],
        },
    };
    let u_bar = ndarray::arr1(&[1.0, -1.0, 1.0, -1.0]);
    let out = variance_decomposition(&u_bar, &obs).unwrap();
    assert_eq!(out.combined_r2, 0.0);
    let groups: Vec<&str> = out.rows.iter().map(|r| r.group.as_str()).collect();
    assert_eq!(groups, ["rating", "category"], "empty price block is skipped");
    for row in &out.rows {
        assert_eq!(row.r2_alone, 0.0);
        assert_eq!(row.r2_incremental, 0.0);
    }
    // The constant first column is collinear with the intercept.
    assert_eq!(out.dropped, ["rating_in_sample"]);
}

#[test]
fn price_linear_utilities_attribute_everything_to_price() {
    let roster: Vec<RestaurantRecord> = (0..8)
        .map(|i| {
            restaurant(
                &format!("r{i:02}"),
                40.0 + 0.01 * i as f64,
                -100.0,
                (i / 2) as u8 + 1,
                Some(3.0 + 0.2 * i as f64),
                Some(4.0 - 0.1 * i as f64),
                &["a"],
            )
        })
        .collect();
    let obs = Observables::build(&roster).unwrap();
    let coef = [2.0, 5.0, -1.0, 3.0];
    let u_bar: Array1<f64> = (0..8).map(|i| coef[i / 2]).collect();

    let out = variance_decomposition(&u_bar, &obs).unwrap();
    assert!(out.combined_r2 > 1.0 - 1e-9, "combined R² = {}", out.combined_r2);
    for row in &out.rows {
        match row.group.as_str() {
            "price" => assert!(row.r2_alone > 1.0 - 1e-9, "price R² = {}", row.r2_alone),
            _ => assert!(
                row.r2_incremental.abs() < 1e-9,
                "{} incremental = {}",
                row.group,
                row.r2_incremental
            ),
        }
    }
    // Constant columns and the redundant fourth price dummy are dropped.
    assert!(out.dropped.contains(&"cat:a".to_string()));
    assert!(out.dropped.contains(&"price:4".to_string()));
    assert!(out.dropped.contains(&"rating_in_sample_missing".to_string()));
}

#[test]
fn constant_mean_utilities_are_rejected() {
    let obs = obs_for(3);
    let u_bar = ndarray::arr1(&[5.0, 5.0, 5.0]);
    assert!(variance_decomposition(&u_bar, &obs).is_err());
    let short = ndarray::arr1(&[1.0]);
    assert!(variance_decomposition(&short, &obs).is_err());
}
