use std::collections::BTreeSet;

use chrono::NaiveTime;
use ndarray::Array2;

use crate::model::{block_mask, ObsLayout};
use crate::pipeline::{detect_visits, filter_user_base, group_by_user};

use super::*;

fn dims(n_users: usize, n_restaurants: usize, n_weeks: usize) -> ModelDims {
    ModelDims {
        n_users,
        n_restaurants,
        n_weeks,
        pref_dim: 4,
        travel_dim: 4,
        season_dim: 2,
        obs_dim: 0,
    }
}

#[test]
fn panels_are_deterministic_in_the_spec() {
    let mut spec = SynthSpec::new(dims(5, 8, 4), 5);
    spec.visits_per_user = VisitCount::Fixed(10);
    let a = generate_panel(&spec).unwrap();
    let b = generate_panel(&spec).unwrap();
    assert_eq!(a.visits, b.visits);
    assert_eq!(a.truth, b.truth);
    let ids = |p: &SynthPanel| -> Vec<String> {
        p.geometry.restaurants.iter().map(|r| r.id.clone()).collect()
    };
    assert_eq!(ids(&a), ids(&b));

    let other = generate_panel(&SynthSpec::new(dims(5, 8, 4), 6).clone()).unwrap();
    assert_ne!(a.truth, other.truth);
}

#[test]
fn restaurant_cells_respect_the_separation_rules() {
    let mut spec = SynthSpec::new(dims(6, 30, 2), 9);
    spec.visits_per_user = VisitCount::Fixed(2);
    let panel = generate_panel(&spec).unwrap();
    let cells: Vec<(u64, u64)> = panel
        .geometry
        .restaurants
        .iter()
        .map(|r| cell_coords(r.point, 20, 20))
        .collect();
    for (a, ca) in cells.iter().enumerate() {
        for cb in &cells[a + 1..] {
            assert!(chebyshev(*ca, *cb) >= 2, "restaurants {ca:?} and {cb:?} too close");
        }
    }
    let narrow: BTreeSet<(u64, u64)> = panel
        .geometry
        .user_points
        .iter()
        .map(|&p| cell_coords(p, 18, 17))
        .collect();
    for c in &cells {
        for parent in patch_parents(*c) {
            assert!(!narrow.contains(&parent), "patch of {c:?} overlaps a morning cell");
        }
    }
}

#[test]
fn the_area_covers_every_sampled_point() {
    let mut spec = SynthSpec::new(dims(10, 15, 3), 11);
    spec.visits_per_user = VisitCount::Fixed(3);
    spec.layout.n_clusters = 3;
    let panel = generate_panel(&spec).unwrap();
    for p in &panel.geometry.user_points {
        assert!(panel.geometry.area.contains_point(*p));
    }
    for r in &panel.geometry.restaurants {
        assert!(panel.geometry.area.contains_point(r.point));
    }
    assert_eq!(panel.choice_sets.len(), 10);
    assert!(panel.choice_sets.iter().all(|s| !s.is_empty()));
}

#[test]
fn season_entries_reproduce_their_prior_sd() {
    let spec = SynthSpec::new(
        ModelDims {
            n_users: 1,
            n_restaurants: 2000,
            n_weeks: 1,
            pref_dim: 0,
            travel_dim: 0,
            season_dim: 5,
            obs_dim: 0,
        },
        13,
    );
    let geometry = generate_geometry(&spec).unwrap();
    let obs = Observables::build(&geometry.restaurants).unwrap();
    let (_, truth) =
        generate_ground_truth(&spec, &obs, &mut stream(13, "synth-truth", 0)).unwrap();
    let entries: Vec<f64> = truth.item_season.iter().copied().collect();
    assert_eq!(entries.len(), 10_000);
    let mean = entries.iter().sum::<f64>() / entries.len() as f64;
    let var = entries.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / entries.len() as f64;
    let sd = var.sqrt();
    let want = spec.prior.item_season.sqrt();
    assert!((sd - want).abs() / want < 0.05, "sd {sd} vs prior sd {want}");
}

#[test]
fn masked_weight_entries_are_zero_in_every_draw() {
    for seed in 0..20 {
        let spec = SynthSpec::new(dims(2, 5, 2), seed);
        let geometry = generate_geometry(&spec).unwrap();
        let obs = Observables::build(&geometry.restaurants).unwrap();
        let (d, truth) =
            generate_ground_truth(&spec, &obs, &mut stream(seed, "synth-truth", 0)).unwrap();
        for (k, w) in [(d.pref_dim, &truth.attr_weights), (d.travel_dim, &truth.travel_weights)]
        {
            let mask = block_mask(k, &obs.layout).unwrap();
            for ((r, c), &m) in mask.indexed_iter() {
                if m == 0.0 {
                    assert_eq!(w[(r, c)], 0.0, "seed {seed}: masked ({r}, {c}) nonzero");
                }
            }
        }
    }
}

#[test]
fn zero_observables_reduce_attr_rows_to_pure_residual_noise() {
    let n = 1500;
    let obs = Observables {
        x: Array2::zeros((n, 3)),
        layout: ObsLayout {
            rating: 0..1,
            category: 1..2,
            price: 2..3,
            categories: vec!["cafe".to_string()],
        },
    };
    let spec = SynthSpec::new(
        ModelDims {
            n_users: 1,
            n_restaurants: n,
            n_weeks: 1,
            pref_dim: 4,
            travel_dim: 0,
            season_dim: 0,
            obs_dim: 0,
        },
        21,
    );
    let (_, truth) =
        generate_ground_truth(&spec, &obs, &mut stream(21, "synth-truth", 0)).unwrap();
    let entries: Vec<f64> = truth.item_attr.iter().copied().collect();
    let m = entries.len() as f64;
    let mean = entries.iter().sum::<f64>() / m;
    let var = entries.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    let want_sd = spec.prior.attr_resid.sqrt();
    assert!(mean.abs() < 3.0 * want_sd / m.sqrt(), "mean {mean} too far from zero");
    assert!((var.sqrt() - want_sd).abs() / want_sd < 0.05);
}

#[test]
fn categorical_sampling_is_unbiased_on_a_fair_coin() {
    let mut rng = stream(30, "coin", 0);
    let n = 10_000;
    let heads = (0..n).filter(|_| sample_categorical(&[0.5, 0.5], &mut rng) == 0).count();
    let share = heads as f64 / n as f64;
    let se = 0.5 / (n as f64).sqrt();
    assert!((share - 0.5).abs() < 3.0 * se, "share {share}");
}

#[test]
fn gumbel_and_softmax_sampling_agree() {
    let utils = [0.3, -0.2, 0.9, 0.0];
    let mut probs: Vec<f64> = utils.iter().map(|u: &f64| u.exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    let n = 100_000usize;
    let chi2 = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .zip(&probs)
            .map(|(&c, &p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum()
    };
    let mut rng = stream(31, "softmax", 0);
    let mut soft = [0usize; 4];
    for _ in 0..n {
        soft[sample_categorical(&probs, &mut rng)] += 1;
    }
    let mut rng = stream(31, "gumbel", 0);
    let mut gum = [0usize; 4];
    for _ in 0..n {
        gum[sample_gumbel_choice(&utils, &mut rng)] += 1;
    }
    // Chi-square with 3 degrees of freedom: p > 0.001 iff the statistic is
    // below 16.266.
    assert!(chi2(&soft) < 16.266, "softmax sampler stat {}", chi2(&soft));
    assert!(chi2(&gum) < 16.266, "gumbel sampler stat {}", chi2(&gum));
}

#[test]
fn raising_popularity_strictly_raises_its_share() {
    let mut spec = SynthSpec::new(dims(20, 5, 20), 33);
    spec.visits_per_user = VisitCount::Fixed(40);
    let panel = generate_panel(&spec).unwrap();
    let share = |visits: &[VisitObs]| {
        visits.iter().filter(|v| v.restaurant == 0).count() as f64 / visits.len() as f64
    };
    let mut boosted = panel.truth.clone();
    boosted.popularity[0] += 1.5;
    let visits2 = simulate_visits(&boosted, &panel.choice_sets, &spec).unwrap();
    assert!(
        share(&visits2) > share(&panel.visits),
        "{} vs {}",
        share(&visits2),
        share(&panel.visits)
    );
}

#[test]
fn visit_panels_respect_the_calendar_caps() {
    let mut spec = SynthSpec::new(dims(6, 10, 14), 35);
    spec.visits_per_user = VisitCount::Uniform(20, 40);
    let panel = generate_panel(&spec).unwrap();
    let mut per_date: BTreeMap<(usize, NaiveDate), usize> = BTreeMap::new();
    let mut triples = BTreeSet::new();
    for v in &panel.visits {
        *per_date.entry((v.user, v.date)).or_insert(0) += 1;
        assert!(triples.insert((v.user, v.restaurant, v.date)), "duplicate visit {v:?}");
        assert_eq!(panel.config.week_index(v.date).unwrap(), v.week);
        assert!(is_weekday_date(v.date));
    }
    assert!(per_date.values().all(|&n| n <= 2));
}

fn is_weekday_date(d: NaiveDate) -> bool {
    d.weekday().num_days_from_monday() < 5
}

/// End-to-end: simulate pings with zero noise, run the full user filter and
/// visit detector, and require the exact simulated visit set back.
fn round_trip(noise: &PingNoise) -> (BTreeSet<(String, String, NaiveDate)>, BTreeSet<(String, String, NaiveDate)>) {
    let mut spec = SynthSpec::new(dims(4, 8, 13), 42);
    spec.visits_per_user = VisitCount::Fixed(15);
    let panel = generate_panel(&spec).unwrap();
    let pings = simulate_pings(&panel.visits, &panel.geometry, &spec, noise).unwrap();
    let grouped = group_by_user(pings);
    let (mornings, rejected) =
        filter_user_base(&grouped, &panel.geometry.area, None, &panel.config);
    assert!(rejected.is_empty(), "unexpected rejections: {rejected:?}");
    assert_eq!(mornings.len(), 4);

    let mut detected = BTreeSet::new();
    for m in &mornings {
        for v in detect_visits(&grouped[&m.user], &panel.geometry.restaurants, m, None, &panel.config)
        {
            assert_eq!(v.ping_count, 2);
            assert!((v.dwell_minutes - 6.0).abs() < 1e-9);
            detected.insert((v.user.clone(), v.restaurant.clone(), v.date));
        }
    }
    let simulated: BTreeSet<(String, String, NaiveDate)> = panel
        .visits
        .iter()
        .map(|v| {
            (
                panel.geometry.user_ids[v.user].clone(),
                panel.geometry.restaurants[v.restaurant].id.clone(),
                v.date,
            )
        })
        .collect();
    (simulated, detected)
}

#[test]
fn ping_round_trip_recovers_the_simulated_visits() {
    let (simulated, detected) = round_trip(&PingNoise::default());
    assert!(!simulated.is_empty());
    assert_eq!(simulated, detected);
}

#[test]
fn afternoon_noise_never_creates_visits() {
    let (simulated, detected) =
        round_trip(&PingNoise { afternoon_per_day: 2, morning_jitter_miles: 0.0 });
    assert_eq!(simulated, detected);
}

#[test]
fn removing_one_lunch_ping_drops_exactly_that_visit() {
    let mut spec = SynthSpec::new(dims(4, 8, 13), 42);
    spec.visits_per_user = VisitCount::Fixed(15);
    let panel = generate_panel(&spec).unwrap();
    let pings =
        simulate_pings(&panel.visits, &panel.geometry, &spec, &PingNoise::default()).unwrap();

    // Knock out the 12:06 ping of user 0's first simulated visit.
    let victim = panel.visits.iter().find(|v| v.user == 0).unwrap();
    let victim_user = panel.geometry.user_ids[0].clone();
    let victim_t = victim.date.and_time(NaiveTime::from_hms_opt(12, 6, 0).unwrap());
    let thinned: Vec<Ping> =
        pings.into_iter().filter(|p| !(p.user == victim_user && p.t == victim_t)).collect();

    let grouped = group_by_user(thinned);
    let morning = morning_location_of(&victim_user, panel.geometry.user_points[0]).unwrap();
    let detected: BTreeSet<(String, NaiveDate)> = detect_visits(
        &grouped[&victim_user],
        &panel.geometry.restaurants,
        &morning,
        None,
        &panel.config,
    )
    .into_iter()
    .map(|v| (v.restaurant, v.date))
    .collect();

    let expected: BTreeSet<(String, NaiveDate)> = panel
        .visits
        .iter()
        .filter(|v| v.user == 0)
        .filter(|v| !(v.date == victim.date && v.restaurant == victim.restaurant))
        .map(|v| (panel.geometry.restaurants[v.restaurant].id.clone(), v.date))
        .collect();
    assert_eq!(detected, expected);
}

#[test]
fn spec_validation_catches_bad_settings() {
    let good = SynthSpec::new(dims(2, 3, 2), 0);
    assert!(good.validate().is_ok());

    let mut bad = good.clone();
    bad.period_start = NaiveDate::from_ymd_opt(2023, 4, 4).unwrap(); // Tuesday
    assert!(bad.validate().is_err());

    let mut bad = good.clone();
    bad.observables.n_categories = 0;
    assert!(bad.validate().is_err());

    let mut bad = good.clone();
    bad.observables.price_weights = [0.0; 4];
    assert!(bad.validate().is_err());

    let mut bad = good.clone();
    bad.visits_per_user = VisitCount::Uniform(5, 2);
    assert!(bad.validate().is_err());

    let mut bad = good;
    bad.dims.pref_dim = 6;
    assert!(bad.validate().is_err());
}

#[test]
fn pipeline_config_spans_exactly_the_model_weeks() {
    let spec = SynthSpec::new(dims(2, 3, 7), 1);
    let config = spec.pipeline_config().unwrap();
    assert_eq!(config.n_weeks(), 7);
    assert_eq!(config.period_start, spec.period_start);
    // Friday of the last week.
    assert_eq!(config.period_end, spec.period_start + Duration::days(7 * 6 + 4));
}
