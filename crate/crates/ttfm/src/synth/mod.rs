//! Synthetic panels drawn from the model's own generative process.
//!
//! Ground truth is sampled from the same priors the fitter assumes, so
//! recovery runs are well-posed self-consistency tests rather than
//! misspecification studies. The spatial generator scatters users and
//! restaurants over a configurable box (optionally clustered) so that
//! distance genuinely varies — the travel-sensitivity factors are only
//! identified when it does — and keeps restaurant cells far enough apart
//! that simulated pings can be attributed unambiguously on the way back
//! through the visit detector.

pub mod oracle;

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::Rng;
use rand_distr::Normal;
use rayon::prelude::*;

use crate::data::{ChoiceSet, RestaurantRecord, VisitObs};
use crate::geo::{encode_geohash, GeoPoint};
use crate::model::{
    choice_probabilities, free_entries, LatentParams, ModelDims, Observables, PriorSpec,
};
use crate::pipeline::{
    build_choice_set, AreaOfInterest, MorningLocation, Ping, PipelineConfig,
};
use crate::rng::{stream, Prng};
use crate::{Error, Result};

/// 2π · earth radius / 360, matching the haversine distance used everywhere.
const MILES_PER_DEGREE_LAT: f64 = 69.09409442795152;

/// Reported accuracy attached to synthetic pings, meters.
const PING_ACCURACY_M: f64 = 10.0;

/// Category labels the observable generator draws from.
const CATEGORY_POOL: [&str; 24] = [
    "american", "bakery", "bar", "bbq", "breakfast", "burgers", "cafe", "chinese", "deli",
    "dessert", "indian", "italian", "japanese", "korean", "mediterranean", "mexican", "pizza",
    "salad", "sandwiches", "seafood", "sushi", "thai", "vegan", "vietnamese",
];

/// Where users and restaurants live: a square box, uniform or clustered.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialLayout {
    pub center: GeoPoint,
    /// Half side-length of the sampling box, miles. The box diagonal must
    /// stay under 20 miles unless a test deliberately exercises the
    /// distance cull.
    pub half_extent_miles: f64,
    /// Number of density clusters; 0 samples uniformly over the box.
    pub n_clusters: usize,
    /// Gaussian spread of points around their cluster center, miles.
    pub cluster_sd_miles: f64,
}

impl Default for SpatialLayout {
    fn default() -> Self {
        SpatialLayout {
            center: GeoPoint::new(37.6, -122.2).expect("valid center"),
            half_extent_miles: 6.0,
            n_clusters: 0,
            cluster_sd_miles: 0.8,
        }
    }
}

/// Knobs for the synthetic roster's observable columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableGen {
    /// Distinct category labels in play (taken from a fixed pool).
    pub n_categories: usize,
    /// Each restaurant carries 1..=this many labels.
    pub max_categories_per_restaurant: usize,
    /// Sampling weights for price levels 1–4; need not normalize.
    pub price_weights: [f64; 4],
    /// Probability that a rating (overall or in-sample) is absent.
    pub rating_missing_rate: f64,
}

impl Default for ObservableGen {
    fn default() -> Self {
        ObservableGen {
            n_categories: 8,
            max_categories_per_restaurant: 2,
            price_weights: [0.3, 0.4, 0.2, 0.1],
            rating_missing_rate: 0.15,
        }
    }
}

/// How many visits each user makes over the sample period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisitCount {
    Fixed(usize),
    /// Inclusive bounds.
    Uniform(usize, usize),
}

impl VisitCount {
    fn sample(&self, rng: &mut Prng) -> usize {
        match *self {
            VisitCount::Fixed(n) => n,
            VisitCount::Uniform(lo, hi) => rng.gen_range(lo..=hi),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            VisitCount::Fixed(n) => n > 0,
            VisitCount::Uniform(lo, hi) => lo > 0 && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("visits per user must be positive (and lo <= hi)"))
        }
    }
}

/// Full recipe for a synthetic panel.
///
/// `dims.obs_dim` is a placeholder: the generator rebuilds it from the
/// observable matrix it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub dims: ModelDims,
    pub prior: PriorSpec,
    pub visits_per_user: VisitCount,
    pub layout: SpatialLayout,
    pub observables: ObservableGen,
    /// First day of the sample period; must be a Monday so calendar weeks
    /// and model weeks coincide.
    pub period_start: NaiveDate,
    /// Mean shift applied to every user travel-factor entry. Positive
    /// values (paired with `item_travel_shift`) give the panel a strongly
    /// positive distance sensitivity.
    pub user_travel_shift: f64,
    /// Mean shift applied to every item travel-factor entry.
    pub item_travel_shift: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Defaults for everything but the dimensions: 30 visits per user over
    /// a uniform 12-mile box, standard priors, no travel shift.
    pub fn new(dims: ModelDims, seed: u64) -> Self {
        SynthSpec {
            dims,
            prior: PriorSpec::default(),
            visits_per_user: VisitCount::Fixed(30),
            layout: SpatialLayout::default(),
            observables: ObservableGen::default(),
            period_start: NaiveDate::from_ymd_opt(2023, 4, 3).expect("valid date"),
            user_travel_shift: 0.0,
            item_travel_shift: 0.0,
            seed: 0,
        }
        .with_seed(seed)
    }

    fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if d.n_users == 0 || d.n_restaurants == 0 || d.n_weeks == 0 {
            return Err(Error::invalid("synthetic panel needs users, restaurants, and weeks"));
        }
        if d.pref_dim % 4 != 0 || d.travel_dim % 4 != 0 {
            return Err(Error::invalid("factor dimensions must be divisible by 4"));
        }
        self.prior.validate()?;
        self.visits_per_user.validate()?;
        if !(self.layout.half_extent_miles > 0.0) {
            return Err(Error::invalid("spatial box must have positive extent"));
        }
        if self.layout.n_clusters > 0 && !(self.layout.cluster_sd_miles > 0.0) {
            return Err(Error::invalid("cluster spread must be positive"));
        }
        let o = &self.observables;
        if o.n_categories == 0 || o.n_categories > CATEGORY_POOL.len() {
            return Err(Error::invalid(format!(
                "n_categories must be in 1..={}",
                CATEGORY_POOL.len()
            )));
        }
        if o.max_categories_per_restaurant == 0
            || o.max_categories_per_restaurant > o.n_categories
        {
            return Err(Error::invalid("categories per restaurant must be in 1..=n_categories"));
        }
        if !(o.price_weights.iter().sum::<f64>() > 0.0)
            || o.price_weights.iter().any(|w| *w < 0.0)
        {
            return Err(Error::invalid("price weights must be nonnegative and sum positive"));
        }
        if !(0.0..=1.0).contains(&o.rating_missing_rate) {
            return Err(Error::invalid("rating_missing_rate must be in [0, 1]"));
        }
        if self.period_start.weekday() != chrono::Weekday::Mon {
            return Err(Error::invalid(format!(
                "period_start {} is not a Monday",
                self.period_start
            )));
        }
        Ok(())
    }

    /// Pipeline thresholds over the synthetic period (Monday of week 0
    /// through Friday of the last week).
    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let end = self.period_start + Duration::days(7 * (self.dims.n_weeks as i64 - 1) + 4);
        PipelineConfig::for_period(self.period_start, end)
    }
}

/// Sampled spatial layout: the roster, each user's morning anchor point,
/// and a precision-5 area covering the box.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    /// Sorted by id; every record sits in its own precision-8 cell, at
    /// least two cells from any other restaurant and clear of every user's
    /// narrow morning cell.
    pub restaurants: Vec<RestaurantRecord>,
    pub user_ids: Vec<String>,
    pub user_points: Vec<GeoPoint>,
    pub area: AreaOfInterest,
}

/// Everything a recovery or pipeline test needs, generated in one call.
#[derive(Debug, Clone)]
pub struct SynthPanel {
    /// Spec dimensions with `obs_dim` filled in from the built observables.
    pub dims: ModelDims,
    pub geometry: Geometry,
    pub observables: Observables,
    pub truth: LatentParams,
    pub choice_sets: Vec<ChoiceSet>,
    pub visits: Vec<VisitObs>,
    pub config: PipelineConfig,
}

/// Generate geometry, observables, ground truth, choice sets, and a visit
/// panel from one spec. Deterministic in `spec` alone.
pub fn generate_panel(spec: &SynthSpec) -> Result<SynthPanel> {
    spec.validate()?;
    let geometry = generate_geometry(spec)?;
    let observables = Observables::build(&geometry.restaurants)?;
    let (dims, truth) =
        generate_ground_truth(spec, &observables, &mut stream(spec.seed, "synth-truth", 0))?;
    let config = spec.pipeline_config()?;
    let choice_sets = synth_choice_sets(&geometry, &config)?;
    let visits = simulate_visits(&truth, &choice_sets, spec)?;
    Ok(SynthPanel { dims, geometry, observables, truth, choice_sets, visits, config })
}

/// The morning location a clean ping stream at `point` would produce.
pub fn morning_location_of(user: &str, point: GeoPoint) -> Result<MorningLocation> {
    Ok(MorningLocation {
        user: user.to_string(),
        broad: encode_geohash(point, 6)?,
        narrow: encode_geohash(point, 7)?,
        share_in_area: 1.0,
        share_broad: 1.0,
        share_narrow: 1.0,
    })
}

/// Choice sets for every user, measured from their narrow-cell centers
/// exactly as the real pipeline would.
pub fn synth_choice_sets(
    geometry: &Geometry,
    config: &PipelineConfig,
) -> Result<Vec<ChoiceSet>> {
    geometry
        .user_ids
        .iter()
        .zip(&geometry.user_points)
        .map(|(id, &p)| build_choice_set(&morning_location_of(id, p)?, &geometry.restaurants, config))
        .collect()
}

/// Integer grid coordinates of the geohash cell containing `p` at the
/// given bit split. Geohash cells at a fixed precision form exactly this
/// uniform grid, so Chebyshev distance on these coordinates is cell
/// adjacency.
fn cell_coords(p: GeoPoint, lon_bits: u32, lat_bits: u32) -> (u64, u64) {
    let cols = 1u64 << lon_bits;
    let rows = 1u64 << lat_bits;
    let col = (((p.lon + 180.0) / 360.0) * cols as f64) as u64;
    let row = (((p.lat + 90.0) / 180.0) * rows as f64) as u64;
    (col.min(cols - 1), row.min(rows - 1))
}

fn chebyshev(a: (u64, u64), b: (u64, u64)) -> u64 {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

/// Precision-7 parents of the 3×3 precision-8 patch around a cell.
/// Precision 8 splits 20/20 bits and precision 7 splits 18/17, so a parent
/// spans 4 columns and 8 rows of the precision-8 grid.
fn patch_parents(cell8: (u64, u64)) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(4);
    for dc in -1i64..=1 {
        for dr in -1i64..=1 {
            let c = cell8.0.saturating_add_signed(dc);
            let r = cell8.1.saturating_add_signed(dr);
            let parent = (c / 4, r / 8);
            if !out.contains(&parent) {
                out.push(parent);
            }
        }
    }
    out
}

struct BoxSampler {
    center: GeoPoint,
    half_lat_deg: f64,
    half_lon_deg: f64,
    clusters: Vec<GeoPoint>,
    sd_lat_deg: f64,
    sd_lon_deg: f64,
}

impl BoxSampler {
    fn new(layout: &SpatialLayout, rng: &mut Prng) -> Self {
        let half_lat_deg = layout.half_extent_miles / MILES_PER_DEGREE_LAT;
        let miles_per_degree_lon = MILES_PER_DEGREE_LAT * layout.center.lat.to_radians().cos();
        let half_lon_deg = layout.half_extent_miles / miles_per_degree_lon;
        // Cluster centers stay inside 70% of the box so their mass does too.
        let clusters = (0..layout.n_clusters)
            .map(|_| {
                let lat = layout.center.lat + 0.7 * half_lat_deg * (2.0 * rng.gen::<f64>() - 1.0);
                let lon = layout.center.lon + 0.7 * half_lon_deg * (2.0 * rng.gen::<f64>() - 1.0);
                GeoPoint::new(lat, lon).expect("cluster center inside a valid box")
            })
            .collect();
        BoxSampler {
            center: layout.center,
            half_lat_deg,
            half_lon_deg,
            clusters,
            sd_lat_deg: layout.cluster_sd_miles / MILES_PER_DEGREE_LAT,
            sd_lon_deg: layout.cluster_sd_miles / miles_per_degree_lon,
        }
    }

    fn contains(&self, lat: f64, lon: f64) -> bool {
        (lat - self.center.lat).abs() <= self.half_lat_deg
            && (lon - self.center.lon).abs() <= self.half_lon_deg
    }

    fn sample(&self, rng: &mut Prng) -> GeoPoint {
        if self.clusters.is_empty() {
            let lat = self.center.lat + self.half_lat_deg * (2.0 * rng.gen::<f64>() - 1.0);
            let lon = self.center.lon + self.half_lon_deg * (2.0 * rng.gen::<f64>() - 1.0);
            return GeoPoint::new(lat, lon).expect("point inside a valid box");
        }
        let c = self.clusters[rng.gen_range(0..self.clusters.len())];
        for _ in 0..100 {
            let lat = c.lat + self.sd_lat_deg * standard_normal(rng);
            let lon = c.lon + self.sd_lon_deg * standard_normal(rng);
            if self.contains(lat, lon) {
                return GeoPoint::new(lat, lon).expect("point inside a valid box");
            }
        }
        c
    }
}

fn standard_normal(rng: &mut Prng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Sample user anchor points and a separation-respecting roster.
pub fn generate_geometry(spec: &SynthSpec) -> Result<Geometry> {
    spec.validate()?;
    let mut rng = stream(spec.seed, "synth-geometry", 0);
    let sampler = BoxSampler::new(&spec.layout, &mut rng);

    let n_users = spec.dims.n_users;
    let user_ids: Vec<String> = (0..n_users).map(|u| format!("u{u:04}")).collect();
    let user_points: Vec<GeoPoint> = (0..n_users).map(|_| sampler.sample(&mut rng)).collect();
    let narrow_cells: BTreeSet<(u64, u64)> =
        user_points.iter().map(|&p| cell_coords(p, 18, 17)).collect();

    // Restaurants: each in its own precision-8 cell, Chebyshev >= 2 from
    // every other so simulated lunch pings can never land in a competing
    // restaurant's patch, and with no patch parent overlapping a user's
    // narrow cell (which would suppress the restaurant entirely).
    let mut cells: Vec<(u64, u64)> = Vec::with_capacity(spec.dims.n_restaurants);
    let mut points: Vec<GeoPoint> = Vec::with_capacity(spec.dims.n_restaurants);
    for i in 0..spec.dims.n_restaurants {
        let mut placed = false;
        for _ in 0..1000 {
            let p = sampler.sample(&mut rng);
            let c8 = cell_coords(p, 20, 20);
            if cells.iter().any(|&c| chebyshev(c, c8) < 2) {
                continue;
            }
            if patch_parents(c8).iter().any(|par| narrow_cells.contains(par)) {
                continue;
            }
            cells.push(c8);
            points.push(p);
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::invalid(format!(
                "could not place restaurant {i} with the required cell separation; \
                 the box is too dense"
            )));
        }
    }

    let labels = &CATEGORY_POOL[..spec.observables.n_categories];
    let restaurants = points
        .iter()
        .enumerate()
        .map(|(i, &point)| {
            make_record(i, point, labels, &spec.observables, sampler.center, &mut rng)
        })
        .collect();

    let area = area_covering(&spec.layout)?;
    Ok(Geometry { restaurants, user_ids, user_points, area })
}

fn make_record(
    i: usize,
    point: GeoPoint,
    labels: &[&str],
    gen: &ObservableGen,
    box_center: GeoPoint,
    rng: &mut Prng,
) -> RestaurantRecord {
    let n_cats = rng.gen_range(1..=gen.max_categories_per_restaurant);
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    for k in 0..n_cats {
        let j = rng.gen_range(k..idx.len());
        idx.swap(k, j);
    }
    let mut categories: Vec<String> =
        idx[..n_cats].iter().map(|&k| labels[k].to_string()).collect();
    categories.sort();

    let total: f64 = gen.price_weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut price_range = 4u8;
    for (level, &w) in gen.price_weights.iter().enumerate() {
        if u < w {
            price_range = level as u8 + 1;
            break;
        }
        u -= w;
    }

    let round1 = |v: f64| (v * 10.0).round() / 10.0;
    let rate_draw = |rng: &mut Prng| round1((4.0 + 0.45 * standard_normal(rng)).clamp(1.0, 5.0));
    let rating_overall = if rng.gen::<f64>() < gen.rating_missing_rate {
        None
    } else {
        Some(rate_draw(rng))
    };
    let n_ratings_overall = if rating_overall.is_some() {
        (3.5 + 0.9 * standard_normal(rng)).exp().round().max(1.0)
    } else {
        0.0
    };
    let rating_in_sample = if rng.gen::<f64>() < gen.rating_missing_rate {
        None
    } else {
        Some(rate_draw(rng))
    };
    let n_ratings_in_sample = if rating_in_sample.is_some() {
        (n_ratings_overall * (0.05 + 0.45 * rng.gen::<f64>())).round().max(1.0)
    } else {
        0.0
    };

    let city = match (point.lat >= box_center.lat, point.lon >= box_center.lon) {
        (true, true) => "northeast",
        (true, false) => "northwest",
        (false, true) => "southeast",
        (false, false) => "southwest",
    };

    RestaurantRecord {
        id: format!("r{i:04}"),
        name: format!("place {i:04}"),
        point,
        price_range,
        rating_overall,
        n_ratings_overall,
        rating_in_sample,
        n_ratings_in_sample,
        categories,
        open_date: None,
        close_date: None,
        city: city.to_string(),
    }
}

/// Precision-5 cells covering the sampling box (with the cells' own extent
/// as margin).
fn area_covering(layout: &SpatialLayout) -> Result<AreaOfInterest> {
    let half_lat = layout.half_extent_miles / MILES_PER_DEGREE_LAT;
    let half_lon = layout.half_extent_miles
        / (MILES_PER_DEGREE_LAT * layout.center.lat.to_radians().cos());
    let sw = GeoPoint::new(layout.center.lat - half_lat, layout.center.lon - half_lon)?;
    let ne = GeoPoint::new(layout.center.lat + half_lat, layout.center.lon + half_lon)?;
    // Precision 5 splits 13 lon / 12 lat bits.
    let (c0, r0) = cell_coords(sw, 13, 12);
    let (c1, r1) = cell_coords(ne, 13, 12);
    let lon_step = 360.0 / (1u64 << 13) as f64;
    let lat_step = 180.0 / (1u64 << 12) as f64;
    let mut cells = Vec::new();
    for c in c0..=c1 {
        for r in r0..=r1 {
            let lon = -180.0 + (c as f64 + 0.5) * lon_step;
            let lat = -90.0 + (r as f64 + 0.5) * lat_step;
            cells.push(encode_geohash(GeoPoint::new(lat, lon)?, 5)?);
        }
    }
    AreaOfInterest::new(cells)
}

/// Sample every latent family from its prior, in a fixed documented order:
/// popularity, user preferences, user travel, item seasonality, week
/// seasonality, the free entries of both weight matrices (row-major), then
/// the hierarchical item attribute and travel rows. Masked weight entries
/// stay exactly zero. Returns the dimensions with `obs_dim` taken from the
/// observable matrix.
pub fn generate_ground_truth(
    spec: &SynthSpec,
    obs: &Observables,
    rng: &mut Prng,
) -> Result<(ModelDims, LatentParams)> {
    spec.validate()?;
    let dims = ModelDims { obs_dim: obs.n_cols(), ..spec.dims };
    dims.validate()?;
    if obs.n_restaurants() != dims.n_restaurants {
        return Err(Error::invalid(format!(
            "observables cover {} restaurants, spec wants {}",
            obs.n_restaurants(),
            dims.n_restaurants
        )));
    }
    let prior = &spec.prior;
    let mut p = LatentParams::zeros(&dims);

    let norm = |var: f64| Normal::new(0.0, var.sqrt()).expect("validated variance");
    let pop = norm(prior.popularity);
    for v in p.popularity.iter_mut() {
        *v = rng.sample(pop);
    }
    let upref = norm(prior.user_pref);
    for v in p.user_pref.iter_mut() {
        *v = rng.sample(upref);
    }
    let utravel = Normal::new(spec.user_travel_shift, prior.user_travel.sqrt())
        .expect("validated variance");
    for v in p.user_travel.iter_mut() {
        *v = rng.sample(utravel);
    }
    let iseason = norm(prior.item_season);
    for v in p.item_season.iter_mut() {
        *v = rng.sample(iseason);
    }
    let wseason = norm(prior.week_season);
    for v in p.week_season.iter_mut() {
        *v = rng.sample(wseason);
    }

    let wdist = norm(prior.weights);
    for &(r, c) in &free_entries(dims.pref_dim, &obs.layout)? {
        p.attr_weights[(r, c)] = rng.sample(wdist);
    }
    for &(r, c) in &free_entries(dims.travel_dim, &obs.layout)? {
        p.travel_weights[(r, c)] = rng.sample(wdist);
    }

    let attr_resid = norm(prior.attr_resid);
    for i in 0..dims.n_restaurants {
        let mean = p.attr_weights.dot(&obs.row(i));
        for (v, m) in p.item_attr.row_mut(i).iter_mut().zip(mean.iter()) {
            *v = m + rng.sample(attr_resid);
        }
    }
    let travel_resid = norm(prior.travel_resid);
    for i in 0..dims.n_restaurants {
        let mean = p.travel_weights.dot(&obs.row(i));
        for (v, m) in p.item_travel.row_mut(i).iter_mut().zip(mean.iter()) {
            *v = m + spec.item_travel_shift + rng.sample(travel_resid);
        }
    }
    Ok((dims, p))
}

/// One draw from a categorical distribution given its probabilities.
pub fn sample_categorical(probs: &[f64], rng: &mut Prng) -> usize {
    let mut u = rng.gen::<f64>();
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

/// Gumbel-max draw over deterministic utilities: argmax of U_j + g_j with
/// g_j standard Gumbel. Distributionally identical to softmax sampling.
pub fn sample_gumbel_choice(utilities: &[f64], rng: &mut Prng) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (j, &u) in utilities.iter().enumerate() {
        let unif: f64 = rng.gen();
        let gumbel = -(-unif.ln()).ln();
        if u + gumbel > best_v {
            best_v = u + gumbel;
            best = j;
        }
    }
    best
}

/// Simulate the visit panel: each user draws their visit count, then for
/// each visit a uniform (week, weekday) and a restaurant from the exact
/// softmax at that week. At most two visits land on one date and repeat
/// (restaurant, date) pairs are resampled, so a clean ping stream maps back
/// to exactly this panel. Users are simulated in parallel on derived
/// per-user streams; output is deterministic in the spec.
pub fn simulate_visits(
    truth: &LatentParams,
    sets: &[ChoiceSet],
    spec: &SynthSpec,
) -> Result<Vec<VisitObs>> {
    spec.validate()?;
    let n_weeks = spec.dims.n_weeks;
    if sets.len() != spec.dims.n_users {
        return Err(Error::invalid(format!(
            "{} choice sets for {} users",
            sets.len(),
            spec.dims.n_users
        )));
    }
    let per_user: Vec<Vec<VisitObs>> = (0..spec.dims.n_users)
        .into_par_iter()
        .map(|u| -> Result<Vec<VisitObs>> {
            let mut rng = stream(spec.seed, "synth-visits", u as u64);
            let set = &sets[u];
            let n_target = spec.visits_per_user.sample(&mut rng);
            let mut probs_by_week: Vec<Option<Vec<f64>>> = vec![None; n_weeks];
            let mut per_date: BTreeMap<NaiveDate, usize> = BTreeMap::new();
            let mut taken: BTreeSet<(usize, NaiveDate)> = BTreeSet::new();
            let mut out = Vec::with_capacity(n_target);
            for _ in 0..n_target {
                for _attempt in 0..100 {
                    let week = rng.gen_range(0..n_weeks);
                    let weekday = rng.gen_range(0..5u64);
                    let date = spec.period_start
                        + Duration::days(7 * week as i64 + weekday as i64);
                    let probs = match &probs_by_week[week] {
                        Some(p) => p,
                        None => {
                            let p = choice_probabilities(truth, u, week, set)?;
                            probs_by_week[week] = Some(p);
                            probs_by_week[week].as_ref().expect("just set")
                        }
                    };
                    let alt = sample_categorical(probs, &mut rng);
                    let restaurant = set.restaurants[alt];
                    if per_date.get(&date).copied().unwrap_or(0) >= 2
                        || taken.contains(&(restaurant, date))
                    {
                        continue;
                    }
                    *per_date.entry(date).or_insert(0) += 1;
                    taken.insert((restaurant, date));
                    out.push(VisitObs { user: u, restaurant, alt, week, date });
                    break;
                }
            }
            out.sort_by_key(|v| (v.date, v.restaurant));
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_user.into_iter().flatten().collect())
}

/// Synthetic ping stream corruption knobs. The default adds nothing, which
/// is the regime where visit detection must invert the simulator exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PingNoise {
    /// Extra pings per user-day at 15:00+, uniform over the box — outside
    /// the lunch window, so they can never create visits.
    pub afternoon_per_day: usize,
    /// Gaussian jitter on morning ping positions, miles. Large values can
    /// push morning pings out of the narrow cell and change inferred
    /// locations.
    pub morning_jitter_miles: f64,
}

/// Emit the ping stream a panel's users would produce: three morning pings
/// at their anchor every weekday, two lunch pings inside each visited
/// restaurant's cell (12:00/12:06 for the first visit of a day, 12:45/12:51
/// for the second), plus any configured noise.
pub fn simulate_pings(
    visits: &[VisitObs],
    geometry: &Geometry,
    spec: &SynthSpec,
    noise: &PingNoise,
) -> Result<Vec<Ping>> {
    spec.validate()?;
    let config = spec.pipeline_config()?;
    let mut by_user: BTreeMap<usize, Vec<&VisitObs>> = BTreeMap::new();
    for v in visits {
        if v.user >= geometry.user_ids.len() || v.restaurant >= geometry.restaurants.len() {
            return Err(Error::invalid("visit references a user or restaurant off the panel"));
        }
        by_user.entry(v.user).or_default().push(v);
    }
    let weekdays: Vec<NaiveDate> = {
        let mut out = Vec::new();
        let mut d = config.period_start;
        while d <= config.period_end {
            if d.weekday().num_days_from_monday() < 5 {
                out.push(d);
            }
            d += Duration::days(1);
        }
        out
    };

    let sampler = BoxSampler::new(&spec.layout, &mut stream(spec.seed, "synth-ping-box", 0));
    let lat_jitter = noise.morning_jitter_miles / MILES_PER_DEGREE_LAT;
    let lon_jitter = noise.morning_jitter_miles
        / (MILES_PER_DEGREE_LAT * spec.layout.center.lat.to_radians().cos());

    let empty: Vec<&VisitObs> = Vec::new();
    let per_user: Vec<Vec<Ping>> = (0..spec.dims.n_users)
        .into_par_iter()
        .map(|u| -> Result<Vec<Ping>> {
            let mut rng = stream(spec.seed, "synth-pings", u as u64);
            let id = &geometry.user_ids[u];
            let anchor = geometry.user_points[u];
            let mut out = Vec::new();
            let at = |d: NaiveDate, h: u32, m: u32| -> NaiveDateTime {
                d.and_time(NaiveTime::from_hms_opt(h, m, 0).expect("valid time"))
            };
            for &d in &weekdays {
                for (h, m) in [(9, 15), (9, 45), (10, 30)] {
                    let point = if noise.morning_jitter_miles > 0.0 {
                        GeoPoint::new(
                            anchor.lat + lat_jitter * standard_normal(&mut rng),
                            anchor.lon + lon_jitter * standard_normal(&mut rng),
                        )?
                    } else {
                        anchor
                    };
                    out.push(Ping {
                        user: id.clone(),
                        t: at(d, h, m),
                        point,
                        accuracy_m: PING_ACCURACY_M,
                    });
                }
                for k in 0..noise.afternoon_per_day {
                    out.push(Ping {
                        user: id.clone(),
                        t: at(d, 15, (k as u32 * 7) % 60),
                        point: sampler.sample(&mut rng),
                        accuracy_m: PING_ACCURACY_M,
                    });
                }
            }
            // Visits arrive sorted by (date, restaurant); the first visit
            // of a date takes the early lunch slot, the second the late one.
            let mut last_date: Option<NaiveDate> = None;
            let mut slot = 0usize;
            for v in by_user.get(&u).unwrap_or(&empty) {
                slot = if last_date == Some(v.date) { slot + 1 } else { 0 };
                last_date = Some(v.date);
                let times = [[(12, 0), (12, 6)], [(12, 45), (12, 51)]];
                let Some(pair) = times.get(slot) else {
                    return Err(Error::invalid(format!(
                        "more than two visits on {} for user {id}",
                        v.date
                    )));
                };
                for &(h, m) in pair {
                    out.push(Ping {
                        user: id.clone(),
                        t: at(v.date, h, m),
                        point: geometry.restaurants[v.restaurant].point,
                        accuracy_m: PING_ACCURACY_M,
                    });
                }
            }
            out.sort_by_key(|p| p.t);
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_user.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests;
