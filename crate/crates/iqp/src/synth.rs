//! Synthetic cities with known structure.

use iqp_core::seed;
use iqp_core::stats::sigmoid;
use iqp_core::tract::TractRecord;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Coefficients of the planted hazard model
/// `P(high) = sigmoid(a (road - 30) + b (rail - 10) - c park)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Planted {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for Planted {
    fn default() -> Self {
        Self {
            a: 0.25,
            b: 0.75,
            c: 0.02,
        }
    }
}

pub const PLANTED_ROAD: f64 = 30.0;
pub const PLANTED_RAIL: f64 = 10.0;

/// Hazard indicators drawn around a low or high centre so that two-means
/// clustering recovers `label`.
fn hazards<R: Rng>(rng: &mut R, label: u8) -> (f64, f64) {
    let (heat, pm): (f64, f64) = if label == 1 { (40.0, 12.0) } else { (18.0, 5.0) };
    let heat = Normal::new(heat, 3.0).expect("valid sd").sample(rng).max(0.0);
    let pm = Normal::new(pm, 1.2).expect("valid sd").sample(rng).max(0.0);
    (heat, pm)
}

fn income<R: Rng>(rng: &mut R, i: usize, level: f64) -> Option<f64> {
    if i % 25 == 24 {
        return None;
    }
    let noise = Normal::new(0.0, 8_000.0).expect("valid sd").sample(rng);
    Some((level + noise).max(5_000.0))
}

#[allow(clippy::too_many_arguments)]
fn record(
    city: &str,
    i: usize,
    road: f64,
    rail: f64,
    house_age: f64,
    park: f64,
    walk: f64,
    poi: f64,
    hz: (f64, f64),
    income: Option<f64>,
) -> TractRecord {
    TractRecord {
        geoid: format!("{city}-{i:05}"),
        city: city.into(),
        road_pct: road.clamp(0.0, 100.0),
        rail_pct: rail.clamp(0.0, 100.0),
        house_age_pct: house_age.clamp(0.0, 100.0),
        park_pct: park.clamp(0.0, 100.0),
        walkability: walk.clamp(1.0, 20.0),
        poi_density: poi.max(0.0),
        heat_days: hz.0,
        pm25_days: hz.1,
        median_income: income,
    }
}

/// City whose high-hazard label follows the planted logistic model; road is
/// uniform on [0, 60] and rail on [0, 20], symmetric around the planted
/// levels.
pub fn planted_city(city: &str, n: usize, coef: Planted, seed: u64) -> Vec<TractRecord> {
    let mut rng = seed::rng(seed);
    (0..n)
        .map(|i| {
            let road = rng.random_range(0.0..60.0);
            let rail = rng.random_range(0.0..20.0);
            let park = rng.random_range(0.0..50.0);
            let house_age = rng.random_range(0.0..100.0);
            let walk = rng.random_range(1.0..20.0);
            let poi = rng.random_range(0.0..400.0);
            let p = sigmoid(coef.a * (road - PLANTED_ROAD) + coef.b * (rail - PLANTED_RAIL) - coef.c * park);
            let label = u8::from(rng.random::<f64>() < p);
            let hz = hazards(&mut rng, label);
            let inc = income(&mut rng, i, 45_000.0 + 600.0 * park - 300.0 * road);
            record(city, i, road, rail, house_age, park, walk, poi, hz, inc)
        })
        .collect()
}

/// City whose label is a deterministic function of road share with a gap
/// around the cut: road below 40 is low hazard, above 60 high.
pub fn separable_city(city: &str, n: usize, seed: u64) -> Vec<TractRecord> {
    let mut rng = seed::rng(seed);
    (0..n)
        .map(|i| {
            let label = u8::from(i % 2 == 1);
            let road = if label == 1 {
                rng.random_range(60.0..100.0)
            } else {
                rng.random_range(0.0..40.0)
            };
            let hz = hazards(&mut rng, label);
            let rail = rng.random_range(0.0..30.0);
            let house_age = rng.random_range(0.0..100.0);
            let park = rng.random_range(0.0..100.0);
            let walk = rng.random_range(1.0..20.0);
            let poi = rng.random_range(0.0..300.0);
            let inc = income(&mut rng, i, 60_000.0 - 200.0 * road);
            record(city, i, road, rail, house_age, park, walk, poi, hz, inc)
        })
        .collect()
}

/// City where every feature rises with a shared latent quantity level, so
/// high-quantity tracts overshoot any low optimal level.
pub fn divergent_city(city: &str, n: usize, seed: u64) -> Vec<TractRecord> {
    let mut rng = seed::rng(seed);
    let jitter = Normal::new(0.0, 0.05).expect("valid sd");
    (0..n)
        .map(|i| {
            let level: f64 = rng.random();
            let mut f = |scale: f64| (level + jitter.sample(&mut rng)).clamp(0.0, 1.0) * scale;
            let road = f(100.0);
            let rail = f(100.0);
            let house_age = f(100.0);
            let park = f(100.0);
            let walk = 1.0 + f(19.0);
            let poi = f(800.0);
            let label = u8::from(level > 0.5);
            let hz = hazards(&mut rng, label);
            let inc = income(&mut rng, i, 30_000.0 + 50_000.0 * level);
            record(city, i, road, rail, house_age, park, walk, poi, hz, inc)
        })
        .collect()
}
