//! Fleet scaling and placement of new stations.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand_distr::Normal;

use crate::corpus::{Category, Station, Vehicle};
use crate::error::{Error, Result};
use crate::rng;

pub const SCALE_TOLERANCE: f64 = 0.005;
pub const MAX_SCALE_ROUNDS: usize = 10_000;
pub const NEW_STATION_BASE_COUNT: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct FleetScalePlan {
    pub v_desired: usize,
    pub v_current: usize,
    /// `v_desired / v_current`.
    pub c: f64,
    /// Station id, drawn multiplier, current count, new count.
    pub stations: Vec<(u32, f64, usize, usize)>,
    pub rounds: usize,
}

impl FleetScalePlan {
    pub fn total(&self) -> usize {
        self.stations.iter().map(|s| s.3).sum()
    }

    pub fn counts(&self) -> BTreeMap<u32, usize> {
        self.stations.iter().map(|s| (s.0, s.3)).collect()
    }
}

pub fn scaled_count(count: usize, c_hat: f64) -> usize {
    (c_hat * count as f64).round().max(0.0) as usize
}

/// Draws per-station multipliers around `v_desired / v_current` until the total is
/// within 0.5% of `v_desired`. `current` lists (station_id, vehicle count).
pub fn scale_fleet(current: &[(u32, usize)], v_desired: usize, sigma: f64, seed: u64) -> Result<FleetScalePlan> {
    let v_current: usize = current.iter().map(|s| s.1).sum();
    if v_desired == 0 {
        return Err(Error::InvalidInput("v_desired must be positive".into()));
    }
    if v_current == 0 {
        return Err(Error::InvalidInput("current fleet is empty".into()));
    }
    let c = v_desired as f64 / v_current as f64;
    let dist = Normal::new(c, sigma).map_err(|e| Error::InvalidInput(format!("sigma: {e}")))?;
    let mut r = rng::stream(seed, "scale-fleet");
    for round in 1..=MAX_SCALE_ROUNDS {
        let stations: Vec<_> = current
            .iter()
            .map(|&(id, n)| {
                let c_hat = dist.sample(&mut r);
                (id, c_hat, n, scaled_count(n, c_hat))
            })
            .collect();
        let total: usize = stations.iter().map(|s| s.3).sum();
        if (total as f64 - v_desired as f64).abs() / (v_desired as f64) < SCALE_TOLERANCE {
            return Ok(FleetScalePlan {
                v_desired,
                v_current,
                c,
                stations,
                rounds: round,
            });
        }
    }
    Err(Error::NonConvergence(format!(
        "fleet scaling to {v_desired} vehicles did not reach 0.5% tolerance in {MAX_SCALE_ROUNDS} rounds"
    )))
}

pub fn assign_vehicle_categories(n: usize, shares: &BTreeMap<Category, f64>, seed: u64) -> Result<Vec<Category>> {
    if shares.is_empty() {
        return Err(Error::InvalidInput("empty category share map".into()));
    }
    let cats: Vec<Category> = shares.keys().copied().collect();
    let dist = WeightedIndex::new(shares.values().copied())
        .map_err(|e| Error::InvalidInput(format!("category shares: {e}")))?;
    let mut r = rng::stream(seed, "categories");
    Ok((0..n).map(|_| cats[dist.sample(&mut r)]).collect())
}

/// Rebuilds the fleet to match `plan`: stations that shrink drop their
/// highest-id vehicles, growing stations receive new vehicles with fresh ids.
pub fn apply_plan(
    vehicles: &[Vehicle],
    plan: &FleetScalePlan,
    shares: &BTreeMap<Category, f64>,
    seed: u64,
) -> Result<Vec<Vehicle>> {
    let mut by_station: BTreeMap<u32, Vec<&Vehicle>> = BTreeMap::new();
    for v in vehicles {
        by_station.entry(v.home_station).or_default().push(v);
    }
    let added: usize = plan
        .stations
        .iter()
        .map(|&(id, _, _, n)| n.saturating_sub(by_station.get(&id).map_or(0, |v| v.len())))
        .sum();
    let mut cats = assign_vehicle_categories(added, shares, seed)?.into_iter();
    let mut next_id = vehicles.iter().map(|v| v.vehicle_id + 1).max().unwrap_or(0);
    let mut out = Vec::with_capacity(plan.total());
    for &(sid, _, _, n) in &plan.stations {
        let mut have: Vec<&Vehicle> = by_station.remove(&sid).unwrap_or_default();
        have.sort_by_key(|v| v.vehicle_id);
        out.extend(have.iter().take(n).map(|v| (*v).clone()));
        for _ in have.len()..n {
            let cat = cats.next().expect("category per added vehicle");
            out.push(Vehicle::of_category(next_id, sid, cat));
            next_id += 1;
        }
    }
    out.sort_by_key(|v| v.vehicle_id);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub centers: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    /// Clustering objective after each assignment step.
    pub objective: Vec<f64>,
}

/// Lloyd iterations where `fixed` centers take part in assignment but never move.
pub fn place_new_stations(
    x: &[(f64, f64)],
    k: usize,
    fixed: &[(f64, f64)],
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<Placement> {
    if k > x.len() {
        return Err(Error::InvalidInput(format!("k = {k} exceeds {} home locations", x.len())));
    }
    if k == 0 {
        return Ok(Placement {
            centers: Vec::new(),
            iterations: 0,
            converged: true,
            objective: Vec::new(),
        });
    }
    let mut r = rng::stream(seed, "place-stations");
    let mut picks = index::sample(&mut r, x.len(), k).into_vec();
    picks.sort_unstable();
    let init: Vec<(f64, f64)> = picks.into_iter().map(|i| x[i]).collect();
    place_from(x, fixed, init, max_iter, tol)
}

fn sq(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Runs the fixed-center Lloyd iteration from explicit initial positions of the
/// movable centers.
pub fn place_from(
    x: &[(f64, f64)],
    fixed: &[(f64, f64)],
    init: Vec<(f64, f64)>,
    max_iter: usize,
    tol: f64,
) -> Result<Placement> {
    let k = init.len();
    if k > x.len() {
        return Err(Error::InvalidInput(format!("k = {k} exceeds {} home locations", x.len())));
    }
    let mut mu = init;
    let mut objective = Vec::new();
    let mut assign = vec![0usize; x.len()];
    let mut dist = vec![0.0f64; x.len()];
    let nf = fixed.len();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut total = 0.0;
        for (i, &p) in x.iter().enumerate() {
            let mut best = (usize::MAX, f64::INFINITY);
            for (j, &c) in fixed.iter().chain(mu.iter()).enumerate() {
                let d = sq(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            assign[i] = best.0;
            dist[i] = best.1;
            total += best.1;
        }
        objective.push(total);

        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (i, &p) in x.iter().enumerate() {
            if assign[i] >= nf {
                let s = &mut sums[assign[i] - nf];
                s.0 += p.0;
                s.1 += p.1;
                s.2 += 1;
            }
        }
        let mut shift = 0.0f64;
        for (j, s) in sums.iter().enumerate() {
            let next = if s.2 > 0 {
                (s.0 / s.2 as f64, s.1 / s.2 as f64)
            } else {
                // farthest point from its current center; zero its distance so a
                // second empty cluster picks a different point
                let far = (0..x.len())
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("nonempty X");
                dist[far] = 0.0;
                x[far]
            };
            shift = shift.max(sq(next, mu[j]).sqrt());
            mu[j] = next;
        }
        if shift < tol {
            converged = true;
            break;
        }
    }
    Ok(Placement {
        centers: mu,
        iterations,
        converged,
        objective,
    })
}

/// Station records for new centers, with ids continuing after the existing maximum.
pub fn new_station_records(existing: &[Station], centers: &[(f64, f64)]) -> Vec<Station> {
    let start = existing.iter().map(|s| s.station_id + 1).max().unwrap_or(0);
    centers
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Station::new(start + i as u32, x, y))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_rounding() {
        assert_eq!(scaled_count(2, 2.4), 5);
        assert_eq!(scaled_count(3, -0.4), 0);
    }

    #[test]
    fn identity_target_is_within_tolerance() {
        let current: Vec<(u32, usize)> = (0..40).map(|i| (i, 5)).collect();
        let plan = scale_fleet(&current, 200, 0.3, 3).unwrap();
        assert_eq!(plan.c, 1.0);
        assert!((plan.total() as f64 - 200.0).abs() / 200.0 < SCALE_TOLERANCE);
    }

    #[test]
    fn hundred_stations_to_two_and_a_half_times() {
        let current: Vec<(u32, usize)> = (0..100).map(|i| (i, 30)).collect();
        let plan = scale_fleet(&current, 7500, 0.3, 1).unwrap();
        assert_eq!(plan.c, 2.5);
        assert!((plan.total() as f64 - 7500.0).abs() < 37.5);
    }

    #[test]
    fn one_dimensional_fixture() {
        let x = [(0.0, 0.0), (1.0, 0.0), (9.0, 0.0), (10.0, 0.0)];
        let p = place_from(&x, &[(10.0, 0.0)], vec![(0.0, 0.0)], 200, 1e-3).unwrap();
        assert!(p.converged);
        assert_eq!(p.centers, vec![(0.5, 0.0)]);
    }

    #[test]
    fn k_zero_is_empty() {
        let p = place_new_stations(&[(1.0, 1.0)], 0, &[(0.0, 0.0)], 1, 200, 1e-3).unwrap();
        assert!(p.centers.is_empty());
        assert!(place_new_stations(&[(1.0, 1.0)], 2, &[], 1, 200, 1e-3).is_err());
    }

    #[test]
    fn empty_cluster_reseeds_at_farthest_point() {
        let x = [(0.0, 0.0), (1.0, 0.0), (50.0, 0.0)];
        // second movable center starts far away and captures nothing
        let p = place_from(&x, &[], vec![(0.5, 0.0), (-1000.0, 0.0)], 10, 1e-3).unwrap();
        assert!(p.centers.contains(&(50.0, 0.0)));
    }

    #[test]
    fn single_category_share() {
        let shares = BTreeMap::from([(Category::Combi, 1.0)]);
        let cats = assign_vehicle_categories(50, &shares, 2).unwrap();
        assert!(cats.iter().all(|&c| c == Category::Combi));
        assert!(assign_vehicle_categories(5, &BTreeMap::new(), 2).is_err());
    }

    #[test]
    fn apply_plan_shrinks_and_grows() {
        let vehicles: Vec<Vehicle> = (0..6)
            .map(|i| Vehicle::of_category(i, if i < 3 { 1 } else { 2 }, Category::Budget))
            .collect();
        let plan = FleetScalePlan {
            v_desired: 7,
            v_current: 6,
            c: 7.0 / 6.0,
            stations: vec![(1, 0.5, 3, 1), (2, 2.0, 3, 6)],
            rounds: 1,
        };
        let shares = BTreeMap::from([(Category::Premium, 1.0)]);
        let out = apply_plan(&vehicles, &plan, &shares, 4).unwrap();
        assert_eq!(out.len(), 7);
        assert_eq!(out.iter().filter(|v| v.home_station == 1).count(), 1);
        assert_eq!(out.iter().filter(|v| v.category == Category::Premium).count(), 3);
        assert!(out.iter().any(|v| v.vehicle_id == 0));
        assert!(!out.iter().any(|v| v.vehicle_id == 1));
    }
}
