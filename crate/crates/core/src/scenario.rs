//! Scenario construction: a synthetic world, the six growth presets and the
//! pipeline from base population to reservations.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;

use crate::agentsim::{simulate_reservations, LogEntry, SimSettings};
use crate::corpus::{validate_scenario, Agent, Gender, Reservation, ScenarioConfig, Station, Trip, Vehicle, DAY_MINUTES};
use crate::error::{Error, Result};
use crate::metrics::utilization;
use crate::modechoice::{extract_features, LogitRule, Mode, ModeChooser, PtGrid, N_FEATURES};
use crate::network::{
    apply_plan, assign_vehicle_categories, new_station_records, place_new_stations, scale_fleet, FleetScalePlan, Placement,
    NEW_STATION_BASE_COUNT,
};
use crate::population::{
    compute_sampling_weights, default_templates, generate_base_population, nearest_station, sample_carsharing_users,
    sample_homes, trips_of, ActivityTemplate, PopulationSpec, PopulationStats, ReferencePerson,
};
use crate::rng::{derive_seed, stream};
use crate::v2g::fixture::dso_profile;

pub const DEFAULT_SCALE: f64 = 0.01;
pub const FLEET_SIGMA: f64 = 0.3;

/// Full-scale parameters of the synthetic world. Counts are multiplied by the
/// run scale; lengths of the home distribution by its square root, so that
/// station density per resident stays the same at every scale.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub population: PopulationSpec,
    pub templates: Vec<ActivityTemplate>,
    pub base_stations: usize,
    pub base_vehicles: usize,
    /// Base population size as a multiple of the number of users sampled from it.
    pub population_factor: usize,
    /// Home locations used for station placement (not scaled).
    pub home_sample: usize,
    /// Size of the reference general population (not scaled).
    pub reference_size: usize,
    /// Distance at which subscription odds in the reference set fall by e.
    pub subscriber_range_m: f64,
    /// Share of stations inside the DSO grid zone.
    pub dso_share: f64,
    pub dso_peak_mw: f64,
    pub dso_base_mw: f64,
    pub pt_cell_m: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            population: PopulationSpec::default(),
            templates: default_templates(),
            base_stations: 1750,
            base_vehicles: 3000,
            population_factor: 4,
            home_sample: 20_000,
            reference_size: 20_000,
            subscriber_range_m: 1500.0,
            dso_share: 0.14,
            dso_peak_mw: 317.12,
            dso_base_mw: 180.0,
            pt_cell_m: 250.0,
        }
    }
}

/// Scaled count, at least `min`.
pub fn scaled(n: usize, scale: f64, min: usize) -> usize {
    ((n as f64 * scale).round() as usize).max(min)
}

#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub scale: f64,
    /// Home distribution after geometric scaling.
    pub population: PopulationSpec,
    pub homes: Vec<(f64, f64)>,
    pub stations: Vec<Station>,
    pub vehicles: Vec<Vehicle>,
    pub grid: PtGrid,
    pub u_real: Vec<ReferencePerson>,
    pub q_real: Vec<ReferencePerson>,
    /// Stations within this distance of the first population center belong to the DSO zone.
    pub zone_radius_m: f64,
}

impl World {
    pub fn station_counts(&self) -> Vec<(u32, usize)> {
        let mut counts: BTreeMap<u32, usize> = self.stations.iter().map(|s| (s.station_id, 0)).collect();
        for v in &self.vehicles {
            *counts.entry(v.home_station).or_default() += 1;
        }
        counts.into_iter().collect()
    }
}

/// Builds the base-year world: homes, station layout, fleet, accessibility grid
/// and the reference subscriber statistics.
pub fn build_world(spec: &WorldSpec, scale: f64, seed: u64) -> Result<World> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::Config(format!("scale must lie in (0, 1], got {scale}")));
    }
    let mut population = spec.population.clone();
    let shrink = scale.sqrt();
    population.centers.iter_mut().for_each(|c| c.sd *= shrink);

    let homes = sample_homes(&population, spec.home_sample, derive_seed(seed, "world-homes"))?;
    let n_stations = scaled(spec.base_stations, scale, 1);
    let placement = place_new_stations(&homes, n_stations, &[], derive_seed(seed, "world-stations"), 200, 1e-3)?;
    let mut stations: Vec<Station> = placement
        .centers
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Station::new(i as u32 + 1, x, y))
        .collect();

    let c0 = population.centers[0];
    let mut by_center: Vec<f64> = stations.iter().map(|s| (s.x - c0.x).hypot(s.y - c0.y)).collect();
    by_center.sort_by(f64::total_cmp);
    let in_zone = ((spec.dso_share * stations.len() as f64).round() as usize).clamp(1, stations.len());
    let zone_radius_m = by_center[in_zone - 1];
    for s in &mut stations {
        if (s.x - c0.x).hypot(s.y - c0.y) <= zone_radius_m {
            s.grid_zone_id = Some(1);
        }
    }

    let (u_real, q_real) = reference_people(spec, &population, &stations, derive_seed(seed, "world-reference"))?;
    let subscriber_homes: Vec<(f64, f64)> = u_real.iter().map(|p| (p.x, p.y)).collect();
    let counts = base_counts(&subscriber_homes, &stations, scaled(spec.base_vehicles, scale, stations.len()))?;
    let cats = assign_vehicle_categories(
        counts.iter().sum(),
        &crate::corpus::default_category_shares(),
        derive_seed(seed, "world-categories"),
    )?;
    let mut vehicles = Vec::new();
    for (s, &n) in stations.iter().zip(&counts) {
        for _ in 0..n {
            let id = vehicles.len() as u32;
            vehicles.push(Vehicle::of_category(id, s.station_id, cats[id as usize]));
        }
    }

    let grid = world_grid(spec, scale);
    Ok(World {
        spec: spec.clone(),
        scale,
        population,
        homes,
        stations,
        vehicles,
        grid,
        u_real,
        q_real,
        zone_radius_m,
    })
}

/// Non-fleet load of the DSO zone at `scale`, MW per step.
pub fn dso_load(spec: &WorldSpec, scale: f64, steps: usize) -> Vec<f64> {
    dso_profile(steps, spec.dso_base_mw * scale, spec.dso_peak_mw * scale)
}

/// Public transport accessibility of the scaled world, best near the
/// population centers.
pub fn world_grid(spec: &WorldSpec, scale: f64) -> PtGrid {
    let shrink = scale.sqrt();
    let radius: Vec<(f64, f64, f64)> = spec.population.centers.iter().map(|c| (c.x, c.y, 2.0 * c.sd * shrink)).collect();
    let (mut xmin, mut ymin, mut xmax, mut ymax) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y, r) in &radius {
        xmin = xmin.min(x - 3.0 * r);
        ymin = ymin.min(y - 3.0 * r);
        xmax = xmax.max(x + 3.0 * r);
        ymax = ymax.max(y + 3.0 * r);
    }
    PtGrid::from_centers(&radius, (xmin, ymin, xmax, ymax), spec.pt_cell_m * shrink.max(0.1))
}

/// One vehicle per station, the rest by largest remainder over the number of
/// subscriber homes closest to each station.
fn base_counts(homes: &[(f64, f64)], stations: &[Station], total: usize) -> Result<Vec<usize>> {
    let index: BTreeMap<u32, usize> = stations.iter().enumerate().map(|(i, s)| (s.station_id, i)).collect();
    let mut catchment = vec![0usize; stations.len()];
    for &(x, y) in homes {
        catchment[index[&nearest_station(x, y, stations)?.0]] += 1;
    }
    let extra = total.saturating_sub(stations.len());
    let sum: usize = catchment.iter().sum::<usize>().max(1);
    let quota: Vec<f64> = catchment.iter().map(|&c| extra as f64 * c as f64 / sum as f64).collect();
    let mut counts: Vec<usize> = quota.iter().map(|q| 1 + q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..stations.len()).collect();
    order.sort_by(|&a, &b| (quota[b] - quota[b].floor()).total_cmp(&(quota[a] - quota[a].floor())).then(a.cmp(&b)));
    let short = total.saturating_sub(counts.iter().sum());
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    Ok(counts)
}

const SUBSCRIBER_AGE: [f64; 6] = [0.5, 1.3, 1.5, 1.2, 0.8, 0.4];
const SUBSCRIBER_GENDER: [f64; 3] = [0.9, 1.1, 1.0];

/// A reference general population and the subscribers among it. Subscription
/// odds fall with distance to the nearest station and vary by age and gender.
fn reference_people(
    spec: &WorldSpec,
    population: &PopulationSpec,
    stations: &[Station],
    seed: u64,
) -> Result<(Vec<ReferencePerson>, Vec<ReferencePerson>)> {
    let homes = sample_homes(population, spec.reference_size, derive_seed(seed, "homes"))?;
    let ages = WeightedIndex::new(population.age_weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let genders = WeightedIndex::new(population.gender_weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut r = stream(seed, "people");
    let mut q = Vec::with_capacity(homes.len());
    let mut u = Vec::new();
    for (x, y) in homes {
        let age = ages.sample(&mut r);
        let g = genders.sample(&mut r);
        let p = ReferencePerson {
            age_group: age as u8 + 1,
            gender: Gender::ALL[g],
            x,
            y,
        };
        let (_, d) = nearest_station(x, y, stations)?;
        let odds = 0.25 * SUBSCRIBER_AGE[age] * SUBSCRIBER_GENDER[g] * (-d / spec.subscriber_range_m).exp();
        if r.random::<f64>() < odds.min(1.0) {
            u.push(p);
        }
        q.push(p);
    }
    Ok((u, q))
}

/// A named point in the scenario matrix, at full scale.
pub trait Preset: Send + Sync {
    fn id(&self) -> u8;
    fn name(&self) -> &str;
    fn config(&self) -> ScenarioConfig;
}

#[derive(Debug, Clone)]
pub struct GrowthPreset {
    pub id: u8,
    pub name: String,
    pub users: i64,
    pub vehicles: i64,
    pub stations: i64,
    pub base_stations: i64,
}

impl Preset for GrowthPreset {
    fn id(&self) -> u8 {
        self.id
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn config(&self) -> ScenarioConfig {
        ScenarioConfig::new(self.users, self.vehicles, self.stations - self.base_stations)
    }
}

#[derive(Default)]
pub struct PresetRegistry {
    presets: BTreeMap<u8, Box<dyn Preset>>,
}

impl PresetRegistry {
    /// Growth of the customer base by 1.15, 1.5 and 2.5 with proportional fleet,
    /// and three fleet roadmaps for the fast-growth case.
    pub fn standard() -> Self {
        let mut r = PresetRegistry::default();
        let base = WorldSpec::default().base_stations as i64;
        let table = [
            (1, "slow-user-centered", 115_000, 3500, 1750),
            (2, "intermediate-user-centered", 150_000, 4500, 1750),
            (3, "fast-user-centered", 250_000, 7500, 1750),
            (4, "fast-restrictive", 250_000, 5000, 1750),
            (5, "fast-v2g-affine", 250_000, 10_000, 1750),
            (6, "fast-expand", 250_000, 7500, 3000),
        ];
        for (id, name, users, vehicles, stations) in table {
            r.register(Box::new(GrowthPreset {
                id,
                name: name.to_string(),
                users,
                vehicles,
                stations,
                base_stations: base,
            }));
        }
        r
    }

    pub fn register(&mut self, p: Box<dyn Preset>) {
        self.presets.insert(p.id(), p);
    }

    pub fn get(&self, id: u8) -> Result<&dyn Preset> {
        self.presets
            .get(&id)
            .map(|p| p.as_ref())
            .ok_or_else(|| Error::InvalidInput(format!("unknown preset {id} (known: {:?})", self.ids())))
    }

    pub fn ids(&self) -> Vec<u8> {
        self.presets.keys().copied().collect()
    }
}

/// Multiplies the counts of a full-scale config by `scale`.
pub fn scale_config(config: &ScenarioConfig, scale: f64) -> ScenarioConfig {
    let s = |n: i64, min: i64| ((n as f64 * scale).round() as i64).max(min);
    ScenarioConfig {
        n_users: s(config.n_users, 1),
        v_desired: s(config.v_desired, 1),
        k_new_stations: s(config.k_new_stations, 0),
        ..config.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub users: usize,
    pub vehicles: usize,
    pub stations: usize,
    pub trips: usize,
    pub reservations: usize,
    pub count_rate: f64,
    pub time_rate: f64,
    /// Share of stations with at least one pickup.
    pub station_rate: f64,
    pub mean_origin_station_distance_m: f64,
    pub carsharing_share: f64,
    pub forced_returns: usize,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub stations: Vec<Station>,
    pub vehicles: Vec<Vehicle>,
    pub users: Vec<Agent>,
    pub trips: Vec<Trip>,
    pub reservations: Vec<Reservation>,
    pub log: Vec<LogEntry>,
    pub dso_load: Vec<f64>,
    pub summary: ScenarioSummary,
}

/// Adds `k` stations placed by fixed-center clustering of `homes`. New
/// stations join the grid zone of the nearest existing station.
pub fn place_stations(existing: &[Station], homes: &[(f64, f64)], k: usize, seed: u64) -> Result<(Vec<Station>, Placement)> {
    let fixed: Vec<(f64, f64)> = existing.iter().map(|s| (s.x, s.y)).collect();
    let placement = place_new_stations(homes, k, &fixed, derive_seed(seed, "new-stations"), 200, 1e-3)?;
    let mut stations = existing.to_vec();
    for mut s in new_station_records(existing, &placement.centers) {
        if !existing.is_empty() {
            let (near, _) = nearest_station(s.x, s.y, existing)?;
            s.grid_zone_id = existing.iter().find(|e| e.station_id == near).and_then(|e| e.grid_zone_id);
        }
        stations.push(s);
    }
    Ok((stations, placement))
}

/// Station set of a scenario: the base layout plus `k` new stations.
pub fn scenario_stations(world: &World, k: usize, seed: u64) -> Result<Vec<Station>> {
    Ok(place_stations(&world.stations, &world.homes, k, seed)?.0)
}

/// Scales `vehicles` to `v_desired` over `stations`; stations without
/// vehicles start from the default base count.
pub fn grow_fleet(vehicles: &[Vehicle], stations: &[Station], config: &ScenarioConfig, seed: u64) -> Result<(Vec<Vehicle>, FleetScalePlan)> {
    let mut base: BTreeMap<u32, usize> = BTreeMap::new();
    for v in vehicles {
        *base.entry(v.home_station).or_default() += 1;
    }
    let current: Vec<(u32, usize)> = stations
        .iter()
        .map(|s| (s.station_id, base.get(&s.station_id).copied().unwrap_or(NEW_STATION_BASE_COUNT)))
        .collect();
    let plan = scale_fleet(&current, config.v_desired as usize, FLEET_SIGMA, derive_seed(seed, "fleet"))?;
    let fleet = apply_plan(vehicles, &plan, &config.category_shares, derive_seed(seed, "fleet-categories"))?;
    Ok((fleet, plan))
}

pub fn scenario_fleet(world: &World, stations: &[Station], config: &ScenarioConfig, seed: u64) -> Result<Vec<Vehicle>> {
    Ok(grow_fleet(&world.vehicles, stations, config, seed)?.0)
}

/// Draws `n_users` subscribers from a base population with weights from the
/// reference sets, measured against `stations`.
pub fn sample_users(
    agents: &[Agent],
    trips: &[Trip],
    stations: &[Station],
    u_real: &[ReferencePerson],
    q_real: &[ReferencePerson],
    n_users: usize,
    seed: u64,
) -> Result<(Vec<Agent>, Vec<Trip>)> {
    let stats = PopulationStats::from_reference(u_real, q_real, stations)?;
    let weights = compute_sampling_weights(agents, stations, &stats)?;
    let users = sample_carsharing_users(agents, &weights, n_users, derive_seed(seed, "users"))?;
    let trips = trips_of(&users, trips);
    Ok((users, trips))
}

/// Size of the base population the users of a scenario are drawn from.
pub fn base_population_size(world: &World, n_users: usize) -> usize {
    n_users * world.spec.population_factor.max(1)
}

/// The base population depends only on its size and the seed.
pub fn base_population(world: &World, n: usize, seed: u64) -> Result<(Vec<Agent>, Vec<Trip>)> {
    generate_base_population(n, &world.population, &world.spec.templates, derive_seed(seed, "base-population"))
}

pub fn scenario_users(world: &World, stations: &[Station], n_users: usize, seed: u64) -> Result<(Vec<Agent>, Vec<Trip>)> {
    let (agents, trips) = base_population(world, base_population_size(world, n_users), seed)?;
    sample_users(&agents, &trips, stations, &world.u_real, &world.q_real, n_users, seed)
}

/// Runs one scenario end to end. `config` holds scaled counts.
pub fn run_scenario(world: &World, config: &ScenarioConfig, chooser: &dyn ModeChooser, seed: u64) -> Result<ScenarioRun> {
    let config = validate_scenario(config.clone())?;
    let stations = scenario_stations(world, config.k_new_stations as usize, seed)?;
    let vehicles = scenario_fleet(world, &stations, &config, seed)?;
    let (users, trips) = scenario_users(world, &stations, config.n_users as usize, seed)?;
    let sim = simulate_reservations(
        &trips,
        &users,
        &stations,
        &vehicles,
        chooser,
        &world.grid,
        SimSettings::default(),
        derive_seed(seed, "simulate"),
    )?;
    let mut stations = stations;
    let mut ds = crate::corpus::Dataset {
        stations: std::mem::take(&mut stations),
        vehicles,
        ..Default::default()
    };
    ds.link_vehicles();
    let steps = (DAY_MINUTES / config.timestep_minutes() as i64) as usize;
    let dso_load = dso_load(&world.spec, world.scale, steps);
    let summary = summarize(&ds.stations, &ds.vehicles, &users, &trips, &sim.reservations, &sim.log)?;
    Ok(ScenarioRun {
        config,
        stations: ds.stations,
        vehicles: ds.vehicles,
        users,
        trips,
        reservations: sim.reservations,
        log: sim.log,
        dso_load,
        summary,
    })
}

fn summarize(
    stations: &[Station],
    vehicles: &[Vehicle],
    users: &[Agent],
    trips: &[Trip],
    reservations: &[Reservation],
    log: &[LogEntry],
) -> Result<ScenarioSummary> {
    let fleet: Vec<u32> = vehicles.iter().map(|v| v.vehicle_id).collect();
    let u = utilization(reservations, &fleet, DAY_MINUTES);
    let mut visited: Vec<u32> = reservations.iter().map(|r| r.station_id).collect();
    visited.sort_unstable();
    visited.dedup();
    let mut dist = 0.0;
    for t in trips {
        dist += nearest_station(t.origin_x, t.origin_y, stations)?.1;
    }
    let cs = log.iter().filter(|l| l.predicted_mode == Mode::CarSharing).count();
    Ok(ScenarioSummary {
        users: users.len(),
        vehicles: vehicles.len(),
        stations: stations.len(),
        trips: trips.len(),
        reservations: reservations.len(),
        count_rate: u.count_rate,
        time_rate: u.time_rate,
        station_rate: visited.len() as f64 / stations.len().max(1) as f64,
        mean_origin_station_distance_m: if trips.is_empty() { 0.0 } else { dist / trips.len() as f64 },
        carsharing_share: if log.is_empty() { 0.0 } else { cs as f64 / log.len() as f64 },
        forced_returns: reservations.iter().filter(|r| r.forced_return).count(),
    })
}

/// Trips of a base population in the base world, labeled by sampling `rule`.
/// Station distances are measured with every station available.
pub fn labeled_corpus(world: &World, n_agents: usize, rule: &LogitRule, seed: u64) -> Result<(Vec<[f64; N_FEATURES]>, Vec<Mode>)> {
    let (agents, trips) = generate_base_population(n_agents, &world.population, &world.spec.templates, derive_seed(seed, "corpus-population"))?;
    let weekday = SimSettings::default().weekday;
    let mut r = stream(seed, "corpus-labels");
    let mut x = Vec::with_capacity(trips.len());
    let mut y = Vec::with_capacity(trips.len());
    for t in &trips {
        let a = &agents[t.agent_id as usize];
        let decision = crate::agentsim::compute_decision_time(t);
        let f = extract_features(t, a, &world.stations, |_| true, decision, &world.grid, weekday).to_vector();
        y.push(rule.sample(&f, &mut r));
        x.push(f);
    }
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_table_at_desk_scale() {
        let reg = PresetRegistry::standard();
        assert_eq!(reg.ids(), vec![1, 2, 3, 4, 5, 6]);
        let c = scale_config(&reg.get(3).unwrap().config(), DEFAULT_SCALE);
        assert_eq!((c.n_users, c.v_desired, c.k_new_stations), (2500, 75, 0));
        let c = scale_config(&reg.get(6).unwrap().config(), DEFAULT_SCALE);
        assert_eq!((c.n_users, c.v_desired, c.k_new_stations), (2500, 75, 13));
        assert!(reg.get(7).is_err());
    }

    #[test]
    fn base_counts_cover_every_station() {
        let stations = vec![Station::new(1, 0.0, 0.0), Station::new(2, 10.0, 0.0), Station::new(3, 100.0, 0.0)];
        let homes = vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (9.0, 0.0)];
        let counts = base_counts(&homes, &stations, 7).unwrap();
        assert_eq!(counts.iter().sum::<usize>(), 7);
        assert!(counts.iter().all(|&c| c >= 1));
        assert!(counts[0] > counts[1]);
    }
}
