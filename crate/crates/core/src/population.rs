//! Synthetic base population, nearest-station lookup and stratified sampling of
//! car sharing subscribers.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{read_csv, write_csv, Agent, Gender, PtSubscription, Purpose, Station, Trip};
use crate::error::{Error, Result};
use crate::rng;

/// One step of an activity chain: the activity at the destination and the
/// normal distribution of its start time (minutes).
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateStep {
    pub purpose: Purpose,
    pub start_mean: f64,
    pub start_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityTemplate {
    pub weight: f64,
    /// Destinations after leaving home. The last one must be `Purpose::Home`.
    pub steps: Vec<TemplateStep>,
    /// Lognormal parameters of the displacement to each out-of-home activity.
    pub distance_mu: f64,
    pub distance_sigma: f64,
}

const DISTANCE_MU: f64 = 8.758;
const DISTANCE_SIGMA: f64 = 1.127;

fn step(purpose: Purpose, start_mean: f64, start_sd: f64) -> TemplateStep {
    TemplateStep { purpose, start_mean, start_sd }
}

impl ActivityTemplate {
    pub fn new(weight: f64, steps: Vec<TemplateStep>) -> Self {
        ActivityTemplate {
            weight,
            steps,
            distance_mu: DISTANCE_MU,
            distance_sigma: DISTANCE_SIGMA,
        }
    }

    fn check(&self) -> Result<()> {
        match self.steps.last() {
            Some(s) if s.purpose == Purpose::Home => {}
            _ => return Err(Error::InvalidInput("activity template must end at home".into())),
        }
        if self.steps.len() < 2 || !(self.weight >= 0.0) || !(self.distance_sigma >= 0.0) {
            return Err(Error::InvalidInput("malformed activity template".into()));
        }
        Ok(())
    }
}

pub fn default_templates() -> Vec<ActivityTemplate> {
    use Purpose::*;
    vec![
        ActivityTemplate::new(0.35, vec![step(Work, 480.0, 60.0), step(Home, 1050.0, 75.0)]),
        ActivityTemplate::new(0.25, vec![step(Leisure, 960.0, 180.0), step(Home, 1260.0, 90.0)]),
        ActivityTemplate::new(0.15, vec![step(Shopping, 660.0, 150.0), step(Home, 840.0, 150.0)]),
        ActivityTemplate::new(
            0.10,
            vec![step(Work, 480.0, 60.0), step(Leisure, 1080.0, 60.0), step(Home, 1320.0, 60.0)],
        ),
        ActivityTemplate::new(0.05, vec![step(Education, 480.0, 45.0), step(Home, 960.0, 90.0)]),
        ActivityTemplate::new(
            0.10,
            vec![step(Other, 600.0, 120.0), step(Shopping, 780.0, 120.0), step(Home, 900.0, 120.0)],
        ),
    ]
}

/// A Gaussian population center for home locations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomeCenter {
    pub x: f64,
    pub y: f64,
    pub sd: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub centers: Vec<HomeCenter>,
    pub age_weights: [f64; 6],
    pub gender_weights: [f64; 3],
    pub car_access: f64,
    pub pt_weights: [f64; 3],
}

impl Default for PopulationSpec {
    fn default() -> Self {
        let c = |x, y, sd, weight| HomeCenter { x, y, sd, weight };
        PopulationSpec {
            centers: vec![
                c(0.0, 0.0, 6000.0, 0.35),
                c(60_000.0, 10_000.0, 4000.0, 0.2),
                c(-45_000.0, 30_000.0, 4000.0, 0.15),
                c(20_000.0, -50_000.0, 3500.0, 0.15),
                c(-60_000.0, -30_000.0, 3000.0, 0.15),
            ],
            age_weights: [0.12, 0.17, 0.19, 0.19, 0.17, 0.16],
            gender_weights: [0.495, 0.495, 0.01],
            car_access: 0.6,
            pt_weights: [0.5, 0.35, 0.15],
        }
    }
}

/// Travel minutes at 50 km/h, as used for the decision-time rule.
fn travel_minutes(distance_m: f64) -> f64 {
    distance_m * 3.0 / 2500.0
}

pub fn sample_home<R: Rng>(spec: &PopulationSpec, centers: &WeightedIndex<f64>, rng: &mut R) -> (f64, f64) {
    let c = spec.centers[centers.sample(rng)];
    let n = Normal::new(0.0, c.sd).expect("finite sd");
    (c.x + n.sample(rng), c.y + n.sample(rng))
}

/// Draws `n` home locations from the mixture of population centers.
pub fn sample_homes(spec: &PopulationSpec, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let centers = WeightedIndex::new(spec.centers.iter().map(|c| c.weight))
        .map_err(|e| Error::InvalidInput(format!("population centers: {e}")))?;
    let mut r = rng::stream(seed, "homes");
    Ok((0..n).map(|_| sample_home(spec, &centers, &mut r)).collect())
}

/// Generates `n` agents with one day of home-based trips each. Agent and trip ids
/// are dense and start at 0.
pub fn generate_base_population(
    n: usize,
    spec: &PopulationSpec,
    templates: &[ActivityTemplate],
    seed: u64,
) -> Result<(Vec<Agent>, Vec<Trip>)> {
    if n == 0 {
        return Err(Error::InvalidInput("population size must be positive".into()));
    }
    if templates.is_empty() {
        return Err(Error::InvalidInput("empty activity template set".into()));
    }
    for t in templates {
        t.check()?;
    }
    let pick_template = WeightedIndex::new(templates.iter().map(|t| t.weight))
        .map_err(|e| Error::InvalidInput(format!("template weights: {e}")))?;
    let centers = WeightedIndex::new(spec.centers.iter().map(|c| c.weight))
        .map_err(|e| Error::InvalidInput(format!("population centers: {e}")))?;
    let ages = WeightedIndex::new(spec.age_weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let genders = WeightedIndex::new(spec.gender_weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let pts = WeightedIndex::new(spec.pt_weights).map_err(|e| Error::InvalidInput(e.to_string()))?;

    let mut r = rng::stream(seed, "population");
    let mut agents = Vec::with_capacity(n);
    let mut trips = Vec::new();
    for agent_id in 0..n as u32 {
        let (home_x, home_y) = sample_home(spec, &centers, &mut r);
        let agent = Agent {
            agent_id,
            age_group: ages.sample(&mut r) as u8 + 1,
            gender: Gender::ALL[genders.sample(&mut r)],
            home_x,
            home_y,
            car_access: r.random_bool(spec.car_access),
            pt_subscription: PtSubscription::ALL[pts.sample(&mut r)],
        };
        let template = &templates[pick_template.sample(&mut r)];
        chain_trips(&agent, template, &mut r, &mut trips);
        agents.push(agent);
    }
    Ok((agents, trips))
}

fn chain_trips<R: Rng>(agent: &Agent, template: &ActivityTemplate, r: &mut R, out: &mut Vec<Trip>) {
    let displacement = LogNormal::new(template.distance_mu, template.distance_sigma).expect("valid lognormal");
    let mut locations = Vec::with_capacity(template.steps.len());
    let (mut x, mut y) = (agent.home_x, agent.home_y);
    for s in &template.steps {
        if s.purpose == Purpose::Home {
            (x, y) = (agent.home_x, agent.home_y);
        } else {
            let d: f64 = displacement.sample(r);
            let angle = r.random_range(0.0..std::f64::consts::TAU);
            x += d * angle.cos();
            y += d * angle.sin();
        }
        locations.push((x, y));
    }

    let mut starts = Vec::with_capacity(template.steps.len());
    let mut prev_loc = (agent.home_x, agent.home_y);
    let mut prev_start = f64::NEG_INFINITY;
    for (s, &loc) in template.steps.iter().zip(&locations) {
        let dist = (loc.0 - prev_loc.0).hypot(loc.1 - prev_loc.1);
        let drawn = s.start_mean + s.start_sd * Normal::new(0.0, 1.0).unwrap().sample(r);
        // at least 30 min at the previous activity before leaving
        let earliest = prev_start + 30.0 + travel_minutes(dist) + 10.0;
        let t = drawn.max(earliest).round().max(1.0);
        starts.push(t as i64);
        prev_start = t;
        prev_loc = loc;
    }
    let last = starts.len() - 1;
    starts[last] = starts[last].min(1439);
    for i in (0..last).rev() {
        starts[i] = starts[i].min(starts[i + 1] - 1);
    }

    let mut origin = (agent.home_x, agent.home_y);
    let mut purpose_origin = Purpose::Home;
    for ((s, &dest), &t) in template.steps.iter().zip(&locations).zip(&starts) {
        out.push(Trip {
            trip_id: out.len() as u32,
            agent_id: agent.agent_id,
            origin_x: origin.0,
            origin_y: origin.1,
            dest_x: dest.0,
            dest_y: dest.1,
            purpose_origin,
            purpose_dest: s.purpose,
            t_dest_start: t,
            distance_m: (dest.0 - origin.0).hypot(dest.1 - origin.1),
        });
        origin = dest;
        purpose_origin = s.purpose;
    }
}

/// Closest station by Euclidean distance; ties go to the smallest station_id.
pub fn nearest_station(x: f64, y: f64, stations: &[Station]) -> Result<(u32, f64)> {
    nearest_matching(x, y, stations, |_| true)
        .ok_or_else(|| Error::InvalidInput("nearest_station: empty station set".into()))
}

pub(crate) fn nearest_matching<F: Fn(&Station) -> bool>(
    x: f64,
    y: f64,
    stations: &[Station],
    keep: F,
) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for s in stations.iter().filter(|s| keep(s)) {
        let d2 = (s.x - x).powi(2) + (s.y - y).powi(2);
        best = match best {
            Some((id, b)) if b < d2 || (b == d2 && id < s.station_id) => Some((id, b)),
            _ => Some((s.station_id, d2)),
        };
    }
    best.map(|(id, d2)| (id, d2.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumKind {
    Age,
    Gender,
    Station,
}

/// Stratum counts of the reference subscriber set (U) and general population (Q).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationStats {
    pub age: BTreeMap<u8, (f64, f64)>,
    pub gender: BTreeMap<Gender, (f64, f64)>,
    pub station: BTreeMap<u32, (f64, f64)>,
}

/// A reference person: the attributes that define sampling strata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePerson {
    pub age_group: u8,
    pub gender: Gender,
    pub x: f64,
    pub y: f64,
}

impl From<&Agent> for ReferencePerson {
    fn from(a: &Agent) -> Self {
        ReferencePerson {
            age_group: a.age_group,
            gender: a.gender,
            x: a.home_x,
            y: a.home_y,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsRow {
    stratum_kind: StratumKind,
    stratum_value: String,
    count_u_real: f64,
    count_q_real: f64,
}

impl PopulationStats {
    /// Counts strata of two reference lists, assigning nearest stations from `stations`.
    pub fn from_reference(u_real: &[ReferencePerson], q_real: &[ReferencePerson], stations: &[Station]) -> Result<Self> {
        let mut stats = PopulationStats::default();
        for (people, is_u) in [(u_real, true), (q_real, false)] {
            for p in people {
                let (sid, _) = nearest_station(p.x, p.y, stations)?;
                let bump = |e: &mut (f64, f64)| if is_u { e.0 += 1.0 } else { e.1 += 1.0 };
                bump(stats.age.entry(p.age_group).or_default());
                bump(stats.gender.entry(p.gender).or_default());
                bump(stats.station.entry(sid).or_default());
            }
        }
        stats.check()?;
        Ok(stats)
    }

    /// Every stratum seen in U must also be seen in Q.
    pub fn check(&self) -> Result<()> {
        let bad = |u: f64, q: f64| u < 0.0 || q < 0.0 || !u.is_finite() || !q.is_finite() || (u > 0.0 && q == 0.0);
        for (k, &(u, q)) in &self.age {
            if bad(u, q) {
                return Err(Error::invariant("age stratum", k, "invalid counts"));
            }
        }
        for (k, &(u, q)) in &self.gender {
            if bad(u, q) {
                return Err(Error::invariant("gender stratum", format!("{k:?}"), "invalid counts"));
            }
        }
        for (k, &(u, q)) in &self.station {
            if bad(u, q) {
                return Err(Error::invariant("station stratum", k, "invalid counts"));
            }
        }
        Ok(())
    }

    /// Multiplies every U count by `c`.
    pub fn scale_u(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.age.values_mut().for_each(|e| e.0 *= c);
        s.gender.values_mut().for_each(|e| e.0 *= c);
        s.station.values_mut().for_each(|e| e.0 *= c);
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let rows: Vec<StatsRow> = read_csv(path)?
            .ok_or_else(|| Error::InvalidInput(format!("missing input {}", path.display())))?;
        let mut s = PopulationStats::default();
        for row in rows {
            let counts = (row.count_u_real, row.count_q_real);
            let bad = || Error::invariant("stratum", &row.stratum_value, "unparseable stratum value");
            match row.stratum_kind {
                StratumKind::Age => {
                    s.age.insert(row.stratum_value.parse().map_err(|_| bad())?, counts);
                }
                StratumKind::Gender => {
                    let g = match row.stratum_value.as_str() {
                        "F" => Gender::F,
                        "M" => Gender::M,
                        "O" => Gender::O,
                        _ => return Err(bad()),
                    };
                    s.gender.insert(g, counts);
                }
                StratumKind::Station => {
                    s.station.insert(row.stratum_value.parse().map_err(|_| bad())?, counts);
                }
            }
        }
        s.check()?;
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut rows = Vec::new();
        let mut push = |kind, value: String, (u, q): (f64, f64)| {
            rows.push(StatsRow {
                stratum_kind: kind,
                stratum_value: value,
                count_u_real: u,
                count_q_real: q,
            })
        };
        for (k, &c) in &self.age {
            push(StratumKind::Age, k.to_string(), c);
        }
        for (k, &c) in &self.gender {
            push(StratumKind::Gender, format!("{k:?}"), c);
        }
        for (k, &c) in &self.station {
            push(StratumKind::Station, k.to_string(), c);
        }
        write_csv(path, &rows, &["stratum_kind", "stratum_value", "count_u_real", "count_q_real"])
    }
}

fn ratio<K: Ord>(map: &BTreeMap<K, (f64, f64)>, key: &K) -> Option<f64> {
    match map.get(key) {
        Some(&(u, q)) if q > 0.0 => Some(u / q),
        _ => None,
    }
}

/// Unnormalized weight of one stratum triple, or `None` when a denominator is missing.
pub fn raw_weight(stats: &PopulationStats, age: u8, gender: Gender, station: u32) -> Option<f64> {
    Some(ratio(&stats.age, &age)? * ratio(&stats.gender, &gender)? * ratio(&stats.station, &station)?)
}

/// Normalized sampling weights for `agents`, using each agent's nearest station in `stations`.
pub fn compute_sampling_weights(agents: &[Agent], stations: &[Station], stats: &PopulationStats) -> Result<Vec<f64>> {
    let mut missing = 0usize;
    let mut w = Vec::with_capacity(agents.len());
    for a in agents {
        let (sid, _) = nearest_station(a.home_x, a.home_y, stations)?;
        match raw_weight(stats, a.age_group, a.gender, sid) {
            Some(x) => w.push(x),
            None => {
                missing += 1;
                w.push(0.0);
            }
        }
    }
    if missing > 0 {
        warn!("{missing} agents fall in strata without reference population; weight set to 0");
    }
    normalize_weights(w)
}

pub fn normalize_weights(mut w: Vec<f64>) -> Result<Vec<f64>> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidInput("all sampling weights are zero".into()));
    }
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// Weighted sampling without replacement (exponential keys). Returns the chosen
/// indices in ascending order.
pub fn sample_indices(weights: &[f64], n: usize, seed: u64) -> Result<Vec<usize>> {
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    if n > positive {
        return Err(Error::InvalidInput(format!(
            "cannot sample {n} users from {positive} agents with positive weight"
        )));
    }
    let mut r = rng::stream(seed, "sample-users");
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(positive);
    for (i, &w) in weights.iter().enumerate() {
        let u: f64 = r.random();
        if w > 0.0 {
            keyed.push(((1.0 - u).ln() / w, i));
        }
    }
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = keyed.into_iter().take(n).map(|(_, i)| i).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

pub fn sample_carsharing_users(agents: &[Agent], weights: &[f64], n: usize, seed: u64) -> Result<Vec<Agent>> {
    if agents.len() != weights.len() {
        return Err(Error::InvalidInput("weights and agents differ in length".into()));
    }
    Ok(sample_indices(weights, n, seed)?
        .into_iter()
        .map(|i| agents[i].clone())
        .collect())
}

/// Keeps the trips of the given agents, preserving order.
pub fn trips_of(agents: &[Agent], trips: &[Trip]) -> Vec<Trip> {
    let ids: HashMap<u32, ()> = agents.iter().map(|a| (a.agent_id, ())).collect();
    trips.iter().filter(|t| ids.contains_key(&t.agent_id)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stations(points: &[(u32, f64, f64)]) -> Vec<Station> {
        points.iter().map(|&(id, x, y)| Station::new(id, x, y)).collect()
    }

    #[test]
    fn single_template_chain() {
        let t = ActivityTemplate::new(
            1.0,
            vec![step(Purpose::Work, 480.0, 30.0), step(Purpose::Home, 1020.0, 30.0)],
        );
        let (agents, trips) = generate_base_population(1, &PopulationSpec::default(), &[t], 5).unwrap();
        assert_eq!(trips.len(), 2);
        let a = &agents[0];
        assert_eq!((trips[1].dest_x, trips[1].dest_y), (a.home_x, a.home_y));
        assert_eq!((trips[0].origin_x, trips[0].origin_y), (a.home_x, a.home_y));
        assert!(trips[0].t_dest_start < trips[1].t_dest_start);
    }

    #[test]
    fn templates_must_end_home() {
        let t = ActivityTemplate::new(1.0, vec![step(Purpose::Work, 480.0, 30.0), step(Purpose::Leisure, 900.0, 30.0)]);
        assert!(generate_base_population(3, &PopulationSpec::default(), &[t], 1).is_err());
        assert!(generate_base_population(3, &PopulationSpec::default(), &[], 1).is_err());
    }

    #[test]
    fn nearest_station_ties_take_smallest_id() {
        let s = stations(&[(7, 1.0, 0.0), (3, -1.0, 0.0)]);
        assert_eq!(nearest_station(0.0, 0.0, &s).unwrap(), (3, 1.0));
        assert_eq!(nearest_station(1.0, 0.0, &s).unwrap(), (7, 0.0));
        assert!(nearest_station(0.0, 0.0, &[]).is_err());
    }

    #[test]
    fn four_person_fixture_weight() {
        let s = stations(&[(1, 0.0, 0.0), (2, 100.0, 0.0)]);
        let p = |age, gender, x| ReferencePerson { age_group: age, gender, x, y: 0.0 };
        let u = [p(2, Gender::F, 0.0)];
        let q = [p(2, Gender::F, 0.0), p(2, Gender::M, 100.0), p(3, Gender::F, 100.0), p(3, Gender::M, 0.0)];
        let stats = PopulationStats::from_reference(&u, &q, &s).unwrap();
        assert_eq!(raw_weight(&stats, 2, Gender::F, 1), Some(0.125));
        assert_eq!(raw_weight(&stats, 3, Gender::F, 1), Some(0.0));
    }

    #[test]
    fn sampling_all_positive_takes_all() {
        let w = [0.2, 0.0, 0.5, 0.3];
        assert_eq!(sample_indices(&w, 3, 9).unwrap(), vec![0, 2, 3]);
        assert!(sample_indices(&w, 4, 9).is_err());
    }

    #[test]
    fn stats_csv_round_trip() {
        let mut stats = PopulationStats::default();
        stats.age.insert(1, (2.0, 10.0));
        stats.gender.insert(Gender::O, (0.0, 3.0));
        stats.station.insert(12, (5.0, 7.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("population_stats.csv");
        stats.write(&path).unwrap();
        assert_eq!(PopulationStats::read(&path).unwrap(), stats);
    }
}
