//! Shared data model: stations, vehicles, agents, trips and reservations, plus
//! the CSV interchange format and scenario configuration.

mod config;
mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{
    default_category_shares, validate_scenario, ScenarioConfig, DEFAULT_PRICE_LEVELS, DEFAULT_TIMESTEP_MINUTES};
pub use io::{
    load_dataset, read_csv, read_dso_load, read_home_locations, read_reservations, write_csv,
    write_dataset, write_dso_load, write_home_locations, write_reservations,
};

/// Minutes in the simulated day.
pub const DAY_MINUTES: i64 = 1440;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Budget,
    Combi,
    Premium,
    Transporter,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Budget,
        Category::Combi,
        Category::Premium,
        Category::Transporter,
        Category::Other,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
    O,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::F, Gender::M, Gender::O];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PtSubscription {
    None,
    HalfFare,
    FullFare,
}

impl PtSubscription {
    pub const ALL: [PtSubscription; 3] = [
        PtSubscription::None,
        PtSubscription::HalfFare,
        PtSubscription::FullFare,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Home,
    Leisure,
    Work,
    Shopping,
    Education,
    Other,
}

impl Purpose {
    pub const ALL: [Purpose; 6] = [
        Purpose::Home,
        Purpose::Leisure,
        Purpose::Work,
        Purpose::Shopping,
        Purpose::Education,
        Purpose::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Purpose::Home => "home",
            Purpose::Leisure => "leisure",
            Purpose::Work => "work",
            Purpose::Shopping => "shopping",
            Purpose::Education => "education",
            Purpose::Other => "other",
        };
        f.write_str(s)
    }
}

/// A charging-capable depot. `vehicle_ids` is derived from the vehicle table.
#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub station_id: u32,
    pub x: f64,
    pub y: f64,
    pub vehicle_ids: Vec<u32>,
    pub grid_zone_id: Option<u32>,
}

impl Station {
    pub fn new(station_id: u32, x: f64, y: f64) -> Self {
        Station {
            station_id,
            x,
            y,
            vehicle_ids: Vec::new(),
            grid_zone_id: None,
        }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub vehicle_id: u32,
    #[serde(rename = "station_id")]
    pub home_station: u32,
    pub category: Category,
    #[serde(rename = "battery_kwh")]
    pub battery_capacity: f64,
    #[serde(rename = "max_charge_kw")]
    pub max_charge_power: f64,
    #[serde(rename = "max_discharge_kw")]
    pub max_discharge_power: f64,
    #[serde(rename = "consumption_kwh_per_km")]
    pub consumption: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl Vehicle {
    /// The EV model assigned to a vehicle category, with default SOC bounds.
    pub fn of_category(vehicle_id: u32, home_station: u32, category: Category) -> Self {
        let (battery, charge, discharge, consumption) = match category {
            Category::Budget => (36.8, 7.2, 7.2, 0.14),
            Category::Combi => (58.0, 11.0, 11.0, 0.17),
            Category::Premium => (75.0, 11.0, 11.0, 0.16),
            Category::Transporter => (90.0, 11.0, 11.0, 0.27),
            Category::Other => (50.0, 11.0, 11.0, 0.18),
        };
        Vehicle {
            vehicle_id,
            home_station,
            category,
            battery_capacity: battery,
            max_charge_power: charge,
            max_discharge_power: discharge,
            consumption,
            soc_min: 0.1,
            soc_max: 0.95,
        }
    }

    pub fn usable_energy(&self) -> f64 {
        (self.soc_max - self.soc_min) * self.battery_capacity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub agent_id: u32,
    pub age_group: u8,
    pub gender: Gender,
    pub home_x: f64,
    pub home_y: f64,
    pub car_access: bool,
    pub pt_subscription: PtSubscription,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub trip_id: u32,
    pub agent_id: u32,
    pub origin_x: f64,
    pub origin_y: f64,
    pub dest_x: f64,
    pub dest_y: f64,
    pub purpose_origin: Purpose,
    pub purpose_dest: Purpose,
    /// Start of the activity at the destination, minutes since midnight.
    pub t_dest_start: i64,
    pub distance_m: f64,
}

impl Trip {
    pub fn beeline_m(&self) -> f64 {
        (self.dest_x - self.origin_x).hypot(self.dest_y - self.origin_y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservation {
    pub reservation_id: u32,
    pub vehicle_id: u32,
    pub agent_id: u32,
    pub station_id: u32,
    pub t_start: i64,
    pub t_end: i64,
    pub drive_km: f64,
    /// Set when the booking was closed by the end-of-day return rule.
    #[serde(default)]
    pub forced_return: bool,
}

impl Reservation {
    pub fn duration_minutes(&self) -> i64 {
        self.t_end - self.t_start
    }
}

/// Everything `load_dataset` reads from a directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub stations: Vec<Station>,
    pub vehicles: Vec<Vehicle>,
    pub agents: Vec<Agent>,
    pub trips: Vec<Trip>,
    pub reservations: Vec<Reservation>,
    /// DSO load in MW, one value per timestep.
    pub dso_load: Vec<f64>,
}

impl Dataset {
    /// Fills `Station::vehicle_ids` from the vehicle table, in vehicle row order.
    pub fn link_vehicles(&mut self) {
        let index: HashMap<u32, usize> = self
            .stations
            .iter()
            .enumerate()
            .map(|(i, s)| (s.station_id, i))
            .collect();
        for s in &mut self.stations {
            s.vehicle_ids.clear();
        }
        for v in &self.vehicles {
            if let Some(&i) = index.get(&v.home_station) {
                self.stations[i].vehicle_ids.push(v.vehicle_id);
            }
        }
    }

    /// Checks every type invariant. References are checked against a collection
    /// only when that collection is non-empty.
    pub fn validate(&self) -> Result<()> {
        let mut station_ids = BTreeSet::new();
        for s in &self.stations {
            if !station_ids.insert(s.station_id) {
                return Err(Error::invariant("station", s.station_id, "duplicate station_id"));
            }
            if !s.x.is_finite() || !s.y.is_finite() {
                return Err(Error::invariant("station", s.station_id, "non-finite coordinates"));
            }
        }

        let mut vehicle_ids = BTreeSet::new();
        for v in &self.vehicles {
            if !vehicle_ids.insert(v.vehicle_id) {
                return Err(Error::invariant(
                    "vehicle",
                    v.vehicle_id,
                    "vehicle_id appears more than once in the fleet",
                ));
            }
            validate_vehicle(v)?;
            if !self.stations.is_empty() && !station_ids.contains(&v.home_station) {
                return Err(Error::invariant(
                    "vehicle",
                    v.vehicle_id,
                    format!("unknown station {}", v.home_station),
                ));
            }
        }
        for s in &self.stations {
            let mut seen = BTreeSet::new();
            for id in &s.vehicle_ids {
                if !seen.insert(*id) {
                    return Err(Error::invariant("vehicle", id, "listed twice at a station"));
                }
            }
        }

        let mut agent_ids = BTreeSet::new();
        for a in &self.agents {
            if !agent_ids.insert(a.agent_id) {
                return Err(Error::invariant("agent", a.agent_id, "duplicate agent_id"));
            }
            if !(1..=6).contains(&a.age_group) {
                return Err(Error::invariant(
                    "agent",
                    a.agent_id,
                    format!("age_group {} outside 1..6", a.age_group),
                ));
            }
            if !a.home_x.is_finite() || !a.home_y.is_finite() {
                return Err(Error::invariant("agent", a.agent_id, "non-finite home location"));
            }
        }

        let mut trip_ids = BTreeSet::new();
        for t in &self.trips {
            if !trip_ids.insert(t.trip_id) {
                return Err(Error::invariant("trip", t.trip_id, "duplicate trip_id"));
            }
            validate_trip(t)?;
            if !self.agents.is_empty() && !agent_ids.contains(&t.agent_id) {
                return Err(Error::invariant(
                    "trip",
                    t.trip_id,
                    format!("unknown agent {}", t.agent_id),
                ));
            }
        }

        validate_reservations(&self.reservations)?;
        for r in &self.reservations {
            if !self.vehicles.is_empty() && !vehicle_ids.contains(&r.vehicle_id) {
                return Err(Error::invariant(
                    "reservation",
                    r.reservation_id,
                    format!("unknown vehicle {}", r.vehicle_id),
                ));
            }
            if !self.agents.is_empty() && !agent_ids.contains(&r.agent_id) {
                return Err(Error::invariant(
                    "reservation",
                    r.reservation_id,
                    format!("unknown agent {}", r.agent_id),
                ));
            }
            if !self.stations.is_empty() && !station_ids.contains(&r.station_id) {
                return Err(Error::invariant(
                    "reservation",
                    r.reservation_id,
                    format!("unknown station {}", r.station_id),
                ));
            }
        }

        for (i, v) in self.dso_load.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invariant("dso_load", i, "non-finite load"));
            }
        }
        Ok(())
    }
}

pub(crate) fn validate_vehicle(v: &Vehicle) -> Result<()> {
    let id = v.vehicle_id;
    if !(v.battery_capacity > 0.0) || !v.battery_capacity.is_finite() {
        return Err(Error::invariant("vehicle", id, "battery_kwh must be > 0"));
    }
    if !(v.max_charge_power >= 0.0) || !(v.max_discharge_power >= 0.0) {
        return Err(Error::invariant("vehicle", id, "power limits must be >= 0"));
    }
    if !(v.consumption > 0.0) {
        return Err(Error::invariant("vehicle", id, "consumption must be > 0"));
    }
    if !(0.0 <= v.soc_min && v.soc_min < v.soc_max && v.soc_max <= 1.0) {
        return Err(Error::invariant(
            "vehicle",
            id,
            "soc bounds must satisfy 0 <= soc_min < soc_max <= 1",
        ));
    }
    Ok(())
}

pub(crate) fn validate_trip(t: &Trip) -> Result<()> {
    let coords = [t.origin_x, t.origin_y, t.dest_x, t.dest_y];
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::invariant("trip", t.trip_id, "non-finite coordinates"));
    }
    if !(t.distance_m >= 0.0) {
        return Err(Error::invariant("trip", t.trip_id, "negative distance"));
    }
    if (t.distance_m - t.beeline_m()).abs() > 1.0 {
        return Err(Error::invariant(
            "trip",
            t.trip_id,
            format!(
                "distance_m {} differs from beeline {:.3} by more than 1 m",
                t.distance_m,
                t.beeline_m()
            ),
        ));
    }
    Ok(())
}

/// `t_start < t_end`, non-negative km and pairwise disjoint intervals per vehicle
/// (half-open, so back-to-back bookings are allowed).
pub fn validate_reservations(reservations: &[Reservation]) -> Result<()> {
    let mut ids = BTreeSet::new();
    let mut by_vehicle: BTreeMap<u32, Vec<&Reservation>> = BTreeMap::new();
    for r in reservations {
        if !ids.insert(r.reservation_id) {
            return Err(Error::invariant("reservation", r.reservation_id, "duplicate reservation_id"));
        }
        if r.t_start >= r.t_end {
            return Err(Error::invariant(
                "reservation",
                r.reservation_id,
                format!("t_start {} is not before t_end {}", r.t_start, r.t_end),
            ));
        }
        if !(r.drive_km >= 0.0) {
            return Err(Error::invariant("reservation", r.reservation_id, "negative drive_km"));
        }
        by_vehicle.entry(r.vehicle_id).or_default().push(r);
    }
    for list in by_vehicle.values_mut() {
        list.sort_by_key(|r| (r.t_start, r.t_end, r.reservation_id));
        for pair in list.windows(2) {
            if pair[1].t_start < pair[0].t_end {
                return Err(Error::invariant(
                    "reservation",
                    pair[1].reservation_id,
                    format!(
                        "overlaps reservation {} on vehicle {}",
                        pair[0].reservation_id, pair[0].vehicle_id
                    ),
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trip(id: u32, ox: f64, oy: f64, dx: f64, dy: f64) -> Trip {
        Trip {
            trip_id: id,
            agent_id: 1,
            origin_x: ox,
            origin_y: oy,
            dest_x: dx,
            dest_y: dy,
            purpose_origin: Purpose::Home,
            purpose_dest: Purpose::Work,
            t_dest_start: 480,
            distance_m: (dx - ox).hypot(dy - oy),
        }
    }

    #[test]
    fn trip_distance_must_match_beeline() {
        let mut t = trip(1, 0.0, 0.0, 300.0, 400.0);
        assert!(validate_trip(&t).is_ok());
        t.distance_m = 501.5;
        let err = validate_trip(&t).unwrap_err().to_string();
        assert!(err.contains("trip 1"), "{err}");
    }

    #[test]
    fn overlapping_reservations_are_rejected() {
        let r = |id, s, e| Reservation {
            reservation_id: id,
            vehicle_id: 4,
            agent_id: 1,
            station_id: 1,
            t_start: s,
            t_end: e,
            drive_km: 1.0,
            forced_return: false,
        };
        assert!(validate_reservations(&[r(1, 0, 60), r(2, 60, 90)]).is_ok());
        let err = validate_reservations(&[r(1, 0, 60), r(2, 59, 90)]).unwrap_err();
        assert!(err.to_string().contains("reservation 2"));
        assert!(validate_reservations(&[r(1, 60, 60)]).is_err());
    }

    #[test]
    fn vehicle_soc_bounds() {
        let mut v = Vehicle::of_category(1, 1, Category::Budget);
        assert!(validate_vehicle(&v).is_ok());
        v.soc_min = 0.95;
        assert!(validate_vehicle(&v).is_err());
    }
}
