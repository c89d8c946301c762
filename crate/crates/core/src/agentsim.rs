//! Reservation simulation over one day: agents decide on a mode before each
//! trip, pick up a shared car at the nearest station with an idle vehicle and
//! keep it until they return to the pickup location.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_csv, Agent, Reservation, Station, Trip, Vehicle, DAY_MINUTES};
use crate::error::{Error, Result};
use crate::modechoice::{extract_features, Mode, ModeChooser, PtGrid, NO_STATION_DISTANCE_M};
use crate::population::nearest_matching;
use crate::rng;

/// Location tolerance for recognising a return to the pickup point.
pub const RETURN_TOLERANCE_M: f64 = 1.0;
pub const BUFFER_MINUTES: i64 = 10;

/// Activity start minus travel time at 50 km/h minus a 10 minute buffer,
/// rounded down to the minute and clamped at 0.
pub fn compute_decision_time(trip: &Trip) -> i64 {
    let travel = trip.distance_m * 3.0 / 2500.0;
    let t = trip.t_dest_start - BUFFER_MINUTES - (travel - 1e-9).ceil() as i64;
    if t < 0 {
        warn!("trip {}: decision time {t} clamped to 0", trip.trip_id);
        0
    } else {
        t
    }
}

/// One leg of a holding, before merging.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSegment {
    pub trip_id: u32,
    pub agent_id: u32,
    pub vehicle_id: u32,
    pub station_id: u32,
    pub t_start: i64,
    pub t_end: i64,
    pub drive_km: f64,
    pub forced_return: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub trip_id: u32,
    pub t_decision: i64,
    pub predicted_mode: Mode,
    /// Distance to the nearest station with an idle vehicle; empty when the agent
    /// already held a car.
    pub station_distance_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub raw: Vec<RawSegment>,
    pub reservations: Vec<Reservation>,
    pub log: Vec<LogEntry>,
}

#[derive(Debug, Clone, Copy)]
pub struct SimSettings {
    /// Weekday of the simulated day (0 = Monday).
    pub weekday: u8,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings { weekday: 2 }
    }
}

struct Holding {
    vehicle_id: u32,
    station_id: u32,
    pickup: (f64, f64),
    last_end: i64,
    last_pos: (f64, f64),
}

struct VehicleState {
    held: bool,
    free_at: i64,
}

pub fn simulate_reservations(
    trips: &[Trip],
    agents: &[Agent],
    stations: &[Station],
    vehicles: &[Vehicle],
    chooser: &dyn ModeChooser,
    grid: &PtGrid,
    settings: SimSettings,
    seed: u64,
) -> Result<SimOutput> {
    let agent_by_id: HashMap<u32, &Agent> = agents.iter().map(|a| (a.agent_id, a)).collect();
    let station_index: HashMap<u32, usize> = stations.iter().enumerate().map(|(i, s)| (s.station_id, i)).collect();
    let mut by_station: Vec<Vec<u32>> = vec![Vec::new(); stations.len()];
    let mut vstate: BTreeMap<u32, VehicleState> = BTreeMap::new();
    for v in vehicles {
        let &i = station_index
            .get(&v.home_station)
            .ok_or_else(|| Error::invariant("vehicle", v.vehicle_id, format!("unknown station {}", v.home_station)))?;
        by_station[i].push(v.vehicle_id);
        vstate.insert(v.vehicle_id, VehicleState { held: false, free_at: i64::MIN });
    }
    by_station.iter_mut().for_each(|ids| ids.sort_unstable());

    let mut queue: Vec<(i64, u32, usize)> = trips
        .iter()
        .enumerate()
        .map(|(i, t)| (compute_decision_time(t), t.trip_id, i))
        .collect();
    queue.sort_unstable();

    let mut holdings: BTreeMap<u32, Holding> = BTreeMap::new();
    let mut raw = Vec::new();
    let mut log = Vec::with_capacity(trips.len());

    for &(t, trip_id, ti) in &queue {
        let trip = &trips[ti];
        let agent = agent_by_id
            .get(&trip.agent_id)
            .ok_or_else(|| Error::invariant("trip", trip_id, format!("unknown agent {}", trip.agent_id)))?;

        if let Some(h) = holdings.get_mut(&agent.agent_id) {
            let end = trip.t_dest_start.max(h.last_end);
            raw.push(RawSegment {
                trip_id,
                agent_id: agent.agent_id,
                vehicle_id: h.vehicle_id,
                station_id: h.station_id,
                t_start: h.last_end,
                t_end: end,
                drive_km: trip.distance_m / 1000.0,
                forced_return: false,
            });
            h.last_end = end;
            h.last_pos = (trip.dest_x, trip.dest_y);
            log.push(LogEntry {
                trip_id,
                t_decision: t,
                predicted_mode: Mode::CarSharing,
                station_distance_m: None,
            });
            if (trip.dest_x - h.pickup.0).hypot(trip.dest_y - h.pickup.1) <= RETURN_TOLERANCE_M {
                vstate.get_mut(&h.vehicle_id).unwrap().held = false;
                vstate.get_mut(&h.vehicle_id).unwrap().free_at = end;
                holdings.remove(&agent.agent_id);
            }
            continue;
        }

        let idle_at = |s: &Station| -> bool {
            by_station[station_index[&s.station_id]]
                .iter()
                .any(|id| is_idle(&vstate[id], t))
        };
        let features = extract_features(trip, agent, stations, idle_at, t, grid, settings.weekday);
        let x = features.to_vector();
        let (mode, _) = chooser
            .choose(&x, &mut rng::keyed(seed, "agentsim", u64::from(trip_id)))
            .map_err(|e| Error::Model(format!("mode prediction failed for trip {trip_id}: {e}")))?;
        log.push(LogEntry {
            trip_id,
            t_decision: t,
            predicted_mode: mode,
            station_distance_m: Some(features.distance_to_station_origin_m),
        });
        if mode != Mode::CarSharing || features.distance_to_station_origin_m >= NO_STATION_DISTANCE_M {
            continue;
        }
        let Some((sid, _)) = nearest_matching(trip.origin_x, trip.origin_y, stations, idle_at) else {
            continue;
        };
        let vid = by_station[station_index[&sid]]
            .iter()
            .copied()
            .find(|id| is_idle(&vstate[id], t))
            .expect("station reported idle");
        vstate.get_mut(&vid).unwrap().held = true;
        raw.push(RawSegment {
            trip_id,
            agent_id: agent.agent_id,
            vehicle_id: vid,
            station_id: sid,
            t_start: t,
            t_end: trip.t_dest_start,
            drive_km: trip.distance_m / 1000.0,
            forced_return: false,
        });
        holdings.insert(
            agent.agent_id,
            Holding {
                vehicle_id: vid,
                station_id: sid,
                pickup: (trip.origin_x, trip.origin_y),
                last_end: trip.t_dest_start,
                last_pos: (trip.dest_x, trip.dest_y),
            },
        );
    }

    for (agent_id, h) in holdings {
        raw.push(RawSegment {
            trip_id: u32::MAX,
            agent_id,
            vehicle_id: h.vehicle_id,
            station_id: h.station_id,
            t_start: h.last_end,
            t_end: DAY_MINUTES.max(h.last_end),
            drive_km: (h.last_pos.0 - h.pickup.0).hypot(h.last_pos.1 - h.pickup.1) / 1000.0,
            forced_return: true,
        });
    }

    let reservations = merge_reservations(&raw)?;
    Ok(SimOutput { raw, reservations, log })
}

fn is_idle(v: &VehicleState, t: i64) -> bool {
    !v.held && v.free_at <= t
}

/// Coalesces touching or overlapping segments of the same (agent, vehicle) and
/// numbers the result by (t_start, vehicle_id).
pub fn merge_reservations(raw: &[RawSegment]) -> Result<Vec<Reservation>> {
    let mut groups: BTreeMap<(u32, u32), Vec<&RawSegment>> = BTreeMap::new();
    for s in raw {
        groups.entry((s.agent_id, s.vehicle_id)).or_default().push(s);
    }
    let mut merged: Vec<Reservation> = Vec::new();
    for ((agent_id, vehicle_id), mut segs) in groups {
        segs.sort_by_key(|s| (s.t_start, s.t_end));
        let mut cur: Option<Reservation> = None;
        for s in segs {
            match cur.as_mut() {
                Some(c) if s.t_start <= c.t_end => {
                    c.t_end = c.t_end.max(s.t_end);
                    c.drive_km += s.drive_km;
                    c.forced_return |= s.forced_return;
                }
                _ => {
                    merged.extend(cur.take());
                    cur = Some(Reservation {
                        reservation_id: 0,
                        vehicle_id,
                        agent_id,
                        station_id: s.station_id,
                        t_start: s.t_start,
                        t_end: s.t_end,
                        drive_km: s.drive_km,
                        forced_return: s.forced_return,
                    });
                }
            }
        }
        merged.extend(cur);
    }
    merged.sort_by_key(|r| (r.vehicle_id, r.t_start, r.t_end));
    for pair in merged.windows(2) {
        if pair[0].vehicle_id == pair[1].vehicle_id && pair[1].t_start < pair[0].t_end {
            return Err(Error::invariant(
                "vehicle",
                pair[0].vehicle_id,
                format!(
                    "inconsistent simulation: agents {} and {} hold the vehicle at overlapping times",
                    pair[0].agent_id, pair[1].agent_id
                ),
            ));
        }
    }
    merged.sort_by_key(|r| (r.t_start, r.vehicle_id));
    for (i, r) in merged.iter_mut().enumerate() {
        r.reservation_id = i as u32;
    }
    Ok(merged)
}

pub fn write_sim_log(path: &Path, log: &[LogEntry]) -> Result<()> {
    write_csv(path, log, &["trip_id", "t_decision", "predicted_mode", "station_distance_m"])
}
