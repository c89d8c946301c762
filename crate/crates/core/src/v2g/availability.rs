use std::collections::BTreeMap;

use log::warn;

use crate::corpus::{Reservation, Vehicle, DAY_MINUTES};
use crate::error::{Error, Result};

use super::BatteryParams;

/// Per-vehicle limits and energy requirements on the scheduling grid.
///
/// Energy states are indexed `0..=T`; step `t` moves state `t` to `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleAvailability {
    pub vehicle_id: u32,
    pub station_id: u32,
    pub capacity_kwh: f64,
    pub at_station: Vec<bool>,
    pub c_max: Vec<f64>,
    pub d_max: Vec<f64>,
    /// Trip energy removed during each step.
    pub drain: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub e0: f64,
    /// Terminal energy target before clamping to the reachable maximum.
    pub terminal_target: f64,
    /// Reservations departing in each step.
    pub departures: BTreeMap<usize, Vec<u32>>,
}

impl VehicleAvailability {
    pub fn steps(&self) -> usize {
        self.c_max.len()
    }

    /// Reservation most likely responsible for a lower bound at state `t`.
    pub fn binding_reservation(&self, t: usize) -> Option<u32> {
        self.departures
            .range(..=t)
            .next_back()
            .and_then(|(_, ids)| ids.last().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Infeasibility {
    pub vehicle_id: u32,
    pub reservation_id: Option<u32>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Availability {
    pub steps: usize,
    pub timestep_minutes: u32,
    pub vehicles: Vec<VehicleAvailability>,
    /// Vehicles left out of scheduling because a requirement cannot be met.
    pub infeasible: Vec<Infeasibility>,
}

impl Availability {
    pub fn require_feasible(&self) -> Result<()> {
        match self.infeasible.first() {
            None => Ok(()),
            Some(f) => Err(Error::Infeasible(match f.reservation_id {
                Some(r) => format!("vehicle {} reservation {}: {}", f.vehicle_id, r, f.message),
                None => format!("vehicle {}: {}", f.vehicle_id, f.message),
            })),
        }
    }

    pub fn dt_hours(&self) -> f64 {
        self.timestep_minutes as f64 / 60.0
    }

    pub fn by_station(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, v) in self.vehicles.iter().enumerate() {
            out.entry(v.station_id).or_default().push(i);
        }
        out
    }

    /// Keeps the vehicles accepted by `keep`, preserving order.
    pub fn subset(&self, keep: impl Fn(&VehicleAvailability) -> bool) -> Availability {
        Availability {
            steps: self.steps,
            timestep_minutes: self.timestep_minutes,
            vehicles: self.vehicles.iter().filter(|v| keep(v)).cloned().collect(),
            infeasible: self.infeasible.clone(),
        }
    }
}

/// Derives station presence, trip drains and energy bounds from reservations.
///
/// A vehicle is away during every step overlapping one of its reservations.
/// The trip energy leaves the battery in the step containing `t_start`, and
/// the state at the start of that step must cover it on top of the lower SOC
/// bound. Vehicles whose trips exceed the usable battery are reported in
/// `infeasible` and left out.
pub fn build_availability(
    reservations: &[Reservation],
    vehicles: &[Vehicle],
    params: &BatteryParams,
) -> Result<Availability> {
    params.validate()?;
    let dt = params.timestep_minutes as i64;
    let steps = (DAY_MINUTES / dt) as usize;
    let mut by_vehicle: BTreeMap<u32, Vec<&Reservation>> = BTreeMap::new();
    for r in reservations {
        by_vehicle.entry(r.vehicle_id).or_default().push(r);
    }
    let mut out = Vec::with_capacity(vehicles.len());
    let mut infeasible = Vec::new();
    'vehicles: for v in vehicles {
        let cap = v.battery_capacity;
        let e_min = v.soc_min * cap;
        let e_max = v.soc_max * cap;
        let e0 = (params.initial_soc * cap).clamp(e_min, e_max);
        let mut at_station = vec![true; steps];
        let mut drain = vec![0.0; steps];
        let mut departures: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for r in by_vehicle.get(&v.vehicle_id).map(Vec::as_slice).unwrap_or(&[]) {
            if r.t_start >= DAY_MINUTES {
                continue;
            }
            let s0 = (r.t_start.max(0) / dt) as usize;
            let s1 = (((r.t_end.min(DAY_MINUTES) + dt - 1) / dt) as usize).max(s0 + 1).min(steps);
            at_station[s0..s1].iter_mut().for_each(|a| *a = false);
            let e = r.drive_km * v.consumption;
            if e > e_max - e_min {
                warn!(
                    "vehicle {} reservation {} needs {:.1} kWh, above usable {:.1} kWh",
                    v.vehicle_id,
                    r.reservation_id,
                    e,
                    e_max - e_min
                );
                infeasible.push(Infeasibility {
                    vehicle_id: v.vehicle_id,
                    reservation_id: Some(r.reservation_id),
                    message: format!("trip energy {e:.2} kWh exceeds usable battery {:.2} kWh", e_max - e_min),
                });
                continue 'vehicles;
            }
            drain[s0] += e;
            departures.entry(s0).or_default().push(r.reservation_id);
        }
        let mut lower: Vec<f64> = (0..=steps).map(|t| e_min + if t < steps { drain[t] } else { 0.0 }).collect();
        lower[steps] = e_min;
        if lower[0] > e0 + 1e-9 {
            infeasible.push(Infeasibility {
                vehicle_id: v.vehicle_id,
                reservation_id: departures.get(&0).and_then(|ids| ids.last().copied()),
                message: "initial energy cannot cover the first departure".into(),
            });
            continue;
        }
        let c_max = at_station.iter().map(|&a| if a { v.max_charge_power } else { 0.0 }).collect();
        let d_max = at_station.iter().map(|&a| if a { v.max_discharge_power } else { 0.0 }).collect();
        out.push(VehicleAvailability {
            vehicle_id: v.vehicle_id,
            station_id: v.home_station,
            capacity_kwh: cap,
            at_station,
            c_max,
            d_max,
            drain,
            lower,
            upper: vec![e_max; steps + 1],
            e0,
            terminal_target: e0,
            departures,
        });
    }
    Ok(Availability {
        steps,
        timestep_minutes: params.timestep_minutes,
        vehicles: out,
        infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Category;

    fn res(id: u32, vehicle_id: u32, t_start: i64, t_end: i64, km: f64) -> Reservation {
        Reservation {
            reservation_id: id,
            vehicle_id,
            agent_id: 0,
            station_id: 1,
            t_start,
            t_end,
            drive_km: km,
            forced_return: false,
        }
    }

    #[test]
    fn away_steps_and_drain() {
        let v = Vehicle::of_category(7, 1, Category::Combi);
        let a = build_availability(&[res(3, 7, 100, 200, 50.0)], std::slice::from_ref(&v), &BatteryParams::default()).unwrap();
        let va = &a.vehicles[0];
        assert_eq!(a.steps, 96);
        let away: Vec<usize> = (0..96).filter(|&t| !va.at_station[t]).collect();
        assert_eq!(away, (6..14).collect::<Vec<_>>());
        assert!((va.drain[6] - 50.0 * 0.17).abs() < 1e-12);
        assert!((va.lower[6] - (0.1 * 58.0 + 8.5)).abs() < 1e-12);
        assert_eq!(va.c_max[6], 0.0);
        assert_eq!(va.c_max[5], 11.0);
        assert_eq!(va.binding_reservation(6), Some(3));
    }

    #[test]
    fn oversized_trip_is_reported() {
        let v = Vehicle::of_category(7, 1, Category::Budget);
        let a = build_availability(&[res(9, 7, 100, 900, 400.0)], &[v], &BatteryParams::default()).unwrap();
        assert!(a.vehicles.is_empty());
        assert_eq!(a.infeasible[0].reservation_id, Some(9));
        let msg = a.require_feasible().unwrap_err().to_string();
        assert!(msg.contains("reservation 9"), "{msg}");
    }
}
