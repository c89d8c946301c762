use serde::{Deserialize, Serialize};

use crate::corpus::{Agent, Gender, PtSubscription, Purpose, Station, Trip, DAY_MINUTES};
use crate::population::nearest_matching;

pub const N_FEATURES: usize = 29;
/// Station distance used when no station has an idle vehicle.
pub const NO_STATION_DISTANCE_M: f64 = 50_000.0;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "distance_m",
    "origin_home",
    "origin_leisure",
    "origin_work",
    "origin_shopping",
    "origin_education",
    "origin_other",
    "dest_home",
    "dest_leisure",
    "dest_work",
    "dest_shopping",
    "dest_education",
    "dest_other",
    "pt_accessibility_origin",
    "pt_accessibility_dest",
    "distance_to_station_origin_m",
    "distance_to_station_dest_m",
    "origin_hour",
    "origin_day",
    "dest_hour",
    "dest_day",
    "age_group",
    "gender_f",
    "gender_m",
    "gender_o",
    "car_access",
    "pt_none",
    "pt_half_fare",
    "pt_full_fare",
];

pub const IDX_DISTANCE: usize = 0;
pub const IDX_PURPOSE_ORIGIN: usize = 1;
pub const IDX_PURPOSE_DEST: usize = 7;
pub const IDX_PT_ORIGIN: usize = 13;
pub const IDX_PT_DEST: usize = 14;
pub const IDX_STATION_ORIGIN: usize = 15;
pub const IDX_STATION_DEST: usize = 16;
pub const IDX_ORIGIN_HOUR: usize = 17;
pub const IDX_AGE: usize = 21;
pub const IDX_GENDER: usize = 22;
pub const IDX_CAR_ACCESS: usize = 25;
pub const IDX_PT_SUB: usize = 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripFeatures {
    pub distance_m: f64,
    pub purpose_origin: Purpose,
    pub purpose_dest: Purpose,
    pub pt_accessibility_origin: f64,
    pub pt_accessibility_dest: f64,
    pub distance_to_station_origin_m: f64,
    pub distance_to_station_dest_m: f64,
    pub origin_hour: u8,
    pub origin_day: u8,
    pub dest_hour: u8,
    pub dest_day: u8,
    pub age_group: u8,
    pub gender: Gender,
    pub car_access: bool,
    pub pt_subscription: PtSubscription,
}

impl TripFeatures {
    pub fn to_vector(&self) -> [f64; N_FEATURES] {
        let mut v = [0.0; N_FEATURES];
        v[IDX_DISTANCE] = self.distance_m;
        v[IDX_PURPOSE_ORIGIN + self.purpose_origin.index()] = 1.0;
        v[IDX_PURPOSE_DEST + self.purpose_dest.index()] = 1.0;
        v[IDX_PT_ORIGIN] = self.pt_accessibility_origin;
        v[IDX_PT_DEST] = self.pt_accessibility_dest;
        v[IDX_STATION_ORIGIN] = self.distance_to_station_origin_m;
        v[IDX_STATION_DEST] = self.distance_to_station_dest_m;
        v[IDX_ORIGIN_HOUR] = f64::from(self.origin_hour);
        v[IDX_ORIGIN_HOUR + 1] = f64::from(self.origin_day);
        v[IDX_ORIGIN_HOUR + 2] = f64::from(self.dest_hour);
        v[IDX_ORIGIN_HOUR + 3] = f64::from(self.dest_day);
        v[IDX_AGE] = f64::from(self.age_group);
        v[IDX_GENDER + self.gender as usize] = 1.0;
        v[IDX_CAR_ACCESS] = if self.car_access { 1.0 } else { 0.0 };
        v[IDX_PT_SUB + self.pt_subscription as usize] = 1.0;
        v
    }
}

/// Public transport accessibility scores (0..4) on a regular grid. Lookups take
/// the nearest cell, clamped to the grid edge.
#[derive(Debug, Clone, PartialEq)]
pub struct PtGrid {
    pub x0: f64,
    pub y0: f64,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    pub scores: Vec<f64>,
}

impl PtGrid {
    pub fn uniform(score: f64) -> Self {
        PtGrid {
            x0: 0.0,
            y0: 0.0,
            cell: 1.0,
            nx: 1,
            ny: 1,
            scores: vec![score],
        }
    }

    /// Scores decaying with distance from population centers `(x, y, radius)`.
    pub fn from_centers(centers: &[(f64, f64, f64)], extent: (f64, f64, f64, f64), cell: f64) -> Self {
        let (xmin, ymin, xmax, ymax) = extent;
        let nx = ((xmax - xmin) / cell).ceil().max(1.0) as usize;
        let ny = ((ymax - ymin) / cell).ceil().max(1.0) as usize;
        let mut scores = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let x = xmin + (i as f64 + 0.5) * cell;
                let y = ymin + (j as f64 + 0.5) * cell;
                let s = centers
                    .iter()
                    .map(|&(cx, cy, r)| 4.0 * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * r * r)).exp())
                    .fold(0.0, f64::max);
                scores.push((s * 100.0).round() / 100.0);
            }
        }
        PtGrid {
            x0: xmin,
            y0: ymin,
            cell,
            nx,
            ny,
            scores,
        }
    }

    pub fn score(&self, x: f64, y: f64) -> f64 {
        let cell_of = |v: f64, v0: f64, n: usize| (((v - v0) / self.cell).floor().max(0.0) as usize).min(n - 1);
        let i = cell_of(x, self.x0, self.nx);
        let j = cell_of(y, self.y0, self.ny);
        self.scores[j * self.nx + i]
    }
}

/// Hour and weekday of a minute offset from the simulated day's midnight.
pub fn hour_day(minute: i64, weekday: u8) -> (u8, u8) {
    let m = minute.max(0);
    let hour = ((m % DAY_MINUTES) / 60) as u8;
    let day = ((i64::from(weekday) + m / DAY_MINUTES) % 7) as u8;
    (hour, day)
}

/// Features of one trip. `available` says whether a station currently has an
/// idle vehicle; station distances are measured only to such stations.
pub fn extract_features<F: Fn(&Station) -> bool>(
    trip: &Trip,
    agent: &Agent,
    stations: &[Station],
    available: F,
    decision_time: i64,
    grid: &PtGrid,
    weekday: u8,
) -> TripFeatures {
    let d_origin = nearest_matching(trip.origin_x, trip.origin_y, stations, &available)
        .map_or(NO_STATION_DISTANCE_M, |(_, d)| d);
    let d_dest = nearest_matching(trip.dest_x, trip.dest_y, stations, &available)
        .map_or(NO_STATION_DISTANCE_M, |(_, d)| d);
    let (origin_hour, origin_day) = hour_day(decision_time, weekday);
    let (dest_hour, dest_day) = hour_day(trip.t_dest_start, weekday);
    TripFeatures {
        distance_m: trip.distance_m,
        purpose_origin: trip.purpose_origin,
        purpose_dest: trip.purpose_dest,
        pt_accessibility_origin: grid.score(trip.origin_x, trip.origin_y),
        pt_accessibility_dest: grid.score(trip.dest_x, trip.dest_y),
        distance_to_station_origin_m: d_origin,
        distance_to_station_dest_m: d_dest,
        origin_hour,
        origin_day,
        dest_hour,
        dest_day,
        age_group: agent.age_group,
        gender: agent.gender,
        car_access: agent.car_access,
        pt_subscription: agent.pt_subscription,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent() -> Agent {
        Agent {
            agent_id: 1,
            age_group: 3,
            gender: Gender::M,
            home_x: 0.0,
            home_y: 0.0,
            car_access: false,
            pt_subscription: PtSubscription::HalfFare,
        }
    }

    fn trip() -> Trip {
        Trip {
            trip_id: 1,
            agent_id: 1,
            origin_x: 0.0,
            origin_y: 0.0,
            dest_x: 3000.0,
            dest_y: 4000.0,
            purpose_origin: Purpose::Home,
            purpose_dest: Purpose::Shopping,
            t_dest_start: 600,
            distance_m: 5000.0,
        }
    }

    #[test]
    fn station_at_origin_is_zero_and_busy_fleet_is_sentinel() {
        let stations = vec![Station::new(1, 0.0, 0.0), Station::new(2, 3000.0, 4100.0)];
        let f = extract_features(&trip(), &agent(), &stations, |_| true, 584, &PtGrid::uniform(2.0), 2);
        assert_eq!(f.distance_to_station_origin_m, 0.0);
        assert!((f.distance_to_station_dest_m - 100.0).abs() < 1e-9);
        let f = extract_features(&trip(), &agent(), &stations, |_| false, 584, &PtGrid::uniform(2.0), 2);
        assert_eq!(f.distance_to_station_origin_m, NO_STATION_DISTANCE_M);
        assert_eq!(f.distance_to_station_dest_m, NO_STATION_DISTANCE_M);
    }

    #[test]
    fn vector_layout() {
        let stations = vec![Station::new(1, 0.0, 0.0)];
        let f = extract_features(&trip(), &agent(), &stations, |_| true, 584, &PtGrid::uniform(2.0), 2);
        let v = f.to_vector();
        assert_eq!(v[IDX_PURPOSE_ORIGIN..IDX_PURPOSE_ORIGIN + 6].iter().sum::<f64>(), 1.0);
        assert_eq!(v[IDX_PURPOSE_DEST + Purpose::Shopping.index()], 1.0);
        assert_eq!(v[IDX_ORIGIN_HOUR], 9.0);
        assert_eq!(v[IDX_ORIGIN_HOUR + 2], 10.0);
        assert_eq!(v[IDX_GENDER + 1], 1.0);
        assert_eq!(v[IDX_PT_SUB + 1], 1.0);
    }

    #[test]
    fn grid_clamps_and_picks_nearest_cell() {
        let g = PtGrid {
            x0: 0.0,
            y0: 0.0,
            cell: 10.0,
            nx: 2,
            ny: 1,
            scores: vec![1.0, 3.0],
        };
        assert_eq!(g.score(-50.0, 0.0), 1.0);
        assert_eq!(g.score(12.0, 99.0), 3.0);
        assert_eq!(g.score(1e9, 0.0), 3.0);
    }

    #[test]
    fn late_arrival_rolls_day() {
        assert_eq!(hour_day(1500, 6), (1, 0));
        assert_eq!(hour_day(-3, 2), (0, 2));
    }
}
