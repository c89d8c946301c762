//! Small synthetic fleets and load curves for tests and examples.

use rand::Rng;

use crate::corpus::{Category, Reservation, Vehicle};
use crate::rng::stream;

const CATEGORIES: [Category; 5] = [
    Category::Budget,
    Category::Combi,
    Category::Premium,
    Category::Transporter,
    Category::Other,
];

/// `stations * per_station` vehicles with up to two daytime reservations each.
/// Station ids start at 1, vehicle ids at 0.
pub fn synthetic_fleet(stations: usize, per_station: usize, seed: u64) -> (Vec<Vehicle>, Vec<Reservation>) {
    let mut rng = stream(seed, "v2g-fixture");
    let mut vehicles = Vec::new();
    let mut reservations = Vec::new();
    for s in 0..stations {
        for k in 0..per_station {
            let id = vehicles.len() as u32;
            let cat = CATEGORIES[(s + k) % CATEGORIES.len()];
            vehicles.push(Vehicle::of_category(id, s as u32 + 1, cat));
            let mut t = rng.random_range(360..600i64);
            for _ in 0..rng.random_range(0..=2) {
                let dur = rng.random_range(60..300i64);
                if t + dur > 1380 {
                    break;
                }
                reservations.push(Reservation {
                    reservation_id: reservations.len() as u32,
                    vehicle_id: id,
                    agent_id: id,
                    station_id: s as u32 + 1,
                    t_start: t,
                    t_end: t + dur,
                    drive_km: rng.random_range(10.0..80.0),
                    forced_return: false,
                });
                t += dur + rng.random_range(30..180i64);
            }
        }
    }
    (vehicles, reservations)
}

/// Daily load curve in MW with a morning shoulder and an evening peak at
/// 18:00 reaching `peak_mw`.
pub fn dso_profile(steps: usize, base_mw: f64, peak_mw: f64) -> Vec<f64> {
    (0..steps)
        .map(|t| {
            let h = 24.0 * t as f64 / steps as f64;
            let bump = |c: f64, w: f64| (-(h - c) * (h - c) / (2.0 * w * w)).exp();
            base_mw + (peak_mw - base_mw) * (0.55 * bump(8.5, 1.5) + bump(18.0, 1.2)).min(1.0)
        })
        .collect()
}
