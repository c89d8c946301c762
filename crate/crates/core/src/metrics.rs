//! Comparison metrics between reservation sets and simulators.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::Serialize;

use crate::corpus::{write_csv, Reservation};
use crate::error::{Error, Result};
use crate::eventsim::{station_daily_stats, BookingRecord};
use crate::modechoice::{Mode, N_MODES};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZScores {
    /// (station_id, z) for stations with a positive reference deviation.
    pub per_station: Vec<(u32, f64)>,
    pub excluded: Vec<u32>,
    pub mean_abs: f64,
}

/// `z = (y - mu) / sigma` per reference station. Stations absent from `sim`
/// count as zero bookings; stations with `sigma = 0` are excluded.
pub fn station_zscores(sim: &BTreeMap<u32, f64>, reference: &BTreeMap<u32, (f64, f64)>) -> ZScores {
    let mut per_station = Vec::new();
    let mut excluded = Vec::new();
    for (&s, &(mu, sigma)) in reference {
        if !(sigma > 0.0) {
            excluded.push(s);
            continue;
        }
        let y = sim.get(&s).copied().unwrap_or(0.0);
        per_station.push((s, (y - mu) / sigma));
    }
    if !excluded.is_empty() {
        warn!("{} stations with zero reference deviation excluded from z-scores", excluded.len());
    }
    let mean_abs = if per_station.is_empty() {
        0.0
    } else {
        per_station.iter().map(|z| z.1.abs()).sum::<f64>() / per_station.len() as f64
    };
    ZScores {
        per_station,
        excluded,
        mean_abs,
    }
}

pub fn write_zscores(path: &Path, z: &ZScores) -> Result<()> {
    write_csv(path, &z.per_station, &["station_id", "z"])
}

/// Order-1 Wasserstein distance between two empirical distributions, as the
/// integral of the absolute difference of their CDFs.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("wasserstein_1d needs two nonempty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("wasserstein_1d samples must be finite".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as i64, b.len() as i64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        // CDF gap scaled by na * nb stays an integer, so integer samples sum exactly
        total += (i as i64 * nb - j as i64 * na).abs() as f64 * (x - prev);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        prev = x;
    }
    Ok(total / (na * nb) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Utilization {
    /// Share of vehicles with at least one reservation.
    pub count_rate: f64,
    /// Mean booked share of the horizon among used vehicles (0 when none is used).
    pub time_rate: f64,
    /// Mean share of the fleet booked during each hour of the day.
    pub hourly: Vec<f64>,
}

/// Merges intervals after clipping them to `[0, horizon)`.
fn clipped_union(mut iv: Vec<(i64, i64)>, horizon: i64) -> Vec<(i64, i64)> {
    iv.iter_mut().for_each(|(s, e)| {
        *s = (*s).clamp(0, horizon);
        *e = (*e).clamp(0, horizon);
    });
    iv.retain(|(s, e)| e > s);
    iv.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::new();
    for (s, e) in iv {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

pub fn utilization(reservations: &[Reservation], fleet: &[u32], horizon: i64) -> Utilization {
    let hours = ((horizon + 59) / 60).max(1) as usize;
    if fleet.is_empty() {
        return Utilization {
            count_rate: 0.0,
            time_rate: 0.0,
            hourly: vec![0.0; hours],
        };
    }
    let mut by_vehicle: BTreeMap<u32, Vec<(i64, i64)>> = fleet.iter().map(|&v| (v, Vec::new())).collect();
    for r in reservations {
        if let Some(list) = by_vehicle.get_mut(&r.vehicle_id) {
            list.push((r.t_start, r.t_end));
        }
    }
    let mut used = 0usize;
    let mut booked_share = 0.0;
    let mut minutes = vec![0i64; hours];
    for iv in by_vehicle.into_values() {
        if iv.is_empty() {
            continue;
        }
        used += 1;
        let union = clipped_union(iv, horizon);
        let booked: i64 = union.iter().map(|(s, e)| e - s).sum();
        booked_share += booked as f64 / horizon as f64;
        for (s, e) in union {
            for (h, m) in minutes.iter_mut().enumerate() {
                let (hs, he) = (h as i64 * 60, ((h as i64 + 1) * 60).min(horizon));
                *m += (e.min(he) - s.max(hs)).max(0);
            }
        }
    }
    let n = fleet.len() as f64;
    Utilization {
        count_rate: used as f64 / n,
        time_rate: if used > 0 { booked_share / used as f64 } else { 0.0 },
        hourly: minutes
            .iter()
            .enumerate()
            .map(|(h, &m)| {
                let len = ((h as i64 + 1) * 60).min(horizon) - h as i64 * 60;
                m as f64 / (len as f64 * n)
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeShare {
    pub shares: [f64; N_MODES],
    /// Mean over reference modes of `max(s / r, r / s)`; 1 is a perfect match.
    pub ratio: f64,
}

/// Mode shares of `assignments` and their symmetric ratio to `reference`.
/// Shares of modes that never occur are floored at half an observation so the
/// ratio stays finite.
pub fn mode_share(assignments: &[Mode], reference: &[f64; N_MODES]) -> Result<ModeShare> {
    if assignments.is_empty() {
        return Err(Error::InvalidInput("mode_share needs at least one assignment".into()));
    }
    let n = assignments.len() as f64;
    let mut shares = [0.0; N_MODES];
    assignments.iter().for_each(|m| shares[m.index()] += 1.0 / n);
    let floor = 0.5 / n;
    let ratios: Vec<f64> = reference
        .iter()
        .zip(&shares)
        .filter(|(r, _)| **r > 0.0)
        .map(|(&r, &s)| {
            let s = s.max(floor);
            (s / r).max(r / s)
        })
        .collect();
    if ratios.is_empty() {
        return Err(Error::InvalidInput("reference mode shares are all zero".into()));
    }
    Ok(ModeShare {
        shares,
        ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
    })
}

/// Flat metric-name to value map, serialized as a JSON object with sorted keys.
pub type Report = BTreeMap<String, f64>;

pub fn write_report(path: &Path, report: &Report) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Wasserstein distances between start time, duration and distance
/// distributions of two reservation sets.
pub fn compare_reservations(sim: &[Reservation], reference: &[Reservation]) -> Result<Report> {
    let mut report = Report::new();
    if sim.is_empty() || reference.is_empty() {
        return Err(Error::InvalidInput("both reservation sets must be nonempty".into()));
    }
    let col = |rs: &[Reservation], f: fn(&Reservation) -> f64| rs.iter().map(f).collect::<Vec<f64>>();
    let fields: [(&str, fn(&Reservation) -> f64); 3] = [
        ("wasserstein_start_min", |r| r.t_start as f64),
        ("wasserstein_duration_min", |r| r.duration_minutes() as f64),
        ("wasserstein_drive_km", |r| r.drive_km),
    ];
    for (name, f) in fields {
        report.insert(name.to_string(), wasserstein_1d(&col(sim, f), &col(reference, f))?);
    }
    report.insert("reservations_sim".into(), sim.len() as f64);
    report.insert("reservations_reference".into(), reference.len() as f64);
    Ok(report)
}

/// Distribution distances between two booking logs plus per-station z-scores
/// of the simulated mean daily count against the reference days.
pub fn compare_bookings(sim: &[BookingRecord], reference: &[BookingRecord]) -> Result<(Report, ZScores)> {
    if sim.is_empty() || reference.is_empty() {
        return Err(Error::InvalidInput("both booking logs must be nonempty".into()));
    }
    let col = |rs: &[BookingRecord], f: fn(&BookingRecord) -> f64| rs.iter().map(f).collect::<Vec<f64>>();
    let fields: [(&str, fn(&BookingRecord) -> f64); 3] = [
        ("wasserstein_start_min", |r| r.start_min as f64),
        ("wasserstein_duration_h", |r| r.duration_h),
        ("wasserstein_distance_km", |r| r.distance_km),
    ];
    let mut report = Report::new();
    for (name, f) in fields {
        report.insert(name.to_string(), wasserstein_1d(&col(sim, f), &col(reference, f))?);
    }
    let ref_stats = station_daily_stats(reference, &[]);
    let ids: Vec<u32> = ref_stats.keys().copied().collect();
    let sim_mean: BTreeMap<u32, f64> = station_daily_stats(sim, &ids).into_iter().map(|(s, (m, _))| (s, m)).collect();
    let z = station_zscores(&sim_mean, &ref_stats);
    report.insert("zscore_mean_abs".into(), z.mean_abs);
    report.insert("zscore_stations".into(), z.per_station.len() as f64);
    report.insert("bookings_sim".into(), sim.len() as f64);
    report.insert("bookings_reference".into(), reference.len() as f64);
    Ok((report, z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wasserstein_fixtures() {
        assert_eq!(wasserstein_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[3.0, 1.0, 2.0], &[2.0, 3.0, 1.0]).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&[0.0], &[0.0, 1.0]).unwrap(), 0.5);
        assert!(wasserstein_1d(&[], &[1.0]).is_err());
    }

    #[test]
    fn zscore_fixtures() {
        let reference = BTreeMap::from([(1, (5.0, 2.0)), (2, (3.0, 1.0)), (3, (4.0, 0.0))]);
        let sim = BTreeMap::from([(1, 5.0), (2, 5.0)]);
        let z = station_zscores(&sim, &reference);
        assert_eq!(z.per_station, vec![(1, 0.0), (2, 2.0)]);
        assert_eq!(z.excluded, vec![3]);
        assert_eq!(z.mean_abs, 1.0);
        let z = station_zscores(&BTreeMap::new(), &BTreeMap::from([(7, (2.0, 1.0))]));
        assert_eq!(z.per_station, vec![(7, -2.0)]);
    }

    fn res(vehicle_id: u32, t_start: i64, t_end: i64) -> Reservation {
        Reservation {
            reservation_id: 0,
            vehicle_id,
            agent_id: 0,
            station_id: 0,
            t_start,
            t_end,
            drive_km: 1.0,
            forced_return: false,
        }
    }

    #[test]
    fn utilization_fixtures() {
        let u = utilization(&[], &[1, 2], 1440);
        assert_eq!((u.count_rate, u.time_rate), (0.0, 0.0));
        assert!(u.hourly.iter().all(|&h| h == 0.0));
        let u = utilization(&[res(1, 0, 720)], &[1, 2], 1440);
        assert_eq!((u.count_rate, u.time_rate), (0.5, 0.5));
        assert_eq!(u.hourly[0], 0.5);
        assert_eq!(u.hourly[12], 0.0);
        let u = utilization(&[res(1, 1400, 1500)], &[1], 1440);
        assert!((u.time_rate - 40.0 / 1440.0).abs() < 1e-15);
    }

    #[test]
    fn mode_share_ratio() {
        let mut reference = [0.0; N_MODES];
        reference[Mode::Car.index()] = 1.0 / 3.0;
        reference[Mode::Walk.index()] = 2.0 / 3.0;
        let same = [Mode::Car, Mode::Walk, Mode::Walk];
        assert!((mode_share(&same, &reference).unwrap().ratio - 1.0).abs() < 1e-12);
        let flipped = [Mode::Car, Mode::Car, Mode::Walk];
        assert!((mode_share(&flipped, &reference).unwrap().ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_logs_compare_to_zero() {
        let log: Vec<BookingRecord> = (0..40)
            .map(|i| BookingRecord {
                day: i % 4,
                is_weekend: false,
                station_id: 1 + i % 3,
                start_min: 60 * (i as i64 % 20),
                duration_h: 1.0 + (i % 5) as f64,
                distance_km: 3.0 * (i % 7) as f64,
            })
            .collect();
        let (report, z) = compare_bookings(&log, &log).unwrap();
        for k in ["wasserstein_start_min", "wasserstein_duration_h", "wasserstein_distance_km", "zscore_mean_abs"] {
            assert_eq!(report[k], 0.0, "{k}");
        }
        assert!(!z.per_station.is_empty());
        assert!(z.per_station.iter().all(|p| p.1 == 0.0));
    }
}
