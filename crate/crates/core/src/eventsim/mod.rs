//! Event-based booking generator: per hour-of-day and weekday/weekend slot, a
//! Poisson booking count, a station categorical and exp-power laws for
//! duration and distance.

mod exppower;
pub mod fixture;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_csv, write_csv, Reservation};
use crate::error::{Error, Result};
use crate::rng;

pub use exppower::{fit_exp_power, fit_exp_power_fixed_k, trigamma, ExpPowerParams, MIN_FIT_SAMPLES};

pub const SLOTS: usize = 48;
pub const LAPLACE_ALPHA: f64 = 0.5;

/// One booking of a multi-day log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookingRecord {
    pub day: u32,
    pub is_weekend: bool,
    pub station_id: u32,
    /// Minutes since the day's midnight.
    pub start_min: i64,
    pub duration_h: f64,
    pub distance_km: f64,
}

/// Number of observed days of each type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Calendar {
    pub weekdays: u32,
    pub weekend_days: u32,
}

impl Calendar {
    /// Counts the distinct days present in a log.
    pub fn from_records(records: &[BookingRecord]) -> Self {
        let days: BTreeSet<(u32, bool)> = records.iter().map(|r| (r.day, r.is_weekend)).collect();
        Calendar {
            weekdays: days.iter().filter(|d| !d.1).count() as u32,
            weekend_days: days.iter().filter(|d| d.1).count() as u32,
        }
    }

    fn days(&self, weekend: bool) -> u32 {
        if weekend {
            self.weekend_days
        } else {
            self.weekdays
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotDistribution {
    pub hour: u8,
    pub is_weekend: bool,
    /// Expected bookings per half-hour.
    pub poisson_rate: f64,
    /// Probabilities aligned with `EventDistributionSet::stations`.
    pub station_probs: Vec<f64>,
    pub duration: ExpPowerParams,
    pub distance: ExpPowerParams,
    /// Set when the slot had too little data and took the all-day fits.
    pub inherited: bool,
    pub n_observed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventDistributionSet {
    pub stations: Vec<u32>,
    /// Index `is_weekend as usize * 24 + hour`.
    pub slots: Vec<SlotDistribution>,
}

fn slot_index(hour: u8, weekend: bool) -> usize {
    usize::from(weekend) * 24 + usize::from(hour)
}

fn hour_of(start_min: i64) -> u8 {
    (start_min.rem_euclid(1440) / 60) as u8
}

fn smoothed(counts: &BTreeMap<u32, usize>, stations: &[u32]) -> Vec<f64> {
    let n: usize = counts.values().sum();
    let denom = n as f64 + LAPLACE_ALPHA * stations.len() as f64;
    stations
        .iter()
        .map(|s| (*counts.get(s).unwrap_or(&0) as f64 + LAPLACE_ALPHA) / denom)
        .collect()
}

fn positive(values: impl Iterator<Item = f64>) -> Vec<f64> {
    values.filter(|v| *v > 0.0).collect()
}

impl EventDistributionSet {
    pub fn slot(&self, hour: u8, weekend: bool) -> &SlotDistribution {
        &self.slots[slot_index(hour, weekend)]
    }

    /// Expected number of bookings on a day of the given type.
    pub fn expected_daily_total(&self, weekend: bool) -> f64 {
        (0..24).map(|h| 2.0 * self.slot(h, weekend).poisson_rate).sum()
    }

    pub fn write(&self, distributions: &Path, station_probs: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            hour: u8,
            is_weekend: bool,
            poisson_rate: f64,
            duration_lambda: f64,
            duration_k: f64,
            distance_lambda: f64,
            distance_k: f64,
            inherited: bool,
        }
        let rows: Vec<Row> = self
            .slots
            .iter()
            .map(|s| Row {
                hour: s.hour,
                is_weekend: s.is_weekend,
                poisson_rate: s.poisson_rate,
                duration_lambda: s.duration.lambda,
                duration_k: s.duration.k,
                distance_lambda: s.distance.lambda,
                distance_k: s.distance.k,
                inherited: s.inherited,
            })
            .collect();
        write_csv(
            distributions,
            &rows,
            &[
                "hour",
                "is_weekend",
                "poisson_rate",
                "duration_lambda",
                "duration_k",
                "distance_lambda",
                "distance_k",
                "inherited",
            ],
        )?;
        let probs: Vec<(u8, bool, u32, f64)> = self
            .slots
            .iter()
            .flat_map(|s| {
                self.stations
                    .iter()
                    .zip(&s.station_probs)
                    .map(move |(&id, &p)| (s.hour, s.is_weekend, id, p))
            })
            .collect();
        write_csv(station_probs, &probs, &["hour", "is_weekend", "station_id", "prob"])
    }

    pub fn read(distributions: &Path, station_probs: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            hour: u8,
            is_weekend: bool,
            poisson_rate: f64,
            duration_lambda: f64,
            duration_k: f64,
            distance_lambda: f64,
            distance_k: f64,
            #[serde(default)]
            inherited: bool,
        }
        #[derive(Deserialize)]
        struct ProbRow {
            hour: u8,
            is_weekend: bool,
            station_id: u32,
            prob: f64,
        }
        let missing = |p: &Path| Error::InvalidInput(format!("missing input {}", p.display()));
        let rows: Vec<Row> = read_csv(distributions)?.ok_or_else(|| missing(distributions))?;
        let probs: Vec<ProbRow> = read_csv(station_probs)?.ok_or_else(|| missing(station_probs))?;
        let stations: Vec<u32> = probs
            .iter()
            .map(|p| p.station_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut slots: Vec<Option<SlotDistribution>> = vec![None; SLOTS];
        for r in rows {
            if r.hour > 23 {
                return Err(Error::invariant("slot", r.hour, "hour outside 0..23"));
            }
            slots[slot_index(r.hour, r.is_weekend)] = Some(SlotDistribution {
                hour: r.hour,
                is_weekend: r.is_weekend,
                poisson_rate: r.poisson_rate,
                station_probs: vec![0.0; stations.len()],
                duration: ExpPowerParams {
                    lambda: r.duration_lambda,
                    k: r.duration_k,
                },
                distance: ExpPowerParams {
                    lambda: r.distance_lambda,
                    k: r.distance_k,
                },
                inherited: r.inherited,
                n_observed: 0,
            });
        }
        let mut slots: Vec<SlotDistribution> = slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| Error::invariant("slot", i, "missing from distributions file")))
            .collect::<Result<_>>()?;
        for p in probs {
            let j = stations.binary_search(&p.station_id).unwrap();
            slots[slot_index(p.hour, p.is_weekend)].station_probs[j] = p.prob;
        }
        for s in &slots {
            let total: f64 = s.station_probs.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invariant("slot", slot_index(s.hour, s.is_weekend), "station probabilities do not sum to 1"));
            }
        }
        Ok(EventDistributionSet { stations, slots })
    }
}

/// Fits all 48 slots. `stations` extends the station support beyond those seen
/// in the log.
pub fn fit_event_distributions(
    records: &[BookingRecord],
    calendar: Calendar,
    stations: &[u32],
) -> Result<EventDistributionSet> {
    if records.is_empty() {
        return Err(Error::InvalidInput("empty booking log".into()));
    }
    if calendar.weekdays == 0 || calendar.weekend_days == 0 {
        return Err(Error::InvalidInput(
            "booking log must cover at least one weekday and one weekend day".into(),
        ));
    }
    let support: Vec<u32> = stations
        .iter()
        .copied()
        .chain(records.iter().map(|r| r.station_id))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut all_counts: BTreeMap<u32, usize> = BTreeMap::new();
    records.iter().for_each(|r| *all_counts.entry(r.station_id).or_default() += 1);
    let global_probs = smoothed(&all_counts, &support);
    let global_duration = fit_exp_power(&positive(records.iter().map(|r| r.duration_h)))?;
    let global_distance = fit_exp_power(&positive(records.iter().map(|r| r.distance_km)))?;

    let mut by_slot: Vec<Vec<&BookingRecord>> = vec![Vec::new(); SLOTS];
    for r in records {
        by_slot[slot_index(hour_of(r.start_min), r.is_weekend)].push(r);
    }
    let mut slots = Vec::with_capacity(SLOTS);
    let mut inherited = 0;
    for (i, recs) in by_slot.iter().enumerate() {
        let weekend = i >= 24;
        let hour = (i % 24) as u8;
        let rate = recs.len() as f64 / (f64::from(calendar.days(weekend)) * 2.0);
        let own = if recs.len() >= MIN_FIT_SAMPLES {
            let d = fit_exp_power(&positive(recs.iter().map(|r| r.duration_h)));
            let k = fit_exp_power(&positive(recs.iter().map(|r| r.distance_km)));
            d.ok().zip(k.ok())
        } else {
            None
        };
        let slot = match own {
            Some((duration, distance)) => {
                let mut counts = BTreeMap::new();
                recs.iter().for_each(|r| *counts.entry(r.station_id).or_default() += 1);
                SlotDistribution {
                    hour,
                    is_weekend: weekend,
                    poisson_rate: rate,
                    station_probs: smoothed(&counts, &support),
                    duration,
                    distance,
                    inherited: false,
                    n_observed: recs.len(),
                }
            }
            None => {
                inherited += 1;
                SlotDistribution {
                    hour,
                    is_weekend: weekend,
                    poisson_rate: rate,
                    station_probs: global_probs.clone(),
                    duration: global_duration,
                    distance: global_distance,
                    inherited: true,
                    n_observed: recs.len(),
                }
            }
        };
        slots.push(slot);
    }
    if inherited > 0 {
        warn!("{inherited} of {SLOTS} slots had too little data and use the all-day fits");
    }
    Ok(EventDistributionSet { stations: support, slots })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledBooking {
    pub station_id: u32,
    pub start_min: i64,
    pub duration_h: f64,
    pub distance_km: f64,
}

/// Draws one day: a Poisson count per half-hour, each booking placed uniformly
/// inside its half-hour.
pub fn sample_day(dist: &EventDistributionSet, is_weekend: bool, seed: u64) -> Result<Vec<SampledBooking>> {
    let mut r = rng::stream(seed, "event-day");
    sample_day_with(dist, is_weekend, &mut r)
}

pub fn sample_day_with<R: Rng + ?Sized>(
    dist: &EventDistributionSet,
    is_weekend: bool,
    r: &mut R,
) -> Result<Vec<SampledBooking>> {
    let mut out = Vec::new();
    let mut pickers: BTreeMap<u8, WeightedIndex<f64>> = BTreeMap::new();
    for half in 0..48i64 {
        let hour = (half / 2) as u8;
        let slot = dist.slot(hour, is_weekend);
        if !(slot.poisson_rate > 0.0) {
            continue;
        }
        let n = Poisson::new(slot.poisson_rate)
            .map_err(|e| Error::InvalidInput(format!("poisson rate: {e}")))?
            .sample(r) as usize;
        if n == 0 {
            continue;
        }
        if let std::collections::btree_map::Entry::Vacant(e) = pickers.entry(hour) {
            let w = WeightedIndex::new(&slot.station_probs)
                .map_err(|e| Error::InvalidInput(format!("station probabilities: {e}")))?;
            e.insert(w);
        }
        let picker = &pickers[&hour];
        for _ in 0..n {
            out.push(SampledBooking {
                station_id: dist.stations[picker.sample(r)],
                start_min: half * 30 + r.random_range(0..30),
                duration_h: slot.duration.sample(r),
                distance_km: slot.distance.sample(r),
            });
        }
    }
    Ok(out)
}

/// Converts one simulated day of reservations into booking records.
pub fn records_from_reservations(reservations: &[Reservation], day: u32, is_weekend: bool) -> Vec<BookingRecord> {
    reservations
        .iter()
        .map(|r| BookingRecord {
            day,
            is_weekend,
            station_id: r.station_id,
            start_min: r.t_start,
            duration_h: r.duration_minutes() as f64 / 60.0,
            distance_km: r.drive_km,
        })
        .collect()
}

pub fn records_from_sample(day: u32, is_weekend: bool, bookings: &[SampledBooking]) -> Vec<BookingRecord> {
    bookings
        .iter()
        .map(|b| BookingRecord {
            day,
            is_weekend,
            station_id: b.station_id,
            start_min: b.start_min,
            duration_h: b.duration_h,
            distance_km: b.distance_km,
        })
        .collect()
}

pub fn read_booking_log(path: &Path) -> Result<Vec<BookingRecord>> {
    read_csv(path)?.ok_or_else(|| Error::InvalidInput(format!("missing input {}", path.display())))
}

pub fn write_booking_log(path: &Path, records: &[BookingRecord]) -> Result<()> {
    write_csv(
        path,
        records,
        &["day", "is_weekend", "station_id", "start_min", "duration_h", "distance_km"],
    )
}

pub fn write_sampled(path: &Path, bookings: &[SampledBooking]) -> Result<()> {
    write_csv(path, bookings, &["station_id", "start_min", "duration_h", "distance_km"])
}

/// Mean and standard deviation (population form) of daily booking counts per
/// station over the days of a log. Days without bookings count as zero.
pub fn station_daily_stats(records: &[BookingRecord], stations: &[u32]) -> BTreeMap<u32, (f64, f64)> {
    let days: BTreeSet<(u32, bool)> = records.iter().map(|r| (r.day, r.is_weekend)).collect();
    let n_days = days.len().max(1) as f64;
    let mut counts: BTreeMap<u32, BTreeMap<(u32, bool), usize>> = BTreeMap::new();
    for r in records {
        *counts.entry(r.station_id).or_default().entry((r.day, r.is_weekend)).or_default() += 1;
    }
    let ids: BTreeSet<u32> = stations.iter().copied().chain(counts.keys().copied()).collect();
    ids.into_iter()
        .map(|s| {
            let per_day = counts.get(&s);
            let vals: Vec<f64> = days
                .iter()
                .map(|d| per_day.and_then(|m| m.get(d)).copied().unwrap_or(0) as f64)
                .collect();
            let mean = vals.iter().sum::<f64>() / n_days;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_days;
            (s, (mean, var.sqrt()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(day: u32, weekend: bool, station: u32, start: i64, dur: f64) -> BookingRecord {
        BookingRecord {
            day,
            is_weekend: weekend,
            station_id: station,
            start_min: start,
            duration_h: dur,
            distance_km: dur * 7.0,
        }
    }

    fn small_log() -> Vec<BookingRecord> {
        (0..200)
            .map(|i| record(i % 4, i % 4 == 3, 5, (i as i64 * 37) % 1440, 1.0 + (i % 13) as f64 * 0.3))
            .collect()
    }

    #[test]
    fn smoothing_floor_for_the_only_station() {
        let log = small_log();
        let cal = Calendar::from_records(&log);
        let set = fit_event_distributions(&log, cal, &[1, 2, 3, 5]).unwrap();
        for s in &set.slots {
            let j = set.stations.iter().position(|&x| x == 5).unwrap();
            let n = s.n_observed as f64;
            if !s.inherited {
                assert!(s.station_probs[j] >= n / (n + 0.5 * 4.0));
            }
            assert!((s.station_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_slots_inherit_and_are_flagged() {
        let mut log = small_log();
        log.retain(|r| hour_of(r.start_min) != 3);
        let set = fit_event_distributions(&log, Calendar::from_records(&log), &[]).unwrap();
        let s = set.slot(3, false);
        assert!(s.inherited);
        assert_eq!(s.poisson_rate, 0.0);
        assert!(fit_event_distributions(&[], Calendar { weekdays: 1, weekend_days: 1 }, &[]).is_err());
    }

    #[test]
    fn zero_rates_give_empty_day() {
        let log = small_log();
        let mut set = fit_event_distributions(&log, Calendar::from_records(&log), &[]).unwrap();
        set.slots.iter_mut().for_each(|s| s.poisson_rate = 0.0);
        assert!(sample_day(&set, false, 3).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let log = small_log();
        let set = fit_event_distributions(&log, Calendar::from_records(&log), &[9]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("distributions.csv"), dir.path().join("station_probs.csv"));
        set.write(&a, &b).unwrap();
        let mut back = EventDistributionSet::read(&a, &b).unwrap();
        back.slots.iter_mut().zip(&set.slots).for_each(|(x, y)| x.n_observed = y.n_observed);
        assert_eq!(back, set);
    }

    #[test]
    fn daily_stats_count_empty_days() {
        let log = vec![record(0, false, 1, 10, 1.0), record(0, false, 1, 20, 1.0), record(1, true, 2, 30, 1.0)];
        let st = station_daily_stats(&log, &[3]);
        assert_eq!(st[&1], (1.0, 1.0));
        assert_eq!(st[&3], (0.0, 0.0));
    }
}
