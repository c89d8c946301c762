//! A known generator for multi-day booking logs, used as the observed log in
//! synthetic runs and as ground truth in recovery checks.

use super::{records_from_sample, sample_day_with, BookingRecord, EventDistributionSet, ExpPowerParams, SlotDistribution};
use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LogGenerator {
    pub stations: Vec<u32>,
    /// Mean bookings per half-hour at the quietest time.
    pub base_rate: f64,
    /// Added to the base rate at the busiest time.
    pub peak_rate: f64,
}

fn bump(hour: f64, center: f64, width: f64) -> f64 {
    (-(hour - center).powi(2) / (2.0 * width * width)).exp()
}

impl LogGenerator {
    pub fn new(stations: Vec<u32>, base_rate: f64, peak_rate: f64) -> Self {
        LogGenerator {
            stations,
            base_rate,
            peak_rate,
        }
    }

    pub fn rate(&self, hour: u8, weekend: bool) -> f64 {
        let h = f64::from(hour) + 0.5;
        let shape = if weekend {
            bump(h, 12.0, 3.5)
        } else {
            0.7 * bump(h, 8.0, 1.5) + bump(h, 17.5, 2.0)
        };
        self.base_rate + self.peak_rate * shape.min(1.0)
    }

    pub fn duration(&self, hour: u8, weekend: bool) -> ExpPowerParams {
        let k = 2.0 + f64::from(hour % 4) * 0.5 + if weekend { 1.0 } else { 0.0 };
        let mean_h = if weekend { 5.0 } else { 3.0 } + f64::from(hour % 5) * 0.3;
        ExpPowerParams {
            lambda: (k + 1.0) / mean_h,
            k,
        }
    }

    pub fn distance(&self, hour: u8, weekend: bool) -> ExpPowerParams {
        let k = 2.5 + f64::from(hour % 3) * 0.75;
        let mean_km = if weekend { 60.0 } else { 35.0 } + f64::from(hour % 6) * 2.0;
        ExpPowerParams {
            lambda: (k + 1.0) / mean_km,
            k,
        }
    }

    fn station_weights(&self) -> Vec<f64> {
        let w: Vec<f64> = self
            .stations
            .iter()
            .map(|&s| 1.0 + f64::from((s.wrapping_mul(2_654_435_761) >> 7) % 9))
            .collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }

    pub fn truth(&self) -> EventDistributionSet {
        let probs = self.station_weights();
        let slots = (0..48)
            .map(|i| {
                let weekend = i >= 24;
                let hour = (i % 24) as u8;
                SlotDistribution {
                    hour,
                    is_weekend: weekend,
                    poisson_rate: self.rate(hour, weekend),
                    station_probs: probs.clone(),
                    duration: self.duration(hour, weekend),
                    distance: self.distance(hour, weekend),
                    inherited: false,
                    n_observed: 0,
                }
            })
            .collect();
        EventDistributionSet {
            stations: self.stations.clone(),
            slots,
        }
    }

    /// Days `d` with `d % 7` in {5, 6} are weekend days.
    pub fn generate(&self, n_days: u32, seed: u64) -> Result<Vec<BookingRecord>> {
        let truth = self.truth();
        let mut r = rng::stream(seed, "booking-log");
        let mut out = Vec::new();
        for day in 0..n_days {
            let weekend = day % 7 >= 5;
            let bookings = sample_day_with(&truth, weekend, &mut r)?;
            out.extend(records_from_sample(day, weekend, &bookings));
        }
        Ok(out)
    }
}
