use std::path::Path;

use serde::Serialize;

use crate::corpus::write_csv;
use crate::error::{Error, Result};

use super::admm::{admm_schedule, AdmmParams, FleetSchedule};
use super::availability::Availability;
use super::objective::{PriceResponse, ZeroObjective};
use super::BatteryParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopePoint {
    pub hour: usize,
    /// CHF per MW of sustained deviation over the hour.
    pub price_chf_per_mw: f64,
    /// +1 for extra consumption, -1 for reduced consumption.
    pub direction: i8,
    /// Mean deviation from the baseline in the requested direction, kW.
    pub flexibility_kw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub baseline: FleetSchedule,
    pub points: Vec<EnvelopePoint>,
}

impl Envelope {
    pub fn get(&self, hour: usize, price: f64, direction: i8) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.hour == hour && p.price_chf_per_mw == price && p.direction == direction)
            .map(|p| p.flexibility_kw)
    }

    /// Rows of (hour, price, upward MW, downward MW).
    pub fn table(&self) -> Vec<(usize, f64, f64, f64)> {
        let mut rows: Vec<(usize, f64, f64, f64)> = Vec::new();
        for p in &self.points {
            let i = match rows.iter().position(|r| r.0 == p.hour && r.1 == p.price_chf_per_mw) {
                Some(i) => i,
                None => {
                    rows.push((p.hour, p.price_chf_per_mw, 0.0, 0.0));
                    rows.len() - 1
                }
            };
            if p.direction > 0 {
                rows[i].2 = p.flexibility_kw / 1000.0;
            } else {
                rows[i].3 = p.flexibility_kw / 1000.0;
            }
        }
        rows
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.table(), &["hour", "price_chf_per_mw", "up_mw", "down_mw"])
    }
}

/// Flexibility the fleet offers in each hour at each price, in both
/// directions, relative to the zero-objective baseline.
pub fn flexibility_envelope(
    avail: &Availability,
    params: &BatteryParams,
    tariff: &[f64],
    prices_chf_per_mw: &[f64],
    admm: &AdmmParams,
) -> Result<Envelope> {
    if prices_chf_per_mw.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidInput("envelope prices must be nonnegative".into()));
    }
    let steps = avail.steps;
    let per_hour = steps / 24;
    if per_hour == 0 || !steps.is_multiple_of(24) {
        return Err(Error::Config("the step grid must divide an hour evenly".into()));
    }
    let single = AdmmParams { jobs: 1, ..*admm };
    let baseline = admm_schedule(avail, params, tariff, &ZeroObjective { steps }, &single)?;
    let mut jobs_list = Vec::new();
    for hour in 0..24 {
        for &price in prices_chf_per_mw {
            for direction in [1i8, -1] {
                jobs_list.push((hour, price, direction));
            }
        }
    }
    let run = |&(hour, price, direction): &(usize, f64, i8)| -> Result<EnvelopePoint> {
        let range = hour * per_hour..(hour + 1) * per_hour;
        let flexibility_kw = if price == 0.0 {
            0.0
        } else {
            let obj = PriceResponse {
                baseline: baseline.aggregate.clone(),
                steps: range.clone(),
                price: price / 1000.0,
                direction: direction as f64,
            };
            let s = admm_schedule(avail, params, tariff, &obj, &single)?;
            range
                .map(|t| direction as f64 * (s.aggregate[t] - baseline.aggregate[t]))
                .sum::<f64>()
                / per_hour as f64
        };
        Ok(EnvelopePoint {
            hour,
            price_chf_per_mw: price,
            direction,
            flexibility_kw,
        })
    };
    let jobs = admm.jobs.max(1).min(jobs_list.len().max(1));
    let mut results: Vec<Option<Result<EnvelopePoint>>> = (0..jobs_list.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let (run, list) = (&run, &jobs_list);
                scope.spawn(move || {
                    (j..list.len())
                        .step_by(jobs)
                        .map(|i| (i, run(&list[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("envelope worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let points = results
        .into_iter()
        .map(|r| r.expect("every point computed"))
        .collect::<Result<Vec<_>>>()?;
    Ok(Envelope { baseline, points })
}
