use std::path::Path;

use serde::Serialize;

use crate::corpus::write_csv;
use crate::error::{Error, Result};

use super::admm::{admm_schedule, AdmmParams, FleetSchedule};
use super::availability::Availability;
use super::objective::{PeakShaving, ZeroObjective};
use super::BatteryParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PeakResult {
    pub price_chf_per_mw: f64,
    pub peak_before_mw: f64,
    pub peak_after_mw: f64,
    /// Extra grid energy drawn by the fleet relative to the baseline, kWh.
    pub energy_delta_kwh: f64,
    pub baseline: FleetSchedule,
    pub schedule: FleetSchedule,
}

impl PeakResult {
    pub fn flexibility_mw(&self) -> f64 {
        self.peak_before_mw - self.peak_after_mw
    }
}

fn peak_mw(base_mw: &[f64], fleet_kw: &[f64]) -> f64 {
    base_mw
        .iter()
        .zip(fleet_kw)
        .map(|(b, f)| b + f / 1000.0)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Reduces the peak of the non-fleet load plus the fleet, paid at `price`
/// CHF per MW of peak removed. The peak never exceeds the baseline peak.
pub fn peak_shave(
    avail: &Availability,
    params: &BatteryParams,
    tariff: &[f64],
    dso_load_mw: &[f64],
    price_chf_per_mw: f64,
    admm: &AdmmParams,
) -> Result<PeakResult> {
    let steps = avail.steps;
    if dso_load_mw.len() != steps {
        return Err(Error::InvalidInput(format!(
            "DSO load has {} steps, expected {steps}",
            dso_load_mw.len()
        )));
    }
    if !(price_chf_per_mw.is_finite() && price_chf_per_mw >= 0.0) {
        return Err(Error::InvalidInput("peak price must be nonnegative".into()));
    }
    if tariff.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidInput("energy tariffs must be nonnegative".into()));
    }
    let baseline = admm_schedule(avail, params, tariff, &ZeroObjective { steps }, admm)?;
    let peak_before_mw = peak_mw(dso_load_mw, &baseline.aggregate);
    let obj = PeakShaving {
        base: dso_load_mw.iter().map(|x| x * 1000.0).collect(),
        price: price_chf_per_mw / 1000.0,
        cap: peak_before_mw * 1000.0,
    };
    let mut schedule = admm_schedule(avail, params, tariff, &obj, admm)?;
    if !schedule.feasible || peak_mw(dso_load_mw, &schedule.aggregate) > peak_before_mw {
        schedule = FleetSchedule {
            iterations: schedule.iterations,
            converged: schedule.converged,
            residuals: schedule.residuals,
            ..baseline.clone()
        };
    }
    let peak_after_mw = peak_mw(dso_load_mw, &schedule.aggregate).min(peak_before_mw);
    let dt = params.dt_hours();
    let energy_delta_kwh = schedule.energy_kwh(dt) - baseline.energy_kwh(dt);
    Ok(PeakResult {
        price_chf_per_mw,
        peak_before_mw,
        peak_after_mw,
        energy_delta_kwh,
        baseline,
        schedule,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Money {
    pub price_chf_per_mw: f64,
    pub flexibility_mw: f64,
    pub dso_savings_chf: f64,
    pub fleet_profit_chf: f64,
}

impl Money {
    pub fn win_win(&self) -> bool {
        self.dso_savings_chf > 0.0 && self.fleet_profit_chf > 0.0
    }
}

/// DSO pays `price` per MW of flexibility and saves `peak_cost` per MW of
/// peak avoided; the fleet earns the payment minus the tariff cost of the
/// extra energy it draws relative to the baseline.
pub fn monetary_accounting(
    price_chf_per_mw: f64,
    peak_cost_chf_per_mw: f64,
    peak_before_mw: f64,
    peak_after_mw: f64,
    tariff_chf_per_kwh: &[f64],
    extra_energy_kwh: &[f64],
) -> Result<Money> {
    if tariff_chf_per_kwh.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidInput("energy tariffs must be nonnegative".into()));
    }
    if tariff_chf_per_kwh.len() != extra_energy_kwh.len() {
        return Err(Error::InvalidInput("tariff and energy series differ in length".into()));
    }
    if !(price_chf_per_mw >= 0.0 && peak_cost_chf_per_mw >= 0.0) {
        return Err(Error::InvalidInput("prices must be nonnegative".into()));
    }
    let flexibility_mw = peak_before_mw - peak_after_mw;
    let energy_cost: f64 = tariff_chf_per_kwh.iter().zip(extra_energy_kwh).map(|(t, e)| t * e).sum();
    Ok(Money {
        price_chf_per_mw,
        flexibility_mw,
        dso_savings_chf: (peak_cost_chf_per_mw - price_chf_per_mw) * flexibility_mw,
        fleet_profit_chf: price_chf_per_mw * flexibility_mw - energy_cost,
    })
}

impl PeakResult {
    /// Extra grid energy per step relative to the baseline, kWh.
    pub fn extra_energy_kwh(&self, dt_hours: f64) -> Vec<f64> {
        self.schedule
            .aggregate
            .iter()
            .zip(&self.baseline.aggregate)
            .map(|(a, b)| (a - b) * dt_hours)
            .collect()
    }

    /// With `reimburse_grid_tariff` the fleet is refunded the tariff on its
    /// extra energy, so only the flexibility payment counts.
    pub fn money(&self, peak_cost_chf_per_mw: f64, tariff: &[f64], dt_hours: f64, reimburse_grid_tariff: bool) -> Result<Money> {
        let extra = self.extra_energy_kwh(dt_hours);
        let zero = vec![0.0; extra.len()];
        monetary_accounting(
            self.price_chf_per_mw,
            peak_cost_chf_per_mw,
            self.peak_before_mw,
            self.peak_after_mw,
            if reimburse_grid_tariff { &zero } else { tariff },
            &extra,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakRow {
    pub scenario: String,
    pub price: f64,
    pub peak_before_mw: f64,
    pub peak_after_mw: f64,
    pub dso_savings: f64,
    pub fleet_profit: f64,
}

impl PeakRow {
    pub fn new(scenario: &str, r: &PeakResult, m: &Money) -> Self {
        PeakRow {
            scenario: scenario.to_string(),
            price: r.price_chf_per_mw,
            peak_before_mw: r.peak_before_mw,
            peak_after_mw: r.peak_after_mw,
            dso_savings: m.dso_savings_chf,
            fleet_profit: m.fleet_profit_chf,
        }
    }
}

pub fn write_peaks(path: &Path, rows: &[PeakRow]) -> Result<()> {
    write_csv(
        path,
        rows,
        &["scenario", "price", "peak_before_mw", "peak_after_mw", "dso_savings", "fleet_profit"],
    )
}

/// Prices at which both the DSO and the fleet gain.
pub fn win_win_band(rows: &[PeakRow]) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.dso_savings > 0.0 && r.fleet_profit > 0.0)
        .map(|r| r.price)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accounting_fixture() {
        let m = monetary_accounting(300.0, 1000.0, 12.0, 10.0, &[0.2, 0.25], &[100.0, 120.0]).unwrap();
        assert_eq!(m.flexibility_mw, 2.0);
        assert_eq!(m.dso_savings_chf, 1400.0);
        assert!((m.fleet_profit_chf - 550.0).abs() < 1e-9);
        assert!(m.win_win());
        let m = monetary_accounting(1000.0, 1000.0, 12.0, 10.0, &[0.2], &[0.0]).unwrap();
        assert_eq!(m.dso_savings_chf, 0.0);
        let m = monetary_accounting(500.0, 1000.0, 12.0, 12.0, &[0.2], &[0.0]).unwrap();
        assert_eq!((m.dso_savings_chf, m.fleet_profit_chf), (0.0, 0.0));
        assert!(monetary_accounting(500.0, 1000.0, 12.0, 12.0, &[-0.1], &[0.0]).is_err());
    }

    #[test]
    fn reimbursement_drops_energy_cost() {
        let empty = FleetSchedule {
            vehicle_ids: vec![],
            capacities: vec![],
            plans: vec![],
            aggregate: vec![0.0, 0.0],
            objective: 0.0,
            iterations: 0,
            converged: true,
            feasible: true,
            residuals: vec![],
        };
        let r = PeakResult {
            price_chf_per_mw: 300.0,
            peak_before_mw: 12.0,
            peak_after_mw: 10.0,
            energy_delta_kwh: 200.0,
            baseline: empty.clone(),
            schedule: FleetSchedule {
                aggregate: vec![400.0, 0.0],
                ..empty
            },
        };
        let paid = r.money(1000.0, &[0.2, 0.2], 0.5, false).unwrap();
        let refunded = r.money(1000.0, &[0.2, 0.2], 0.5, true).unwrap();
        assert!((paid.fleet_profit_chf - 560.0).abs() < 1e-9);
        assert_eq!(refunded.fleet_profit_chf, 600.0);
        assert_eq!(paid.dso_savings_chf, refunded.dso_savings_chf);
    }
}
