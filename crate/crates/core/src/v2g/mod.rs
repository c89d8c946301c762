//! Fleet vehicle-to-grid scheduling.

mod admm;
mod availability;
mod envelope;
pub mod fixture;
mod kernel;
mod objective;
mod peak;
mod pwl;
mod station;
mod vehicle;

pub use admm::{admm_schedule, sharing_admm, step_prices, AdmmParams, FleetSchedule, SharingOutcome};
pub use availability::{build_availability, Availability, Infeasibility, VehicleAvailability};
pub use envelope::{flexibility_envelope, Envelope, EnvelopePoint};
pub use kernel::StepKernel;
pub use objective::{
    FleetObjective, ObjectiveInputs, ObjectiveRegistry, PeakShaving, PriceResponse, ReferenceTracking, ZeroObjective,
};
pub use peak::{monetary_accounting, peak_shave, win_win_band, write_peaks, Money, PeakResult, PeakRow};
pub use pwl::Pwl;
pub use station::{solve_station, solve_station_from, solve_station_sweeps, station_objective, PgParams, StationSolution};
pub use vehicle::{plan_cost, project_vehicle, solve_vehicle, StepTerms, VehiclePlan};

use crate::corpus::{DAY_MINUTES, DEFAULT_TIMESTEP_MINUTES};
use crate::error::{Error, Result};

pub const DEFAULT_TARIFF_CHF_PER_KWH: f64 = 0.20;
pub const DEFAULT_PEAK_COST_CHF_PER_MW: f64 = 2000.0;
/// Night tariff relative to the day tariff. Above the round-trip efficiency so
/// that the baseline has no incentive to arbitrage.
const NIGHT_FACTOR: f64 = 0.925;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryParams {
    pub eta_c: f64,
    pub eta_d: f64,
    pub initial_soc: f64,
    pub timestep_minutes: u32,
    /// Cost per kW of charge plus discharge, per step.
    pub kappa: f64,
    /// Quadratic regularization per kW squared, per step.
    pub lambda: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams {
            eta_c: 0.95,
            eta_d: 0.95,
            initial_soc: 0.6,
            timestep_minutes: DEFAULT_TIMESTEP_MINUTES,
            kappa: 1e-4,
            lambda: 1e-5,
        }
    }
}

impl BatteryParams {
    pub fn dt_hours(&self) -> f64 {
        self.timestep_minutes as f64 / 60.0
    }

    pub fn steps(&self) -> usize {
        (DAY_MINUTES / self.timestep_minutes as i64) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let ok_eta = |e: f64| e > 0.0 && e <= 1.0;
        if !ok_eta(self.eta_c) || !ok_eta(self.eta_d) {
            return Err(Error::Config("efficiencies must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(Error::Config("initial SOC must lie in [0, 1]".into()));
        }
        if self.timestep_minutes == 0 || DAY_MINUTES % self.timestep_minutes as i64 != 0 {
            return Err(Error::Config("timestep must divide 1440 minutes".into()));
        }
        if self.kappa < 0.0 || self.lambda <= 0.0 {
            return Err(Error::Config("kappa must be >= 0 and lambda > 0".into()));
        }
        Ok(())
    }
}

/// Per-step tariff in CHF/kWh: `day` from 06:00 to 22:00, slightly cheaper
/// at night.
pub fn tariff_profile(day: f64, timestep_minutes: u32) -> Vec<f64> {
    let steps = (DAY_MINUTES / timestep_minutes as i64) as usize;
    (0..steps)
        .map(|t| {
            let minute = t as u32 * timestep_minutes;
            if (360..1320).contains(&minute) {
                day
            } else {
                day * NIGHT_FACTOR
            }
        })
        .collect()
}
