//! Fleet scheduling by ADMM in sharing form: each station tracks a local
//! target, the fleet objective acts on the mean station profile.

use std::path::Path;

use log::{debug, warn};
use serde::Serialize;

use crate::corpus::write_csv;
use crate::error::{Error, Result};

use super::availability::{Availability, VehicleAvailability};
use super::objective::FleetObjective;
use super::station::{solve_station_sweeps, PgParams, StationSolution};
use super::vehicle::{plan_cost, solve_vehicle, StepTerms, VehiclePlan};
use super::BatteryParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmParams {
    pub rho: f64,
    pub max_iter: usize,
    /// Residual threshold per square root of the number of consensus entries.
    pub eps: f64,
    pub jobs: usize,
    /// Exact vehicle sweeps per station and iteration; the station
    /// subproblems are solved inexactly from warm starts.
    pub inner: PgParams,
}

impl Default for AdmmParams {
    fn default() -> Self {
        AdmmParams {
            rho: 0.02,
            max_iter: 500,
            eps: 1e-4,
            jobs: 1,
            inner: PgParams { max_iter: 1, tol: 1e-6 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetSchedule {
    pub vehicle_ids: Vec<u32>,
    pub capacities: Vec<f64>,
    pub plans: Vec<VehiclePlan>,
    /// Fleet net power per step, kW.
    pub aggregate: Vec<f64>,
    /// Energy cost and regularization plus the fleet objective.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub feasible: bool,
    /// (primal, dual) residual per iteration.
    pub residuals: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize)]
struct ScheduleRow {
    vehicle_id: u32,
    timestep: usize,
    power_kw: f64,
    soc: f64,
}

impl FleetSchedule {
    /// Grid energy drawn over the day, kWh.
    pub fn energy_kwh(&self, dt_hours: f64) -> f64 {
        self.aggregate.iter().sum::<f64>() * dt_hours
    }

    /// Checks power limits, availability masking, the SOC band, departure
    /// requirements and per-step energy balance against `avail`.
    pub fn check(&self, avail: &Availability, params: &BatteryParams) -> Result<()> {
        let tol = 1e-9;
        let dt = params.dt_hours();
        for (v, plan) in avail.vehicles.iter().zip(&self.plans) {
            let bad = |msg: String| Err(Error::invariant("vehicle", v.vehicle_id, msg));
            if (plan.energy[0] - v.e0).abs() > tol {
                return bad("initial energy differs from the availability profile".into());
            }
            for t in 0..avail.steps {
                let (c, d) = (plan.charge[t], plan.discharge[t]);
                if c < -tol || d < -tol || c > v.c_max[t] + tol || d > v.d_max[t] + tol {
                    return bad(format!("power out of bounds at step {t}"));
                }
                if !v.at_station[t] && (c != 0.0 || d != 0.0) {
                    return bad(format!("nonzero power while away at step {t}"));
                }
                let next = plan.energy[t] + params.eta_c * dt * c - dt / params.eta_d * d - v.drain[t];
                if (next - plan.energy[t + 1]).abs() > tol * v.capacity_kwh.max(1.0) {
                    return bad(format!("energy balance broken at step {t}"));
                }
                let lo = v.lower[t + 1];
                if plan.energy[t + 1] < lo - tol || plan.energy[t + 1] > v.upper[t + 1] + tol {
                    return bad(format!("energy {} outside [{lo}, {}] at state {}", plan.energy[t + 1], v.upper[t + 1], t + 1));
                }
            }
        }
        Ok(())
    }

    pub fn peak_kw(&self) -> f64 {
        self.aggregate.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// One row per vehicle and step; `soc` is the state of charge after the step.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut rows = Vec::new();
        for ((id, cap), plan) in self.vehicle_ids.iter().zip(&self.capacities).zip(&self.plans) {
            for t in 0..plan.charge.len() {
                rows.push(ScheduleRow {
                    vehicle_id: *id,
                    timestep: t,
                    power_kw: plan.power(t),
                    soc: plan.energy[t + 1] / cap,
                });
            }
        }
        write_csv(path, &rows, &["vehicle_id", "timestep", "power_kw", "soc"])
    }
}

/// Per-step cost per kW of net power from a per-step tariff in CHF/kWh.
pub fn step_prices(tariff: &[f64], params: &BatteryParams) -> Vec<f64> {
    tariff.iter().map(|p| p * params.dt_hours()).collect()
}

/// Result of the vehicle-level sharing iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SharingOutcome {
    pub plans: Vec<VehiclePlan>,
    pub aggregate: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub feasible: bool,
    pub residuals: Vec<(f64, f64)>,
}

fn solve_each(
    vehicles: &[&VehicleAvailability],
    params: &BatteryParams,
    price: &[f64],
    rho: f64,
    targets: &[Vec<f64>],
    jobs: usize,
) -> Result<Vec<VehiclePlan>> {
    let n = vehicles.len();
    let run = |i: usize| {
        solve_vehicle(
            vehicles[i],
            params,
            &StepTerms {
                price,
                rho,
                target: &targets[i],
            },
        )
    };
    if jobs <= 1 || n <= 1 {
        return (0..n).map(run).collect();
    }
    let jobs = jobs.min(n);
    let mut out: Vec<Option<Result<VehiclePlan>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let run = &run;
                scope.spawn(move || (j..n).step_by(jobs).map(|i| (i, run(i))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("vehicle worker panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every vehicle solved")).collect()
}

fn evaluate(
    vehicles: &[&VehicleAvailability],
    plans: Vec<VehiclePlan>,
    params: &BatteryParams,
    price: &[f64],
    objective: &dyn FleetObjective,
) -> SharingOutcome {
    let steps = price.len();
    let mut aggregate = vec![0.0; steps];
    let mut cost = 0.0;
    for (v, p) in vehicles.iter().zip(&plans) {
        cost += plan_cost(v, params, price, p);
        aggregate.iter_mut().enumerate().for_each(|(t, a)| *a += p.power(t));
    }
    SharingOutcome {
        plans,
        objective: cost + objective.value(&aggregate),
        feasible: objective.feasible(&aggregate),
        aggregate,
        iterations: 0,
        converged: true,
        residuals: Vec::new(),
    }
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Indices of `vehicles` grouped by station, stations in order of first
/// appearance.
fn station_groups(vehicles: &[&VehicleAvailability]) -> Vec<Vec<usize>> {
    let mut ids: Vec<u32> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, v) in vehicles.iter().enumerate() {
        match ids.iter().position(|&s| s == v.station_id) {
            Some(g) => groups[g].push(i),
            None => {
                ids.push(v.station_id);
                groups.push(vec![i]);
            }
        }
    }
    groups
}

fn solve_stations(
    vehicles: &[&VehicleAvailability],
    groups: &[Vec<usize>],
    params: &BatteryParams,
    price: &[f64],
    rho: f64,
    targets: &[Vec<f64>],
    starts: &[Vec<VehiclePlan>],
    admm: &AdmmParams,
    inner: &PgParams,
) -> Result<Vec<StationSolution>> {
    let run = |g: usize| {
        let vs: Vec<&VehicleAvailability> = groups[g].iter().map(|&i| vehicles[i]).collect();
        solve_station_sweeps(&vs, params, price, rho, &targets[g], inner, starts[g].clone())
    };
    let m = groups.len();
    let jobs = admm.jobs.max(1).min(m.max(1));
    if jobs == 1 {
        return (0..m).map(run).collect();
    }
    let mut out: Vec<Option<Result<StationSolution>>> = (0..m).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let run = &run;
                scope.spawn(move || (j..m).step_by(jobs).map(|g| (g, run(g))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (g, r) in h.join().expect("station worker panicked") {
                out[g] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every station solved")).collect()
}

/// ADMM in sharing form with one agent per station. `price` is the per-step
/// cost per kW of net power.
///
/// Objectives linear in the aggregate separate by vehicle and are solved
/// exactly in a single pass. Otherwise the iteration runs until both
/// residuals fall below `eps * sqrt(N T)` or `max_iter` is reached; the
/// iterate with the best objective among those meeting the objective's hard
/// constraints is returned.
pub fn sharing_admm(
    vehicles: &[&VehicleAvailability],
    params: &BatteryParams,
    price: &[f64],
    objective: &dyn FleetObjective,
    admm: &AdmmParams,
) -> Result<SharingOutcome> {
    let steps = price.len();
    let zeros = vec![vec![0.0; steps]; vehicles.len()];
    if let Some(lin) = objective.linear_price() {
        let shifted: Vec<f64> = price.iter().zip(&lin).map(|(a, b)| a + b).collect();
        let plans = solve_each(vehicles, params, &shifted, 0.0, &zeros, admm.jobs)?;
        let mut out = evaluate(vehicles, plans, params, price, objective);
        out.iterations = 1;
        return Ok(out);
    }
    let plans = solve_each(vehicles, params, price, 0.0, &zeros, admm.jobs)?;
    let groups = station_groups(vehicles);
    let n = groups.len();
    let gather = |plans: &[VehiclePlan]| -> Vec<Vec<VehiclePlan>> {
        groups.iter().map(|g| g.iter().map(|&i| plans[i].clone()).collect()).collect()
    };
    let station_power = |ps: &[VehiclePlan]| -> Vec<f64> { (0..steps).map(|t| ps.iter().map(|p| p.power(t)).sum()).collect() };
    let mut starts = gather(&plans);
    let mut xs: Vec<Vec<f64>> = starts.iter().map(|ps| station_power(ps)).collect();
    let mut best = evaluate(vehicles, plans, params, price, objective);
    let mut have_best = best.feasible;
    if n == 0 {
        return Ok(best);
    }
    let nf = n as f64;
    let mean = |xs: &[Vec<f64>]| -> Vec<f64> { (0..steps).map(|t| xs.iter().map(|x| x[t]).sum::<f64>() / nf).collect() };
    let mut xbar = mean(&xs);
    let mut zbar = xbar.clone();
    let mut u = vec![0.0; steps];
    let eps = admm.eps * ((n * steps) as f64).sqrt();
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut last = f64::INFINITY;
    for k in 0..admm.max_iter {
        iterations = k + 1;
        let targets: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| (0..steps).map(|t| x[t] - xbar[t] + zbar[t] - u[t]).collect())
            .collect();
        let inner = PgParams {
            tol: admm.inner.tol.max(0.1 * last),
            ..admm.inner
        };
        let sols = solve_stations(vehicles, &groups, params, price, admm.rho, &targets, &starts, admm, &inner)?;
        xs = sols.iter().map(|s| s.aggregate.clone()).collect();
        starts = sols.into_iter().map(|s| s.plans).collect();
        xbar = mean(&xs);
        let v: Vec<f64> = (0..steps).map(|t| nf * (u[t] + xbar[t])).collect();
        let z = objective.prox(&v, admm.rho / nf);
        let znew: Vec<f64> = z.iter().map(|x| x / nf).collect();
        for t in 0..steps {
            u[t] += xbar[t] - znew[t];
        }
        let r = nf.sqrt() * norm((0..steps).map(|t| xbar[t] - znew[t]));
        let s = admm.rho * nf.sqrt() * norm((0..steps).map(|t| znew[t] - zbar[t]));
        zbar = znew;
        residuals.push((r, s));
        last = r.max(s) / nf.sqrt();
        let mut flat: Vec<Option<VehiclePlan>> = vec![None; vehicles.len()];
        for (g, ps) in groups.iter().zip(&starts) {
            for (&i, p) in g.iter().zip(ps) {
                flat[i] = Some(p.clone());
            }
        }
        let cand = evaluate(vehicles, flat.into_iter().map(|p| p.expect("grouped")).collect(), params, price, objective);
        if cand.feasible && (!have_best || cand.objective < best.objective) {
            best = cand;
            have_best = true;
        }
        if k % 50 == 0 {
            debug!("admm iteration {k}: primal {r:.3e} dual {s:.3e}");
        }
        if r < eps && s < eps {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("admm stopped after {iterations} iterations without meeting the residual threshold");
    }
    best.iterations = iterations;
    best.converged = converged;
    best.residuals = residuals;
    Ok(best)
}

/// Schedules every vehicle in `avail` against a per-step tariff (CHF/kWh)
/// and a fleet objective.
pub fn admm_schedule(
    avail: &Availability,
    params: &BatteryParams,
    tariff: &[f64],
    objective: &dyn FleetObjective,
    admm: &AdmmParams,
) -> Result<FleetSchedule> {
    params.validate()?;
    if tariff.len() != avail.steps {
        return Err(Error::InvalidInput(format!(
            "tariff has {} steps, expected {}",
            tariff.len(),
            avail.steps
        )));
    }
    let price = step_prices(tariff, params);
    let vehicles: Vec<&VehicleAvailability> = avail.vehicles.iter().collect();
    let out = sharing_admm(&vehicles, params, &price, objective, admm)?;
    Ok(FleetSchedule {
        vehicle_ids: avail.vehicles.iter().map(|v| v.vehicle_id).collect(),
        capacities: avail.vehicles.iter().map(|v| v.capacity_kwh).collect(),
        plans: out.plans,
        aggregate: out.aggregate,
        objective: out.objective,
        iterations: out.iterations,
        converged: out.converged,
        feasible: out.feasible,
        residuals: out.residuals,
    })
}
