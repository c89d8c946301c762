//! Station subproblem: the vehicles at one station jointly track a target
//! aggregate profile. Solved by accelerated projected gradient with exact
//! per-vehicle projections, or by cyclic exact per-vehicle solves.

use log::{debug, warn};

use crate::error::Result;

use super::availability::VehicleAvailability;
use super::vehicle::{kernel, project_vehicle, solve_vehicle, StepTerms, VehiclePlan};
use super::BatteryParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgParams {
    pub max_iter: usize,
    /// Stopping threshold in kW: the gradient-mapping norm for the
    /// projected gradient solver, the largest power change per sweep for
    /// the sweep solver.
    pub tol: f64,
}

impl Default for PgParams {
    fn default() -> Self {
        PgParams {
            max_iter: 5000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationSolution {
    pub plans: Vec<VehiclePlan>,
    pub aggregate: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Point {
    c: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
}

fn objective(p: &Point, params: &BatteryParams, price: &[f64], rho: f64, target: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut agg = vec![0.0; target.len()];
    for (c, d) in p.c.iter().zip(&p.d) {
        for t in 0..target.len() {
            total += price[t] * (c[t] - d[t]) + params.kappa * (c[t] + d[t]) + 0.5 * params.lambda * (c[t] * c[t] + d[t] * d[t]);
            agg[t] += c[t] - d[t];
        }
    }
    total + 0.5 * rho * agg.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// Minimizes `sum_v cost_v + rho/2 ||sum_v p_v - target||^2` over the
/// vehicles of a station, where `cost_v` is the price, cycling and
/// regularization cost of vehicle `v`. Starts from the solution without the
/// tracking term.
pub fn solve_station(
    vehicles: &[&VehicleAvailability],
    params: &BatteryParams,
    price: &[f64],
    rho: f64,
    target: &[f64],
    pg: &PgParams,
) -> Result<StationSolution> {
    let zero = vec![0.0; target.len()];
    let terms = StepTerms {
        price,
        rho: 0.0,
        target: &zero,
    };
    let start = vehicles.iter().map(|v| solve_vehicle(v, params, &terms)).collect::<Result<Vec<_>>>()?;
    solve_station_from(vehicles, params, price, rho, target, pg, start)
}

/// As [`solve_station`], from feasible plans `start`, by FISTA with adaptive
/// restart.
pub fn solve_station_from(
    vehicles: &[&VehicleAvailability],
    params: &BatteryParams,
    price: &[f64],
    rho: f64,
    target: &[f64],
    pg: &PgParams,
    start: Vec<VehiclePlan>,
) -> Result<StationSolution> {
    let steps = target.len();
    let n = vehicles.len();
    let mut plans = start;
    let to_point = |plans: &[VehiclePlan]| Point {
        c: plans.iter().map(|p| p.charge.clone()).collect(),
        d: plans.iter().map(|p| p.discharge.clone()).collect(),
    };
    let mut x = to_point(&plans);
    let mut fx = objective(&x, params, price, rho, target);
    let mut converged = rho == 0.0 || n == 0;
    let mut iterations = 0;
    if !converged {
        let lip = params.lambda + 2.0 * n as f64 * rho;
        let mut y = to_point(&plans);
        let mut momentum = 1.0f64;
        while iterations < pg.max_iter {
            iterations += 1;
            let mut resid = vec![0.0; steps];
            for t in 0..steps {
                resid[t] = y.c.iter().zip(&y.d).map(|(c, d)| c[t] - d[t]).sum::<f64>() - target[t];
            }
            let mut next_plans = Vec::with_capacity(n);
            let mut mapping: f64 = 0.0;
            for (i, v) in vehicles.iter().enumerate() {
                let ac: Vec<f64> = (0..steps)
                    .map(|t| {
                        let g = price[t] + params.kappa + params.lambda * y.c[i][t] + rho * resid[t];
                        y.c[i][t] - g / lip
                    })
                    .collect();
                let ad: Vec<f64> = (0..steps)
                    .map(|t| {
                        let g = -price[t] + params.kappa + params.lambda * y.d[i][t] - rho * resid[t];
                        y.d[i][t] - g / lip
                    })
                    .collect();
                let plan = project_vehicle(v, params, &ac, &ad)?;
                for t in 0..steps {
                    mapping = mapping
                        .max(lip * (plan.charge[t] - y.c[i][t]).abs())
                        .max(lip * (plan.discharge[t] - y.d[i][t]).abs());
                }
                next_plans.push(plan);
            }
            let z = to_point(&next_plans);
            let fz = objective(&z, params, price, rho, target);
            if fz > fx {
                y = to_point(&plans);
                momentum = 1.0;
                continue;
            }
            let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
            let beta = (momentum - 1.0) / next_momentum;
            for i in 0..n {
                for t in 0..steps {
                    y.c[i][t] = z.c[i][t] + beta * (z.c[i][t] - x.c[i][t]);
                    y.d[i][t] = z.d[i][t] + beta * (z.d[i][t] - x.d[i][t]);
                }
            }
            momentum = next_momentum;
            x = z;
            fx = fz;
            plans = next_plans;
            if mapping < pg.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            warn!("station projected gradient stopped after {iterations} iterations");
        }
    }
    let aggregate = (0..steps).map(|t| plans.iter().map(|p| p.power(t)).sum()).collect();
    Ok(StationSolution {
        plans,
        aggregate,
        objective: fx,
        iterations,
        converged,
    })
}

/// As [`solve_station_from`], by cyclic exact minimization over vehicles.
/// Stops when no power changes by more than `pg.tol` in a sweep.
pub fn solve_station_sweeps(
    vehicles: &[&VehicleAvailability],
    params: &BatteryParams,
    price: &[f64],
    rho: f64,
    target: &[f64],
    pg: &PgParams,
    start: Vec<VehiclePlan>,
) -> Result<StationSolution> {
    let steps = target.len();
    let mut plans = start;
    let mut agg: Vec<f64> = (0..steps).map(|t| plans.iter().map(|p| p.power(t)).sum()).collect();
    let mut converged = rho == 0.0;
    let mut iterations = 0;
    while !converged && iterations < pg.max_iter {
        iterations += 1;
        let mut change: f64 = 0.0;
        for (i, v) in vehicles.iter().enumerate() {
            let own = plans[i].powers();
            let rest: Vec<f64> = (0..steps).map(|t| target[t] - (agg[t] - own[t])).collect();
            let plan = solve_vehicle(v, params, &StepTerms { price, rho, target: &rest })?;
            for t in 0..steps {
                let d = plan.power(t) - own[t];
                agg[t] += d;
                change = change.max(d.abs());
            }
            plans[i] = plan;
        }
        if change < pg.tol || vehicles.len() == 1 {
            converged = true;
        }
    }
    if !converged {
        debug!("station sweeps stopped after {iterations} iterations");
    }
    let mut x = Point { c: Vec::new(), d: Vec::new() };
    for p in &plans {
        x.c.push(p.charge.clone());
        x.d.push(p.discharge.clone());
    }
    let objective = objective(&x, params, price, rho, target);
    let aggregate = (0..steps).map(|t| plans.iter().map(|p| p.power(t)).sum()).collect();
    Ok(StationSolution {
        plans,
        aggregate,
        objective,
        iterations,
        converged,
    })
}

/// Station objective including the tracking term.
pub fn station_objective(
    vehicles: &[&VehicleAvailability],
    params: &BatteryParams,
    price: &[f64],
    rho: f64,
    target: &[f64],
    plans: &[VehiclePlan],
) -> f64 {
    let zero = vec![0.0; target.len()];
    let terms = StepTerms {
        price,
        rho: 0.0,
        target: &zero,
    };
    let mut total = 0.0;
    let mut agg = vec![0.0; target.len()];
    for (v, p) in vehicles.iter().zip(plans) {
        for t in 0..target.len() {
            total += kernel(v, params, &terms, t).cost(p.charge[t], p.discharge[t]);
            agg[t] += p.power(t);
        }
    }
    total + 0.5 * rho * agg.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}
