//! Exact single-vehicle scheduling by dynamic programming over price-response
//! maps.
//!
//! `M_t(sigma)` is the energy at state `t` chosen by the problem truncated at
//! `t` when stored energy at `t` is valued at `sigma`. It satisfies
//! `M_{t+1} = clip(M_t + Delta_t - drain_t, L_{t+1}, U_{t+1})`, and the
//! optimum is recovered backwards from `M_T(0)`.

use crate::error::{Error, Result};

use super::availability::VehicleAvailability;
use super::kernel::StepKernel;
use super::pwl::Pwl;
use super::BatteryParams;

const REPAIR_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct VehiclePlan {
    pub charge: Vec<f64>,
    pub discharge: Vec<f64>,
    /// Stored energy at states `0..=T`.
    pub energy: Vec<f64>,
}

impl VehiclePlan {
    pub fn power(&self, t: usize) -> f64 {
        self.charge[t] - self.discharge[t]
    }

    pub fn powers(&self) -> Vec<f64> {
        (0..self.charge.len()).map(|t| self.power(t)).collect()
    }
}

/// Per-step linear costs and consensus target for one vehicle.
#[derive(Debug, Clone, Copy)]
pub struct StepTerms<'a> {
    /// Cost per kW of net power in each step.
    pub price: &'a [f64],
    pub rho: f64,
    pub target: &'a [f64],
}

pub(crate) fn kernel(v: &VehicleAvailability, params: &BatteryParams, terms: &StepTerms, t: usize) -> StepKernel {
    let dt = params.dt_hours();
    StepKernel {
        cb: v.c_max[t],
        db: v.d_max[t],
        w_c: terms.price[t] + params.kappa,
        w_d: params.kappa - terms.price[t],
        rho: terms.rho,
        y: terms.target[t],
        lambda: params.lambda,
        e_c: params.eta_c * dt,
        e_d: dt / params.eta_d,
    }
}

/// Objective of a plan without the consensus term.
pub fn plan_cost(v: &VehicleAvailability, params: &BatteryParams, price: &[f64], plan: &VehiclePlan) -> f64 {
    (0..v.steps())
        .map(|t| {
            let (c, d) = (plan.charge[t], plan.discharge[t]);
            price[t] * (c - d) + params.kappa * (c + d) + 0.5 * params.lambda * (c * c + d * d)
        })
        .sum()
}

pub fn solve_vehicle(v: &VehicleAvailability, params: &BatteryParams, terms: &StepTerms) -> Result<VehiclePlan> {
    let kernels: Vec<StepKernel> = (0..v.steps()).map(|t| kernel(v, params, terms, t)).collect();
    solve_with_kernels(v, &kernels)
}

/// Euclidean projection of the power pair `(charge, discharge)` onto the
/// feasible set of `v`.
pub fn project_vehicle(v: &VehicleAvailability, params: &BatteryParams, charge: &[f64], discharge: &[f64]) -> Result<VehiclePlan> {
    let dt = params.dt_hours();
    let kernels: Vec<StepKernel> = (0..v.steps())
        .map(|t| StepKernel {
            cb: v.c_max[t],
            db: v.d_max[t],
            w_c: -charge[t],
            w_d: -discharge[t],
            rho: 0.0,
            y: 0.0,
            lambda: 1.0,
            e_c: params.eta_c * dt,
            e_d: dt / params.eta_d,
        })
        .collect();
    solve_with_kernels(v, &kernels)
}

fn solve_with_kernels(v: &VehicleAvailability, kernels: &[StepKernel]) -> Result<VehiclePlan> {
    let steps = v.steps();
    let mut ms: Vec<Pwl> = Vec::with_capacity(steps + 1);
    let mut hs: Vec<Pwl> = Vec::with_capacity(steps);
    ms.push(Pwl::constant(v.e0));
    for (t, k) in kernels.iter().enumerate() {
        let mut h = ms[t].add(&k.response());
        h.add_const(-v.drain[t]);
        let mut lo = v.lower[t + 1];
        if t + 1 == steps {
            lo = lo.max(v.terminal_target.min(h.max_value()));
        }
        let hi = v.upper[t + 1];
        if h.max_value() < lo - 1e-9 {
            let r = v.departures.get(&(t + 1)).and_then(|ids| ids.last().copied());
            let what = match r {
                Some(r) => format!("reservation {r}"),
                None => format!("state {}", t + 1),
            };
            return Err(Error::Infeasible(format!(
                "vehicle {}: {what} needs {:.3} kWh but at most {:.3} kWh can be stored",
                v.vehicle_id,
                lo,
                h.max_value()
            )));
        }
        if h.min_value() > hi + 1e-9 {
            return Err(Error::Infeasible(format!(
                "vehicle {}: state {} cannot be kept below {:.3} kWh",
                v.vehicle_id,
                t + 1,
                hi
            )));
        }
        ms.push(h.clip(lo, hi));
        hs.push(h);
    }

    let mut charge = vec![0.0; steps];
    let mut discharge = vec![0.0; steps];
    let mut s = ms[steps].eval(0.0);
    for t in (0..steps).rev() {
        let sigma = hs[t].inverse(s);
        let (c, d) = kernels[t].solve(sigma);
        charge[t] = c;
        discharge[t] = d;
        s = ms[t].eval(sigma);
    }

    let mut energy = vec![v.e0; steps + 1];
    let terminal_lo = ms[steps].min_value();
    for t in 0..steps {
        let k = &kernels[t];
        let mut next = energy[t] + k.e_c * charge[t] - k.e_d * discharge[t] - v.drain[t];
        let lo = if t + 1 == steps { terminal_lo } else { v.lower[t + 1] };
        let hi = v.upper[t + 1];
        if next > hi {
            let excess = next - hi;
            if excess > REPAIR_LIMIT {
                return Err(Error::NonConvergence(format!("vehicle {} upper bound drift {excess}", v.vehicle_id)));
            }
            let dc = (excess / k.e_c).min(charge[t]);
            charge[t] -= dc;
            let rest = (excess - dc * k.e_c) / k.e_d;
            discharge[t] = (discharge[t] + rest).min(k.db);
            next = energy[t] + k.e_c * charge[t] - k.e_d * discharge[t] - v.drain[t];
        } else if next < lo {
            let short = lo - next;
            if short > REPAIR_LIMIT {
                return Err(Error::NonConvergence(format!("vehicle {} lower bound drift {short}", v.vehicle_id)));
            }
            let dd = (short / k.e_d).min(discharge[t]);
            discharge[t] -= dd;
            let rest = (short - dd * k.e_d) / k.e_c;
            charge[t] = (charge[t] + rest).min(k.cb);
            next = energy[t] + k.e_c * charge[t] - k.e_d * discharge[t] - v.drain[t];
        }
        energy[t + 1] = next;
    }
    Ok(VehiclePlan {
        charge,
        discharge,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn vehicle(steps: usize, e0: f64, away: &[usize], drains: &[(usize, f64)]) -> VehicleAvailability {
        let mut at = vec![true; steps];
        away.iter().for_each(|&t| at[t] = false);
        let mut drain = vec![0.0; steps];
        let mut departures = BTreeMap::new();
        for &(t, e) in drains {
            drain[t] = e;
            departures.insert(t, vec![t as u32]);
        }
        let mut lower: Vec<f64> = (0..=steps).map(|t| 1.0 + if t < steps { drain[t] } else { 0.0 }).collect();
        lower[steps] = 1.0;
        VehicleAvailability {
            vehicle_id: 1,
            station_id: 1,
            capacity_kwh: 10.0,
            c_max: at.iter().map(|&a| if a { 2.0 } else { 0.0 }).collect(),
            d_max: at.iter().map(|&a| if a { 2.0 } else { 0.0 }).collect(),
            at_station: at,
            drain,
            lower,
            upper: vec![9.5; steps + 1],
            e0,
            terminal_target: e0,
            departures,
        }
    }

    fn params(eta: f64) -> BatteryParams {
        BatteryParams {
            eta_c: eta,
            eta_d: eta,
            timestep_minutes: 60,
            kappa: 1e-3,
            lambda: 1e-4,
            ..BatteryParams::default()
        }
    }

    fn total(v: &VehicleAvailability, p: &BatteryParams, terms: &StepTerms, c: &[f64], d: &[f64]) -> f64 {
        (0..v.steps()).map(|t| kernel(v, p, terms, t).cost(c[t], d[t])).sum()
    }

    fn feasible(v: &VehicleAvailability, p: &BatteryParams, c: &[f64], d: &[f64], terminal: f64) -> bool {
        let mut e = v.e0;
        for t in 0..v.steps() {
            e += p.eta_c * p.dt_hours() * c[t] - p.dt_hours() / p.eta_d * d[t] - v.drain[t];
            let lo = if t + 1 == v.steps() { terminal } else { v.lower[t + 1] };
            if e < lo - 1e-9 || e > v.upper[t + 1] + 1e-9 {
                return false;
            }
        }
        true
    }

    /// Exhaustive search over net powers on a 0.5 kW lattice with unit
    /// efficiency, which keeps energies on a lattice as well.
    fn lattice_optimum(v: &VehicleAvailability, p: &BatteryParams, terms: &StepTerms) -> f64 {
        let levels: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.5).collect();
        let steps = v.steps();
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; steps];
        loop {
            let mut c = vec![0.0; steps];
            let mut d = vec![0.0; steps];
            let mut ok = true;
            for t in 0..steps {
                let q = levels[idx[t]];
                if q.abs() > v.c_max[t].max(v.d_max[t]) {
                    ok = false;
                    break;
                }
                if q > 0.0 {
                    c[t] = q;
                } else {
                    d[t] = -q;
                }
            }
            if ok && feasible(v, p, &c, &d, v.terminal_target) {
                best = best.min(total(v, p, terms, &c, &d));
            }
            let mut i = 0;
            while i < steps {
                idx[i] += 1;
                if idx[i] < levels.len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == steps {
                return best;
            }
        }
    }

    #[test]
    fn matches_lattice_search_on_lattice_fixture() {
        let v = vehicle(6, 5.0, &[3], &[(3, 3.0)]);
        let p = params(1.0);
        let price = [0.3, 0.1, 0.2, 0.0, 0.05, 0.4];
        let target = [0.0; 6];
        for rho in [0.0, 0.5] {
            let terms = StepTerms {
                price: &price,
                rho,
                target: &target,
            };
            let plan = solve_vehicle(&v, &p, &terms).unwrap();
            let got = total(&v, &p, &terms, &plan.charge, &plan.discharge);
            let lattice = lattice_optimum(&v, &p, &terms);
            assert!(got <= lattice + 1e-9, "rho {rho}: {got} vs {lattice}");
            if rho == 0.0 {
                assert!(lattice - got <= 1e-3 * lattice.abs().max(1e-2), "{got} vs {lattice}");
            }
        }
    }

    #[test]
    fn local_perturbations_do_not_improve() {
        let v = vehicle(12, 4.0, &[4, 5, 6], &[(4, 2.5)]);
        let p = params(0.95);
        let price: Vec<f64> = (0..12).map(|t| 0.1 + 0.05 * ((t * 7 % 5) as f64)).collect();
        let target: Vec<f64> = (0..12).map(|t| (t as f64 - 6.0) * 0.3).collect();
        let terms = StepTerms {
            price: &price,
            rho: 0.2,
            target: &target,
        };
        let plan = solve_vehicle(&v, &p, &terms).unwrap();
        assert!(feasible(&v, &p, &plan.charge, &plan.discharge, v.e0));
        let base = total(&v, &p, &terms, &plan.charge, &plan.discharge);
        for a in 0..12 {
            for b in 0..12 {
                for eps in [1e-3, -1e-3] {
                    let mut c = plan.charge.clone();
                    let d = plan.discharge.clone();
                    c[a] += eps;
                    c[b] -= eps;
                    if c[a] < 0.0 || c[b] < 0.0 || c[a] > v.c_max[a] || c[b] > v.c_max[b] {
                        continue;
                    }
                    if feasible(&v, &p, &c, &d, v.e0) {
                        assert!(total(&v, &p, &terms, &c, &d) >= base - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn projection_is_nearest_feasible_point() {
        let v = vehicle(6, 5.0, &[3], &[(3, 3.0)]);
        let p = params(0.95);
        let a_c = [3.0, 0.5, 0.0, 1.0, 2.0, 0.0];
        let a_d = [0.0, 0.0, 4.0, 0.0, 0.0, 1.0];
        let plan = project_vehicle(&v, &p, &a_c, &a_d).unwrap();
        assert!(feasible(&v, &p, &plan.charge, &plan.discharge, v.e0));
        let dist = |c: &[f64], d: &[f64]| -> f64 {
            (0..6).map(|t| (c[t] - a_c[t]).powi(2) + (d[t] - a_d[t]).powi(2)).sum()
        };
        let base = dist(&plan.charge, &plan.discharge);
        assert_eq!(plan.charge[3], 0.0);
        for a in 0..6 {
            for eps in [1e-3, -1e-3] {
                let mut c = plan.charge.clone();
                c[a] += eps;
                if c[a] >= 0.0 && c[a] <= v.c_max[a] && feasible(&v, &p, &c, &plan.discharge, v.e0) {
                    assert!(dist(&c, &plan.discharge) >= base - 1e-12);
                }
            }
        }
    }

    #[test]
    fn infeasible_departure_names_reservation() {
        let v = vehicle(4, 1.5, &[], &[(1, 7.0)]);
        let p = params(0.95);
        let zero = [0.0; 4];
        let err = solve_vehicle(
            &v,
            &p,
            &StepTerms {
                price: &zero,
                rho: 0.0,
                target: &zero,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("reservation 1"), "{err}");
    }

    #[test]
    fn terminal_target_clamps_to_reachable() {
        let v = vehicle(4, 6.0, &[1, 2, 3], &[(1, 4.0)]);
        let p = params(0.95);
        let zero = [0.0; 4];
        let terms = StepTerms {
            price: &zero,
            rho: 0.0,
            target: &zero,
        };
        let plan = solve_vehicle(&v, &p, &terms).unwrap();
        let reach = 6.0 + 0.95 * 2.0 - 4.0;
        assert!((plan.energy[4] - reach).abs() < 1e-9);
    }
}
