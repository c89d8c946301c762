use fleetgrid::corpus::{Category, Reservation, Vehicle};
use fleetgrid::v2g::fixture::synthetic_fleet;
use fleetgrid::v2g::*;
use proptest::prelude::*;

fn hourly() -> BatteryParams {
    BatteryParams {
        timestep_minutes: 60,
        ..BatteryParams::default()
    }
}

fn tariff(p: &BatteryParams) -> Vec<f64> {
    tariff_profile(DEFAULT_TARIFF_CHF_PER_KWH, p.timestep_minutes)
}

#[test]
fn single_station_admm_matches_station_subproblem() {
    let p = hourly();
    let (vehicles, res) = synthetic_fleet(1, 4, 3);
    let avail = build_availability(&res, &vehicles, &p).unwrap();
    avail.require_feasible().unwrap();
    let reference: Vec<f64> = (0..24).map(|t| if (17..21).contains(&t) { -15.0 } else { 6.0 }).collect();
    let alpha = 0.05;
    let obj = ReferenceTracking {
        reference: reference.clone(),
        alpha,
    };
    let admm = AdmmParams {
        eps: 1e-7,
        max_iter: 5000,
        inner: PgParams { max_iter: 100, tol: 1e-9 },
        ..AdmmParams::default()
    };
    let s = admm_schedule(&avail, &p, &tariff(&p), &obj, &admm).unwrap();
    s.check(&avail, &p).unwrap();
    let refs: Vec<&VehicleAvailability> = avail.vehicles.iter().collect();
    let price = step_prices(&tariff(&p), &p);
    let station = solve_station(&refs, &p, &price, alpha, &reference, &PgParams::default()).unwrap();
    let rel = (s.objective - station.objective).abs() / station.objective.abs();
    assert!(rel < 1e-6, "admm {} station {} rel {rel} after {}", s.objective, station.objective, s.iterations);
}

#[test]
fn three_stations_match_centralized_oracle() {
    let p = hourly();
    let (vehicles, res) = synthetic_fleet(3, 5, 7);
    let avail = build_availability(&res, &vehicles, &p).unwrap();
    avail.require_feasible().unwrap();
    let reference: Vec<f64> = (0..24).map(|t| if (17..21).contains(&t) { -40.0 } else { 15.0 }).collect();
    let alpha = 0.05;
    let obj = ReferenceTracking {
        reference: reference.clone(),
        alpha,
    };
    let s = admm_schedule(&avail, &p, &tariff(&p), &obj, &AdmmParams::default()).unwrap();
    s.check(&avail, &p).unwrap();
    let refs: Vec<&VehicleAvailability> = avail.vehicles.iter().collect();
    let price = step_prices(&tariff(&p), &p);
    let oracle = solve_station(&refs, &p, &price, alpha, &reference, &PgParams::default()).unwrap();
    assert!(oracle.converged);
    let gap = (s.objective - oracle.objective) / oracle.objective.abs();
    assert!(gap.abs() <= 1e-3, "admm {} oracle {} gap {gap} after {}", s.objective, oracle.objective, s.iterations);
}

#[test]
fn zero_objective_buys_trip_energy_at_cheapest_steps() {
    let p = hourly();
    let v = Vehicle::of_category(0, 1, Category::Combi);
    let r = Reservation {
        reservation_id: 0,
        vehicle_id: 0,
        agent_id: 0,
        station_id: 1,
        t_start: 8 * 60,
        t_end: 10 * 60,
        drive_km: 60.0,
        forced_return: false,
    };
    let avail = build_availability(&[r], std::slice::from_ref(&v), &p).unwrap();
    let t = tariff(&p);
    let s = admm_schedule(&avail, &p, &t, &ZeroObjective { steps: 24 }, &AdmmParams::default()).unwrap();
    s.check(&avail, &p).unwrap();
    let plan = &s.plans[0];
    let needed = 60.0 * v.consumption / p.eta_c;
    let charged: f64 = plan.charge.iter().sum::<f64>() * p.dt_hours();
    assert!((charged - needed).abs() < 1e-3, "{charged} vs {needed}");
    assert!(plan.discharge.iter().all(|&d| d < 1e-6));
    let cheapest = t.iter().copied().fold(f64::INFINITY, f64::min);
    for (step, &c) in plan.charge.iter().enumerate() {
        if c > 1e-6 {
            assert_eq!(t[step], cheapest, "charging at step {step}");
        }
    }
    let idle = build_availability(&[], &[v], &p).unwrap();
    let s = admm_schedule(&idle, &p, &t, &ZeroObjective { steps: 24 }, &AdmmParams::default()).unwrap();
    assert!(s.plans[0].powers().iter().all(|x| x.abs() < 1e-9));
}

#[test]
fn one_idle_vehicle_shaves_a_single_step_peak() {
    let p = hourly();
    let mut v = Vehicle::of_category(0, 1, Category::Combi);
    v.max_charge_power = 10.0;
    v.max_discharge_power = 10.0;
    let avail = build_availability(&[], &[v], &p).unwrap();
    let mut load = vec![0.05; 24];
    load[18] = 0.1;
    let r = peak_shave(&avail, &p, &tariff(&p), &load, 1000.0, &AdmmParams::default()).unwrap();
    assert!((r.peak_before_mw - 0.1).abs() < 1e-12);
    assert!((r.peak_after_mw - 0.09).abs() < 1e-6, "{}", r.peak_after_mw);
    r.schedule.check(&avail, &p).unwrap();
}

#[test]
fn empty_fleet_leaves_peak_unchanged() {
    let p = hourly();
    let avail = build_availability(&[], &[], &p).unwrap();
    let load = fixture::dso_profile(24, 1.0, 2.0);
    let r = peak_shave(&avail, &p, &tariff(&p), &load, 500.0, &AdmmParams::default()).unwrap();
    assert_eq!(r.peak_before_mw, r.peak_after_mw);
}

#[test]
fn envelope_is_zero_at_zero_price_and_monotone() {
    let p = BatteryParams::default();
    let (vehicles, res) = synthetic_fleet(2, 3, 11);
    let avail = build_availability(&res, &vehicles, &p).unwrap();
    let prices = [0.0, 10.0, 100.0, 500.0, 1000.0, 2000.0];
    let admm = AdmmParams {
        jobs: 4,
        ..AdmmParams::default()
    };
    let t = tariff(&p);
    let env = flexibility_envelope(&avail, &p, &t, &prices, &admm).unwrap();
    let sub = avail.subset(|v| v.vehicle_id % 2 == 0);
    let env_sub = flexibility_envelope(&sub, &p, &t, &prices, &admm).unwrap();
    for h in 0..24 {
        for dir in [1i8, -1] {
            assert_eq!(env.get(h, 0.0, dir), Some(0.0));
            let mut prev = 0.0;
            for &pr in &prices {
                let f = env.get(h, pr, dir).unwrap();
                assert!(f >= prev - 1e-9, "hour {h} dir {dir} price {pr}: {f} < {prev}");
                assert!(f + 1e-9 >= env_sub.get(h, pr, dir).unwrap());
                prev = f;
            }
        }
    }
    assert!(env.points.iter().any(|x| x.flexibility_kw > 1.0));
}

fn arb_fleet() -> impl Strategy<Value = (Vec<Vehicle>, Vec<Reservation>)> {
    (1usize..4, 1usize..4, any::<u64>()).prop_map(|(s, k, seed)| synthetic_fleet(s, k, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn returned_schedules_satisfy_vehicle_invariants((vehicles, res) in arb_fleet(), price in 0.0f64..3000.0) {
        let p = hourly();
        let avail = build_availability(&res, &vehicles, &p).unwrap();
        let t = tariff(&p);
        let load = fixture::dso_profile(24, 0.05, 0.12);
        let admm = AdmmParams { max_iter: 60, ..AdmmParams::default() };
        let r = peak_shave(&avail, &p, &t, &load, price, &admm).unwrap();
        r.schedule.check(&avail, &p).unwrap();
        r.baseline.check(&avail, &p).unwrap();
        prop_assert!(r.peak_after_mw <= r.peak_before_mw);
        for (v, plan) in avail.vehicles.iter().zip(&r.schedule.plans) {
            let charged: f64 = plan.charge.iter().sum::<f64>() * p.eta_c * p.dt_hours();
            let discharged: f64 = plan.discharge.iter().sum::<f64>() * p.dt_hours() / p.eta_d;
            let drained: f64 = v.drain.iter().sum();
            let delta = plan.energy[24] - plan.energy[0];
            prop_assert!((delta - (charged - discharged - drained)).abs() < 1e-9 * v.capacity_kwh);
        }
    }
}
