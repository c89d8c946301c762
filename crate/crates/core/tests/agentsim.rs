use std::collections::BTreeMap;

use fleetgrid::agentsim::{compute_decision_time, merge_reservations, simulate_reservations, SimSettings};
use fleetgrid::corpus::{Agent, Category, Gender, PtSubscription, Purpose, Station, Trip, Vehicle, DAY_MINUTES};
use fleetgrid::modechoice::{FixedChooser, LogitRule, Mode, PtGrid, RuleChooser, Sampling};
use proptest::prelude::*;

type Tour = ((f64, f64), Vec<((f64, f64), i64)>);

fn tours() -> impl Strategy<Value = Vec<Tour>> {
    let stop = ((0.0..8000.0f64, 0.0..8000.0f64), 30i64..240);
    prop::collection::vec(((0.0..8000.0f64, 0.0..8000.0f64), prop::collection::vec(stop, 1..4)), 1..25)
}

/// Home-based tours: home, each stop in turn, then home again.
fn world(tours: &[Tour]) -> (Vec<Agent>, Vec<Trip>) {
    let mut agents = Vec::new();
    let mut trips = Vec::new();
    for (a, (home, stops)) in tours.iter().enumerate() {
        agents.push(Agent {
            agent_id: a as u32,
            age_group: 3,
            gender: Gender::F,
            home_x: home.0,
            home_y: home.1,
            car_access: false,
            pt_subscription: PtSubscription::None,
        });
        let mut at = *home;
        let mut t = 420 + 10 * a as i64;
        let legs = stops.iter().map(|s| (s.0, s.1)).chain([(*home, 0)]);
        for (to, stay) in legs {
            let distance_m = (to.0 - at.0).hypot(to.1 - at.1);
            t += 20 + (distance_m / 500.0) as i64;
            trips.push(Trip {
                trip_id: trips.len() as u32,
                agent_id: a as u32,
                origin_x: at.0,
                origin_y: at.1,
                dest_x: to.0,
                dest_y: to.1,
                purpose_origin: Purpose::Home,
                purpose_dest: if to == *home { Purpose::Home } else { Purpose::Work },
                t_dest_start: t,
                distance_m,
            });
            t += stay;
            at = to;
        }
    }
    (agents, trips)
}

fn network() -> (Vec<Station>, Vec<Vehicle>) {
    let stations: Vec<Station> = (0..4).map(|i| Station::new(i, 2000.0 + 4000.0 * f64::from(i % 2), 2000.0 + 4000.0 * f64::from(i / 2))).collect();
    let vehicles = (0..6).map(|i| Vehicle::of_category(i, i % 4, Category::Combi)).collect();
    (stations, vehicles)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vehicles_are_never_double_booked(tours in tours(), seed: u64, car_always: bool) {
        let (agents, trips) = world(&tours);
        let (stations, vehicles) = network();
        let rule = RuleChooser { rule: LogitRule::default(), sampling: Sampling::Categorical };
        let fixed = FixedChooser::new(Mode::CarSharing);
        let chooser: &dyn fleetgrid::modechoice::ModeChooser = if car_always { &fixed } else { &rule };
        let grid = PtGrid::uniform(2.0);
        let out = simulate_reservations(&trips, &agents, &stations, &vehicles, chooser, &grid, SimSettings::default(), seed).unwrap();
        let again = simulate_reservations(&trips, &agents, &stations, &vehicles, chooser, &grid, SimSettings::default(), seed).unwrap();
        prop_assert_eq!(&out, &again);
        prop_assert_eq!(&merge_reservations(&out.raw).unwrap(), &out.reservations);

        let mut by_vehicle: BTreeMap<u32, Vec<(i64, i64)>> = BTreeMap::new();
        for r in &out.reservations {
            prop_assert!(r.t_start <= r.t_end && r.t_end <= DAY_MINUTES.max(r.t_start));
            prop_assert!(r.drive_km >= 0.0);
            prop_assert!(vehicles.iter().any(|v| v.vehicle_id == r.vehicle_id && v.home_station == r.station_id));
            by_vehicle.entry(r.vehicle_id).or_default().push((r.t_start, r.t_end));
        }
        for iv in by_vehicle.values_mut() {
            iv.sort_unstable();
            prop_assert!(iv.windows(2).all(|w| w[1].0 >= w[0].1));
        }
        prop_assert_eq!(out.log.len(), trips.len());
        if car_always {
            prop_assert!(!out.reservations.is_empty());
        }
    }

    #[test]
    fn decision_precedes_the_activity(d in 0.0..2e5f64, t in 0i64..DAY_MINUTES) {
        let trip = Trip {
            trip_id: 0,
            agent_id: 0,
            origin_x: 0.0,
            origin_y: 0.0,
            dest_x: d,
            dest_y: 0.0,
            purpose_origin: Purpose::Home,
            purpose_dest: Purpose::Work,
            t_dest_start: t,
            distance_m: d,
        };
        let dt = compute_decision_time(&trip);
        prop_assert!(dt >= 0 && dt <= t);
    }
}
