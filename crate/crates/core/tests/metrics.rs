use fleetgrid::metrics::{station_zscores, utilization, wasserstein_1d};
use fleetgrid::corpus::Reservation;
use proptest::prelude::*;

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, 1..60)
}

fn booking(id: u32, vehicle: u32, start: i64, len: i64) -> Reservation {
    Reservation {
        reservation_id: id,
        vehicle_id: vehicle,
        agent_id: 0,
        station_id: 1,
        t_start: start,
        t_end: start + len,
        drive_km: 1.0,
        forced_return: false,
    }
}

proptest! {
    #[test]
    fn utilization_rates_are_shares(bookings in prop::collection::vec((0u32..8, -100i64..1500, 0i64..600), 0..40)) {
        let res: Vec<Reservation> = bookings.iter().enumerate().map(|(i, &(v, s, l))| booking(i as u32, v, s, l)).collect();
        let u = utilization(&res, &[0, 1, 2, 3, 4, 5], 1440);
        for x in std::iter::once(u.count_rate).chain([u.time_rate]).chain(u.hourly.iter().copied()) {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&x), "{x}");
        }
    }

    #[test]
    fn wasserstein_is_a_metric(a in samples(), b in samples(), c in samples()) {
        let d = |x: &[f64], y: &[f64]| wasserstein_1d(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!(d(&a, &b) >= 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-9);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
    }

    #[test]
    fn shifting_every_sample_moves_the_distance_by_the_shift(a in samples(), shift in -500i32..500) {
        let a: Vec<f64> = a.iter().map(|x| x.round()).collect();
        let b: Vec<f64> = a.iter().map(|x| x + f64::from(shift)).collect();
        prop_assert_eq!(wasserstein_1d(&a, &b).unwrap(), f64::from(shift.abs()));
    }

    #[test]
    fn zscores_cover_every_reference_station(counts in prop::collection::btree_map(0u32..20, 0.0..50.0f64, 0..20),
                                             reference in prop::collection::btree_map(0u32..20, (0.0..50.0f64, 0.0..5.0f64), 1..20)) {
        let z = station_zscores(&counts, &reference);
        let covered = z.per_station.len() + z.excluded.len();
        prop_assert_eq!(covered, reference.len());
        for (id, _) in &z.per_station {
            prop_assert!(reference[id].1 > 0.0);
        }
    }
}

#[test]
fn empty_samples_are_rejected() {
    assert!(wasserstein_1d(&[], &[1.0]).is_err());
}

#[test]
fn utilization_of_one_half_day_booking() {
    let u = utilization(&[booking(0, 4, 0, 720)], &[4, 5], 1440);
    assert_eq!(u.count_rate, 0.5);
    assert_eq!(u.time_rate, 0.5);
    assert_eq!(u.hourly[..12], [0.5; 12]);
    assert_eq!(u.hourly[12..], [0.0; 12]);
}
