use fleetgrid::network::{place_from, place_new_stations, scale_fleet, SCALE_TOLERANCE};
use proptest::prelude::*;

fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..1e4f64, 0.0..1e4f64), n)
}

fn cost(x: &[(f64, f64)], centers: &[(f64, f64)]) -> f64 {
    x.iter()
        .map(|p| centers.iter().map(|c| (p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).fold(f64::INFINITY, f64::min))
        .sum()
}

proptest! {
    #[test]
    fn placement_never_raises_the_objective(x in points(10..120), fixed in points(0..5), k in 1usize..6, seed: u64) {
        let p = place_new_stations(&x, k, &fixed, seed, 200, 1e-9).unwrap();
        prop_assert_eq!(p.centers.len(), k);
        for w in p.objective.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-9);
        }
        let all: Vec<_> = fixed.iter().chain(&p.centers).copied().collect();
        let last = *p.objective.last().unwrap();
        prop_assert!(cost(&x, &all) <= last * (1.0 + 1e-9) + 1e-6);
    }

    #[test]
    fn scaled_fleet_hits_the_target(counts in prop::collection::vec(1usize..12, 3..30), factor in 0.8..2.5f64, seed: u64) {
        let current: Vec<(u32, usize)> = counts.iter().enumerate().map(|(i, &n)| (i as u32, n)).collect();
        let total: usize = counts.iter().sum();
        let desired = ((total as f64 * factor).round() as usize).max(200);
        let plan = scale_fleet(&current, desired, 0.1, seed).unwrap();
        prop_assert!((plan.total() as f64 - desired as f64).abs() / desired as f64 <= SCALE_TOLERANCE);
        prop_assert_eq!(plan.stations.len(), current.len());
    }
}

#[test]
fn single_free_center_takes_the_mean_of_its_cluster() {
    let x = [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (100.0, 100.0)];
    let p = place_from(&x, &[(100.0, 100.0)], vec![(5.0, 5.0)], 50, 1e-12).unwrap();
    assert!(p.converged);
    assert!((p.centers[0].0 - 2.0 / 3.0).abs() < 1e-12 && (p.centers[0].1 - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn too_many_centers_are_rejected() {
    assert!(place_new_stations(&[(0.0, 0.0)], 2, &[], 0, 10, 1e-9).is_err());
}
