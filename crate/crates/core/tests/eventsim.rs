use fleetgrid::eventsim::fixture::LogGenerator;
use fleetgrid::eventsim::{
    fit_event_distributions, fit_exp_power, fit_exp_power_fixed_k, records_from_sample, sample_day, Calendar, ExpPowerParams,
};
use fleetgrid::rng::stream;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fixed_k_zero_is_the_exponential_fit(xs in prop::collection::vec(0.01..100.0f64, 20..300)) {
        let p = fit_exp_power_fixed_k(&xs, 0.0).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert!((p.lambda - 1.0 / mean).abs() <= 1e-9 * p.lambda.max(1.0));
    }

    #[test]
    fn free_fit_recovers_its_parameters(lambda in 0.2..3.0f64, k in 0.0..2.0f64, seed: u64) {
        let truth = ExpPowerParams { lambda, k };
        let mut r = stream(seed, "exp-power-recovery");
        let xs: Vec<f64> = (0..20_000).map(|_| truth.sample(&mut r)).collect();
        let fit = fit_exp_power(&xs).unwrap();
        prop_assert!((fit.mean() - truth.mean()).abs() / truth.mean() < 0.05, "{fit:?} vs {truth:?}");
        prop_assert!((fit.k - k).abs() < 0.15, "{fit:?} vs {truth:?}");
    }

    #[test]
    fn sampled_days_are_valid(seed: u64, weekend: bool) {
        let generator = LogGenerator::new((1..=5).collect(), 1.0, 3.0);
        let dist = generator.truth();
        let day = sample_day(&dist, weekend, seed).unwrap();
        for b in &day {
            prop_assert!((0..1440).contains(&b.start_min));
            prop_assert!(b.duration_h > 0.0 && b.distance_km > 0.0);
            prop_assert!(dist.stations.contains(&b.station_id));
        }
        prop_assert_eq!(records_from_sample(3, weekend, &day).len(), day.len());
        prop_assert_eq!(sample_day(&dist, weekend, seed).unwrap(), day);
    }
}

#[test]
fn fitted_slots_have_normalized_station_probabilities() {
    let stations: Vec<u32> = (1..=8).collect();
    let log = LogGenerator::new(stations.clone(), 2.0, 6.0).generate(28, 3).unwrap();
    let fit = fit_event_distributions(&log, Calendar::from_records(&log), &stations).unwrap();
    assert_eq!(fit.slots.len(), 48);
    for s in &fit.slots {
        assert!((s.station_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.station_probs.iter().all(|&p| p > 0.0));
        assert!(s.poisson_rate >= 0.0);
    }
}
