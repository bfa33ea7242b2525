use finopt_core::calibration::{average_coefficients, heat_transfer_coefficient, CalibrationSample, Region};
use proptest::prelude::*;

fn sample() -> impl Strategy<Value = CalibrationSample> {
    (
        1e-3..1e3f64,
        1e-6..1.0f64,
        300.0..600.0f64,
        0.01..50.0f64,
        prop::bool::ANY,
    )
        .prop_map(|(q_dot, area, t_bulk, delta, attached)| CalibrationSample {
            q_dot,
            area,
            t_surf_avg: t_bulk + delta,
            t_bulk_avg: t_bulk,
            region: if attached { Region::FinAttached } else { Region::FinFree },
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn coefficient_is_homogeneous_in_heat_rate_and_area(s in sample(), k in 1e-3..1e3f64) {
        let h = heat_transfer_coefficient(&s).unwrap();
        let scaled = CalibrationSample { q_dot: k * s.q_dot, area: k * s.area, ..s };
        let hk = heat_transfer_coefficient(&scaled).unwrap();
        prop_assert!((h - hk).abs() <= 4.0 * f64::EPSILON * h.abs(), "{h} vs {hk}");
    }

    #[test]
    fn averaging_ignores_sample_order(
        samples in prop::collection::vec(sample(), 1..12),
        order in prop::collection::vec(any::<u64>(), 12),
    ) {
        let mut shuffled: Vec<(u64, CalibrationSample)> = order.iter().copied().zip(samples.iter().copied()).collect();
        shuffled.sort_by_key(|(k, _)| *k);
        let shuffled: Vec<CalibrationSample> = shuffled.into_iter().map(|(_, s)| s).collect();
        let a = average_coefficients(&samples).unwrap();
        let b = average_coefficients(&shuffled).unwrap();
        prop_assert_eq!(a.h_f.to_bits(), b.h_f.to_bits());
        prop_assert_eq!(a.h_s.to_bits(), b.h_s.to_bits());
    }
}
