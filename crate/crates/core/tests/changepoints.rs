mod common;

use common::{objective, oracle};
use covkg::timeseries::pelt;
use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pelt_matches_optimal_partitioning(
        y in proptest::collection::vec(-5.0f64..5.0, 1..60),
        penalty in 0.01f64..10.0,
    ) {
        let cp = pelt(&y, penalty);
        prop_assert_eq!(*cp.boundaries.last().unwrap(), y.len());
        prop_assert!(cp.boundaries.windows(2).all(|w| w[0] < w[1]));
        let got = objective(&y, &cp.boundaries, penalty);
        let want = oracle(&y, penalty);
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
    }

    #[test]
    fn pelt_matches_oracle_on_piecewise_signals(
        levels in proptest::collection::vec((-4i32..4, 1usize..15), 1..6),
        noise in proptest::collection::vec(-0.3f64..0.3, 80),
        penalty in 0.05f64..4.0,
    ) {
        let y: Vec<f64> = levels
            .iter()
            .flat_map(|&(l, len)| std::iter::repeat_n(l as f64, len))
            .zip(&noise)
            .map(|(l, e)| l + e)
            .collect();
        let got = objective(&y, &pelt(&y, penalty).boundaries, penalty);
        let want = oracle(&y, penalty);
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()));
    }
}
