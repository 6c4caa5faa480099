mod common;

use proptest::prelude::*;

fn run(check: common::Check) -> Result<(), TestCaseError> {
    check.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn probabilities_lie_on_the_simplex(seed in 0u64..10_000) {
        run(common::simplex(seed))?;
    }

    #[test]
    fn spreading_returns_its_fixed_point(
        seed in 0u64..10_000,
        n in 12usize..40,
        alpha in 0.0f64..0.99,
        gamma in 0.5f64..8.0,
    ) {
        run(common::spreading_fixed_point(seed, n, alpha, gamma))?;
    }

    #[test]
    fn alpha_zero_keeps_given_labels(seed in 0u64..10_000, n in 20usize..120) {
        run(common::alpha_zero_identity(seed, n))?;
    }

    #[test]
    fn flips_are_exact(
        seed in 0u64..10_000,
        n in 1usize..400,
        classes in 2usize..5,
        rate in 0.0f64..0.95,
        pi0 in 0.0f64..0.95,
        pi1 in 0.0f64..0.95,
    ) {
        run(common::exact_flip_counts(seed, n, classes, rate, [pi0, pi1]))?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn stream_windows_are_disjoint(
        seed in any::<u64>(),
        window_size in 1usize..60,
        n_windows in 0usize..10,
    ) {
        run(common::stream_disjoint(seed, 600, window_size, n_windows))?;
    }
}
