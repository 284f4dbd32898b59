mod common;

use common::checks;
use conic_synth::linalg::Mat;
use proptest::prelude::*;

fn hold(c: checks::Check) -> Result<(), TestCaseError> {
    c.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lyapunov_residual_is_small(seed in any::<u64>()) {
        hold(checks::lyapunov_residual(seed))?;
    }

    #[test]
    fn riccati_solution_is_stabilizing(seed in any::<u64>()) {
        hold(checks::riccati_stabilizing(seed))?;
    }

    #[test]
    fn closed_loop_stability_matches_eigenvalues(seed in any::<u64>()) {
        hold(checks::closed_loop_stability(seed))?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn h2_norm_matches_frequency_integral(seed in any::<u64>()) {
        hold(checks::h2_against_quadrature(seed))?;
    }
}

#[test]
fn quadrature_oracle_on_first_order_lag() {
    let sys = conic_synth::lti::StateSpace::strictly_proper(
        Mat::from_element(1, 1, -1.0),
        Mat::from_element(1, 1, 1.0),
        Mat::from_element(1, 1, 1.0),
    )
    .unwrap();
    assert!((common::h2_by_quadrature(&sys, 1e-8) - 0.5).abs() < 1e-7);
}
