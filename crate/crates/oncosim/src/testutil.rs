//! Strategies shared by the unit-test suites.

use proptest::prelude::*;

use crate::model::RateParams;

/// Any valid parameter set: (lambda, kappa) pairs are drawn as a shared
/// budget and a split so the row constraints hold by construction.
pub(crate) fn arb_valid_params() -> impl Strategy<Value = RateParams> {
    (
        0.0..=1.0f64,
        0.0..=1.0f64,
        0.0..=1.0f64,
        0.0..=1.0f64,
        0.0..=1.0f64,
        0.0..=1.0f64,
        0.0..=1.0f64,
    )
        .prop_map(|(b1, a1, b2, a2, kappa3, mu, gamma)| RateParams {
            lambda1: b1 * a1,
            kappa1: b1 * (1.0 - a1),
            lambda2: b2 * a2,
            kappa2: b2 * (1.0 - a2),
            kappa3,
            mu,
            gamma,
        })
}
