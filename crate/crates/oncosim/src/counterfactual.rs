//! Counterfactual arithmetic: the progressive/non-progressive mixture
//! correction, and model-based survival under a hypothetical earlier
//! diagnosis with the horizon stretched by the back-dated detection time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::survival_curve;
use crate::model::{build_transition_matrix, RateParams, Stage};

/// An observed early-detection cohort: its overall survival rate and the
/// fraction of its tumors that would not have caused death within the
/// horizon even untreated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureScenario {
    pub overall_survival: f64,
    pub nonprogressive_fraction: f64,
}

/// Survival rate among the progressive subgroup: (s - f) / (1 - f).
///
/// Non-progressive tumors survive by definition, so the observed rate
/// overstates what a tumor known to be progressive faces. Fails when the
/// mixture is inconsistent (s < f) or has no progressive subgroup (f = 1).
pub fn progressive_survival(scenario: &MixtureScenario) -> Result<f64> {
    let s = scenario.overall_survival;
    let f = scenario.nonprogressive_fraction;
    if !s.is_finite() || !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidParam {
            field: "overall_survival",
            value: s,
            reason: "must lie in [0, 1]".to_string(),
        });
    }
    if !f.is_finite() || !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidParam {
            field: "nonprogressive_fraction",
            value: f,
            reason: "must lie in [0, 1)".to_string(),
        });
    }
    if f == 1.0 {
        return Err(Error::UndefinedMixture);
    }
    if s < f {
        return Err(Error::InconsistentMixture {
            survival: s,
            fraction: f,
        });
    }
    Ok((s - f) / (1.0 - f))
}

/// Probability of being alive `alive_horizon` years after the actual late
/// diagnosis, had the tumor instead been detected at stage 1 `back_years`
/// earlier, under treatment effectiveness `gamma_cf`.
///
/// This is stage-1 survival at `back_years + alive_horizon`: moving the
/// diagnosis back means surviving a longer stretch, so the relevant figure
/// is long-horizon survival, not the advertised 5-year rate.
pub fn counterfactual_alive(
    params: &RateParams,
    gamma_cf: f64,
    back_years: usize,
    alive_horizon: usize,
) -> Result<f64> {
    let hypothetical = params.with_gamma(gamma_cf)?;
    let matrix = build_transition_matrix(&hypothetical)?;
    Ok(survival_curve(&matrix, Stage::Localized, back_years + alive_horizon).endpoint())
}
