//! Closed-form and matrix-power computation of stage-at-diagnosis shares,
//! stage-conditional survival, pooled survival, lifetime absorption, and the
//! screening sweep.
//!
//! Everything here is deterministic; the Monte Carlo engine is checked
//! against this module in tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_transition_matrix, RateParams, Stage, State, TransitionMatrix, N_STATES};

/// Probabilities that a tumor starting in U1 is first detected at each
/// stage. They sum to 1: every tumor is eventually detected because M is
/// reachable only through D3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDistribution {
    pub p_localized: f64,
    pub p_regional: f64,
    pub p_distant: f64,
}

impl StageDistribution {
    pub fn as_array(&self) -> [f64; 3] {
        [self.p_localized, self.p_regional, self.p_distant]
    }

    pub fn share(&self, stage: Stage) -> f64 {
        self.as_array()[stage.idx()]
    }
}

/// Survival probabilities after diagnosis at a given stage.
///
/// `values[t]` is the probability of not being in M exactly `t` years
/// after entering the detected state; `values[0] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub stage: Stage,
    pub values: Vec<f64>,
}

impl SurvivalCurve {
    pub fn at(&self, t: usize) -> f64 {
        self.values[t]
    }

    pub fn endpoint(&self) -> f64 {
        *self.values.last().expect("curve has at least s(0)")
    }
}

/// First-passage split over the detected states, in closed form:
/// p1 = kappa1/(kappa1+lambda1), p2 = (1-p1) * kappa2/(kappa2+lambda2),
/// p3 = 1 - p1 - p2.
///
/// Errors with the trapped state if a required exit hazard is zero.
pub fn stage_distribution(matrix: &TransitionMatrix) -> Result<StageDistribution> {
    let lambda1 = matrix.get(State::U1, State::U2);
    let kappa1 = matrix.get(State::U1, State::D1);
    let lambda2 = matrix.get(State::U2, State::U3);
    let kappa2 = matrix.get(State::U2, State::D2);
    let kappa3 = matrix.get(State::U3, State::D3);

    if lambda1 + kappa1 == 0.0 {
        return Err(Error::DegenerateState(State::U1));
    }
    if lambda2 + kappa2 == 0.0 {
        return Err(Error::DegenerateState(State::U2));
    }
    if kappa3 == 0.0 {
        return Err(Error::DegenerateState(State::U3));
    }

    let p_localized = kappa1 / (kappa1 + lambda1);
    let p_regional = (lambda1 / (kappa1 + lambda1)) * (kappa2 / (kappa2 + lambda2));
    let p_distant = (1.0 - p_localized - p_regional).max(0.0);
    Ok(StageDistribution {
        p_localized,
        p_regional,
        p_distant,
    })
}

/// Survival curve after diagnosis at `stage`, for `t = 0..=horizon`.
///
/// Computed by repeated vector-matrix products from the unit vector on the
/// detected state; s(t) = 1 - P(in M at step t). Diagnosis happens at
/// t = 0, so "death within h years" means being in M at step h.
pub fn survival_curve(matrix: &TransitionMatrix, stage: Stage, horizon: usize) -> SurvivalCurve {
    let mut dist = [0.0; N_STATES];
    dist[stage.detected_state().index()] = 1.0;
    let mut values = Vec::with_capacity(horizon + 1);
    values.push(1.0);
    for _ in 1..=horizon {
        dist = step(matrix, &dist);
        values.push((1.0 - dist[State::M.index()]).clamp(0.0, 1.0));
    }
    SurvivalCurve { stage, values }
}

fn step(matrix: &TransitionMatrix, dist: &[f64; N_STATES]) -> [f64; N_STATES] {
    let mut next = [0.0; N_STATES];
    for (i, &mass) in dist.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let row = &matrix.rows()[i];
        for (j, &p) in row.iter().enumerate() {
            next[j] += mass * p;
        }
    }
    next
}

/// Survival probabilities `horizon` years after diagnosis, per stage.
pub fn survival_at(matrix: &TransitionMatrix, horizon: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for stage in Stage::ALL {
        out[stage.idx()] = survival_curve(matrix, stage, horizon).endpoint();
    }
    out
}

/// Five-year survival per stage at diagnosis: (s1, s2, s3).
pub fn five_year_survival(matrix: &TransitionMatrix) -> [f64; 3] {
    survival_at(matrix, 5)
}

/// Survival at `horizon` pooled over the stage-at-diagnosis distribution.
pub fn pooled_survival(matrix: &TransitionMatrix, horizon: usize) -> Result<f64> {
    let shares = stage_distribution(matrix)?;
    let survival = survival_at(matrix, horizon);
    Ok(shares
        .as_array()
        .iter()
        .zip(survival.iter())
        .map(|(p, s)| p * s)
        .sum())
}

/// Probability of eventual absorption into M starting from U1.
///
/// Solved by back-substitution in state order (every transition moves to a
/// higher-indexed state, so the order is topological). A transient state
/// with zero exit probability contributes 0. The exit-probability sum is
/// used as the denominator so that a chain in which every downstream state
/// absorbs with probability 1 yields exactly 1.0.
pub fn lifetime_mortality(matrix: &TransitionMatrix) -> f64 {
    let mut absorb = [0.0; N_STATES];
    absorb[State::M.index()] = 1.0;
    for i in (0..State::M.index()).rev() {
        let row = &matrix.rows()[i];
        let mut exit = 0.0;
        let mut weighted = 0.0;
        for (j, &p) in row.iter().enumerate() {
            if j != i {
                exit += p;
                weighted += p * absorb[j];
            }
        }
        absorb[i] = if exit > 0.0 { weighted / exit } else { 0.0 };
    }
    absorb[State::U1.index()]
}

/// One row of the screening sweep: outcomes for a single detection rate
/// `kappa1`, all other rates held fixed. Survival columns use the 5-year
/// horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa1: f64,
    pub stage_shares: [f64; 3],
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub pooled_survival: f64,
    pub lifetime_mortality: f64,
}

/// Recomputes stage shares, stage-conditional and pooled 5-year survival,
/// and lifetime mortality for each `kappa1`. With `gamma = 0` the
/// stage-conditional columns are identical across rows while the pooled
/// column rises with `kappa1`: more early detection inflates pooled
/// survival without changing any outcome.
pub fn screening_sweep(params: &RateParams, kappa1_values: &[f64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(kappa1_values.len());
    for &kappa1 in kappa1_values {
        let swept = params.with_kappa1(kappa1)?;
        let matrix = build_transition_matrix(&swept)?;
        let shares = stage_distribution(&matrix)?;
        let [s1, s2, s3] = five_year_survival(&matrix);
        let pooled = shares
            .as_array()
            .iter()
            .zip([s1, s2, s3].iter())
            .map(|(p, s)| p * s)
            .sum();
        rows.push(SweepRow {
            kappa1,
            stage_shares: shares.as_array(),
            s1,
            s2,
            s3,
            pooled_survival: pooled,
            lifetime_mortality: lifetime_mortality(&matrix),
        });
    }
    Ok(rows)
}
