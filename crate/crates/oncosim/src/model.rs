//! State space, rate parameters, and construction of the one-year
//! transition matrix.
//!
//! The chain has seven states: three undetected stages (U1, U2, U3), three
//! detected stages (D1, D2, D3), and mortality (M), which is the unique
//! absorbing state. Rates are interpreted directly as one-step transition
//! probabilities on a fixed one-year time step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_STATES: usize = 7;

/// Tolerance for row-stochasticity checks.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum State {
    U1,
    U2,
    U3,
    D1,
    D2,
    D3,
    M,
}

impl State {
    pub const ALL: [State; 7] = [
        State::U1,
        State::U2,
        State::U3,
        State::D1,
        State::D2,
        State::D3,
        State::M,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<State> {
        State::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            State::U1 => "U1",
            State::U2 => "U2",
            State::U3 => "U3",
            State::D1 => "D1",
            State::D2 => "D2",
            State::D3 => "D3",
            State::M => "M",
        }
    }

    pub fn is_absorbing(self) -> bool {
        self == State::M
    }

    /// Stage associated with a detected state, if this is one.
    pub fn diagnosis_stage(self) -> Option<Stage> {
        match self {
            State::D1 => Some(Stage::Localized),
            State::D2 => Some(Stage::Regional),
            State::D3 => Some(Stage::Distant),
            _ => None,
        }
    }
}

impl std::fmt::Display for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Stage at diagnosis: localized (1), regional (2), distant (3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Localized = 1,
    Regional = 2,
    Distant = 3,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Localized, Stage::Regional, Stage::Distant];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Stage> {
        match n {
            1 => Some(Stage::Localized),
            2 => Some(Stage::Regional),
            3 => Some(Stage::Distant),
            _ => None,
        }
    }

    /// Zero-based index into per-stage arrays.
    pub fn idx(self) -> usize {
        self as usize - 1
    }

    /// The detected state entered when a tumor is diagnosed at this stage.
    pub fn detected_state(self) -> State {
        match self {
            Stage::Localized => State::D1,
            Stage::Regional => State::D2,
            Stage::Distant => State::D3,
        }
    }
}

/// The seven model rates, used directly as one-step probabilities.
///
/// `lambda1`/`lambda2` drive stage progression (shared between the
/// undetected and detected tracks), `kappa1..kappa3` are detection
/// probabilities per stage, `mu` is mortality from D3, and `gamma` scales
/// detected-track progression down by `1 - gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub mu: f64,
    pub gamma: f64,
}

fn check_unit(field: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) || !value.is_finite() {
        return Err(Error::InvalidParam {
            field,
            value,
            reason: "must lie in [0, 1]".to_string(),
        });
    }
    Ok(())
}

impl RateParams {
    pub fn new(
        lambda1: f64,
        lambda2: f64,
        kappa1: f64,
        kappa2: f64,
        kappa3: f64,
        mu: f64,
        gamma: f64,
    ) -> Result<Self> {
        let params = RateParams {
            lambda1,
            lambda2,
            kappa1,
            kappa2,
            kappa3,
            mu,
            gamma,
        };
        params.validate()?;
        Ok(params)
    }

    /// Baseline parameterization shipped with the CLI; with `gamma = 0` it
    /// yields stage-at-diagnosis shares and survival rates close to the
    /// SEER colon figures.
    pub fn baseline() -> Self {
        RateParams {
            lambda1: 0.15,
            lambda2: 0.16,
            kappa1: 0.09,
            kappa2: 0.18,
            kappa3: 0.80,
            mu: 0.30,
            gamma: 0.0,
        }
    }

    /// Rejects out-of-range rates and row budgets that would make a stay
    /// probability negative. Validation rejects rather than clamps so that
    /// calibration sees the true constraint boundary.
    pub fn validate(&self) -> Result<()> {
        check_unit("lambda1", self.lambda1)?;
        check_unit("lambda2", self.lambda2)?;
        check_unit("kappa1", self.kappa1)?;
        check_unit("kappa2", self.kappa2)?;
        check_unit("kappa3", self.kappa3)?;
        check_unit("mu", self.mu)?;
        check_unit("gamma", self.gamma)?;
        if self.lambda1 + self.kappa1 > 1.0 {
            return Err(Error::InvalidParam {
                field: "lambda1 + kappa1",
                value: self.lambda1 + self.kappa1,
                reason: "must not exceed 1 (U1 stay probability would be negative)".to_string(),
            });
        }
        if self.lambda2 + self.kappa2 > 1.0 {
            return Err(Error::InvalidParam {
                field: "lambda2 + kappa2",
                value: self.lambda2 + self.kappa2,
                reason: "must not exceed 1 (U2 stay probability would be negative)".to_string(),
            });
        }
        Ok(())
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        RateParams { gamma, ..*self }.validate()?;
        Ok(RateParams { gamma, ..*self })
    }

    pub fn with_kappa1(&self, kappa1: f64) -> Result<Self> {
        RateParams { kappa1, ..*self }.validate()?;
        Ok(RateParams { kappa1, ..*self })
    }
}

/// Positions that may hold a nonzero probability, per row.
const ALLOWED: [&[State]; 7] = [
    &[State::U1, State::U2, State::D1],
    &[State::U2, State::U3, State::D2],
    &[State::U3, State::D3],
    &[State::D1, State::D2],
    &[State::D2, State::D3],
    &[State::D3, State::M],
    &[State::M],
];

/// Row-stochastic 7x7 one-year transition matrix over the fixed state
/// order U1, U2, U3, D1, D2, D3, M.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: [[f64; N_STATES]; N_STATES],
}

impl TransitionMatrix {
    /// Builds from raw rows, checking every invariant: entries in [0, 1],
    /// rows summing to 1 within `ROW_SUM_TOL`, M absorbing, and zeros
    /// outside the progression/detection pattern.
    pub fn from_rows(rows: [[f64; N_STATES]; N_STATES]) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            let from = State::from_index(i).unwrap();
            let mut sum = 0.0;
            for (j, &p) in row.iter().enumerate() {
                let to = State::from_index(j).unwrap();
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParam {
                        field: "transition probability",
                        value: p,
                        reason: format!("entry {from}->{to} must lie in [0, 1]"),
                    });
                }
                if p != 0.0 && !ALLOWED[i].contains(&to) {
                    return Err(Error::InvalidParam {
                        field: "transition probability",
                        value: p,
                        reason: format!("entry {from}->{to} must be zero"),
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidParam {
                    field: "row sum",
                    value: sum,
                    reason: format!("row {from} must sum to 1 within {ROW_SUM_TOL}"),
                });
            }
        }
        if rows[State::M.index()][State::M.index()] != 1.0 {
            return Err(Error::InvalidParam {
                field: "transition probability",
                value: rows[State::M.index()][State::M.index()],
                reason: "M must be absorbing".to_string(),
            });
        }
        Ok(TransitionMatrix { rows })
    }

    pub fn get(&self, from: State, to: State) -> f64 {
        self.rows[from.index()][to.index()]
    }

    pub fn row(&self, from: State) -> &[f64; N_STATES] {
        &self.rows[from.index()]
    }

    pub fn rows(&self) -> &[[f64; N_STATES]; N_STATES] {
        &self.rows
    }

    /// First transient state whose entire exit probability is zero, if any.
    /// Such a state traps probability mass and absorption into M is no
    /// longer almost sure.
    pub fn trapped_state(&self) -> Option<State> {
        State::ALL.iter().copied().find(|&s| {
            !s.is_absorbing()
                && self.rows[s.index()]
                    .iter()
                    .enumerate()
                    .all(|(j, &p)| j == s.index() || p == 0.0)
        })
    }
}

/// Builds the one-year transition matrix from rates.
///
/// Rates map directly onto one-step probabilities: U-rows split between
/// staying, progressing (`lambda`), and being detected (`kappa`); D-rows
/// progress at `lambda * (1 - gamma)`; D3 transitions to M at `mu`.
pub fn build_transition_matrix(params: &RateParams) -> Result<TransitionMatrix> {
    params.validate()?;
    let p = params;
    let mut rows = [[0.0; N_STATES]; N_STATES];

    let set = |rows: &mut [[f64; N_STATES]; N_STATES], from: State, to: State, v: f64| {
        rows[from.index()][to.index()] = v;
    };

    set(&mut rows, State::U1, State::U1, 1.0 - p.lambda1 - p.kappa1);
    set(&mut rows, State::U1, State::U2, p.lambda1);
    set(&mut rows, State::U1, State::D1, p.kappa1);

    set(&mut rows, State::U2, State::U2, 1.0 - p.lambda2 - p.kappa2);
    set(&mut rows, State::U2, State::U3, p.lambda2);
    set(&mut rows, State::U2, State::D2, p.kappa2);

    set(&mut rows, State::U3, State::U3, 1.0 - p.kappa3);
    set(&mut rows, State::U3, State::D3, p.kappa3);

    let treated1 = p.lambda1 * (1.0 - p.gamma);
    set(&mut rows, State::D1, State::D1, 1.0 - treated1);
    set(&mut rows, State::D1, State::D2, treated1);

    let treated2 = p.lambda2 * (1.0 - p.gamma);
    set(&mut rows, State::D2, State::D2, 1.0 - treated2);
    set(&mut rows, State::D2, State::D3, treated2);

    set(&mut rows, State::D3, State::D3, 1.0 - p.mu);
    set(&mut rows, State::D3, State::M, p.mu);

    set(&mut rows, State::M, State::M, 1.0);

    TransitionMatrix::from_rows(rows)
}
