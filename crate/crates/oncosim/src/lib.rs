//! A seven-state discrete-time Markov model of tumor progression,
//! detection, and mortality, with exact survival statistics, reproducible
//! Monte Carlo cohort simulation, calibration to observed survival tables,
//! and the counterfactual corrections that show why survival rates alone
//! support so little.
//!
//! States U1-U3 are undetected tumors by stage, D1-D3 are detected, and M
//! (mortality) is the unique absorbing state. Detection moves a tumor from
//! the U-track to the D-track without changing its stage; with treatment
//! effectiveness `gamma = 0` that changes nothing about progression, yet
//! earlier detection still inflates measured survival.

pub mod calibrate;
pub mod cli;
pub mod counterfactual;
pub mod dataio;
pub mod error;
pub mod exact;
pub mod model;
pub mod montecarlo;

mod simplex;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use model::{build_transition_matrix, RateParams, Stage, State, TransitionMatrix};
