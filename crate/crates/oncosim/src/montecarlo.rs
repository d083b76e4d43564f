//! Reproducible cohort simulation: tumors start undetected at stage 1,
//! progress through the chain until absorption, and are summarized by stage
//! at diagnosis and survival after diagnosis.
//!
//! Reproducibility across thread counts comes from a counter-based stream
//! split: trajectory `i` always draws from stream `i` of a ChaCha generator
//! seeded with the master seed, so chunking by a work-stealing scheduler
//! cannot change any draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Stage, State, TransitionMatrix};

/// Step cap used for flagging unusually slow absorptions. Long-running
/// trajectories are continued past the cap (survival statistics need the
/// death time), but the summary records how many exceeded it.
pub const DEFAULT_STEP_CAP: usize = 100;

pub const DEFAULT_HORIZON: usize = 5;

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Survival horizon in years used when summarizing.
    pub horizon: usize,
    /// Absorption step count above which a trajectory is flagged.
    pub step_cap: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            horizon: DEFAULT_HORIZON,
            step_cap: DEFAULT_STEP_CAP,
        }
    }
}

/// One simulated tumor: the yearly state sequence from U1 to absorption,
/// plus the diagnosis and death event times (year indices of the first
/// entry into a D-state and into M).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub diagnosis_stage: Stage,
    pub diagnosis_time: usize,
    pub death_time: usize,
    pub exceeded_step_cap: bool,
}

impl Trajectory {
    /// Survived the horizon: still alive `horizon` years after diagnosis.
    pub fn survived(&self, horizon: usize) -> bool {
        self.death_time - self.diagnosis_time > horizon
    }
}

/// Cohort summary; a deterministic function of (matrix, n, seed, options)
/// regardless of execution order or degree of parallelism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n: u64,
    pub seed: u64,
    pub five_year_horizon: usize,
    pub stage_counts: [u64; 3],
    pub five_year_survivors: [u64; 3],
    pub exceeded_step_cap: u64,
    pub stage_shares: [f64; 3],
    /// Survivor fraction per stage; `None` when no tumor was diagnosed at
    /// that stage.
    pub survival_by_stage: [Option<f64>; 3],
}

#[derive(Debug, Default, Clone, Copy)]
struct Counts {
    stage: [u64; 3],
    survivors: [u64; 3],
    exceeded: u64,
}

impl Counts {
    fn record(&mut self, traj: &Trajectory, horizon: usize) {
        let idx = traj.diagnosis_stage.idx();
        self.stage[idx] += 1;
        if traj.survived(horizon) {
            self.survivors[idx] += 1;
        }
        if traj.exceeded_step_cap {
            self.exceeded += 1;
        }
    }

    #[cfg(feature = "parallel")]
    fn merge(mut self, other: Counts) -> Counts {
        for i in 0..3 {
            self.stage[i] += other.stage[i];
            self.survivors[i] += other.survivors[i];
        }
        self.exceeded += other.exceeded;
        self
    }
}

impl CohortSummary {
    fn from_counts(n: u64, seed: u64, horizon: usize, counts: Counts) -> Self {
        let mut stage_shares = [0.0; 3];
        let mut survival_by_stage = [None; 3];
        for i in 0..3 {
            stage_shares[i] = counts.stage[i] as f64 / n as f64;
            if counts.stage[i] > 0 {
                survival_by_stage[i] = Some(counts.survivors[i] as f64 / counts.stage[i] as f64);
            }
        }
        CohortSummary {
            n,
            seed,
            five_year_horizon: horizon,
            stage_counts: counts.stage,
            five_year_survivors: counts.survivors,
            exceeded_step_cap: counts.exceeded,
            stage_shares,
            survival_by_stage,
        }
    }
}

/// Independent random stream for trajectory `index` under `master_seed`.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

fn sample_next(row: &[f64; 7], u: f64) -> State {
    let mut acc = 0.0;
    let mut last_positive = None;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = Some(j);
            if u < acc {
                return State::from_index(j).unwrap();
            }
        }
    }
    // u landed in the float dust above the accumulated row sum.
    State::from_index(last_positive.expect("row has a positive entry")).unwrap()
}

/// Simulates one tumor from U1 until absorption in M.
///
/// The caller must ensure no transient state is trapped
/// (`matrix.trapped_state().is_none()`); otherwise absorption is not
/// almost sure and this loop may not terminate.
pub fn simulate_trajectory(
    matrix: &TransitionMatrix,
    rng: &mut impl Rng,
    step_cap: usize,
) -> Trajectory {
    debug_assert!(matrix.trapped_state().is_none());
    let mut states = vec![State::U1];
    let mut current = State::U1;
    let mut diagnosis: Option<(Stage, usize)> = None;
    let mut t = 0;
    loop {
        t += 1;
        let u: f64 = rng.random();
        let next = sample_next(matrix.row(current), u);
        states.push(next);
        if diagnosis.is_none() {
            if let Some(stage) = next.diagnosis_stage() {
                diagnosis = Some((stage, t));
            }
        }
        if next == State::M {
            let (diagnosis_stage, diagnosis_time) =
                diagnosis.expect("M is reachable only through D3");
            return Trajectory {
                states,
                diagnosis_stage,
                diagnosis_time,
                death_time: t,
                exceeded_step_cap: t > step_cap,
            };
        }
        current = next;
    }
}

fn check_absorbing(matrix: &TransitionMatrix) -> Result<()> {
    match matrix.trapped_state() {
        Some(state) => Err(Error::DegenerateState(state)),
        None => Ok(()),
    }
}

/// Simulates `n` independent trajectories and summarizes them. Dispatches
/// to the parallel engine when the `parallel` feature is enabled.
pub fn simulate_cohort(
    matrix: &TransitionMatrix,
    n: u64,
    master_seed: u64,
    opts: SimOptions,
) -> Result<CohortSummary> {
    #[cfg(feature = "parallel")]
    {
        simulate_cohort_par(matrix, n, master_seed, opts)
    }
    #[cfg(not(feature = "parallel"))]
    {
        simulate_cohort_seq(matrix, n, master_seed, opts)
    }
}

/// Sequential engine; always available for benchmarking and for checking
/// that parallel execution changes nothing.
pub fn simulate_cohort_seq(
    matrix: &TransitionMatrix,
    n: u64,
    master_seed: u64,
    opts: SimOptions,
) -> Result<CohortSummary> {
    check_absorbing(matrix)?;
    let mut counts = Counts::default();
    for i in 0..n {
        let mut rng = trajectory_rng(master_seed, i);
        let traj = simulate_trajectory(matrix, &mut rng, opts.step_cap);
        counts.record(&traj, opts.horizon);
    }
    Ok(CohortSummary::from_counts(n, master_seed, opts.horizon, counts))
}

/// Data-parallel engine. Counts are merged by an associative, commutative
/// reduction, and each trajectory owns its seed stream, so the result is
/// bit-identical to the sequential engine.
#[cfg(feature = "parallel")]
pub fn simulate_cohort_par(
    matrix: &TransitionMatrix,
    n: u64,
    master_seed: u64,
    opts: SimOptions,
) -> Result<CohortSummary> {
    check_absorbing(matrix)?;
    let counts = (0..n)
        .into_par_iter()
        .fold(Counts::default, |mut acc, i| {
            let mut rng = trajectory_rng(master_seed, i);
            let traj = simulate_trajectory(matrix, &mut rng, opts.step_cap);
            acc.record(&traj, opts.horizon);
            acc
        })
        .reduce(Counts::default, Counts::merge);
    Ok(CohortSummary::from_counts(n, master_seed, opts.horizon, counts))
}

/// Summary over already-materialized trajectories; agrees exactly with
/// `simulate_cohort` for the same (matrix, n, seed) because both consume
/// the same per-index streams.
pub fn summarize_trajectories(
    trajectories: &[Trajectory],
    seed: u64,
    horizon: usize,
) -> CohortSummary {
    let mut counts = Counts::default();
    for traj in trajectories {
        counts.record(traj, horizon);
    }
    CohortSummary::from_counts(trajectories.len() as u64, seed, horizon, counts)
}

/// Materializes all `n` trajectories, in index order. Used by the
/// trajectory dump; summaries and dumps see exactly the same draws.
pub fn simulate_trajectories(
    matrix: &TransitionMatrix,
    n: u64,
    master_seed: u64,
    opts: SimOptions,
) -> Result<Vec<Trajectory>> {
    check_absorbing(matrix)?;
    #[cfg(feature = "parallel")]
    {
        Ok((0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = trajectory_rng(master_seed, i);
                simulate_trajectory(matrix, &mut rng, opts.step_cap)
            })
            .collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok((0..n)
            .map(|i| {
                let mut rng = trajectory_rng(master_seed, i);
                simulate_trajectory(matrix, &mut rng, opts.step_cap)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact;
    use crate::model::{build_transition_matrix, RateParams};
    use proptest::prelude::*;

    fn baseline_matrix() -> TransitionMatrix {
        build_transition_matrix(&RateParams::baseline()).unwrap()
    }

    #[test]
    fn same_seed_same_trajectory() {
        let m = baseline_matrix();
        let a = simulate_trajectory(&m, &mut trajectory_rng(7, 3), DEFAULT_STEP_CAP);
        let b = simulate_trajectory(&m, &mut trajectory_rng(7, 3), DEFAULT_STEP_CAP);
        assert_eq!(a, b);
        let c = simulate_trajectory(&m, &mut trajectory_rng(7, 4), DEFAULT_STEP_CAP);
        assert_ne!(a, c, "distinct streams should diverge almost surely");
    }

    #[test]
    fn forced_detection_diagnoses_everyone_at_year_one() {
        // Certain stage-1 detection: the U1 row sends all mass to D1.
        // Built row-wise because kappa1 = 1 forces lambda1 = 0, and a zero
        // shared lambda1 would also freeze the detected track.
        let mut rows = *baseline_matrix().rows();
        rows[State::U1.index()] = [0.0; 7];
        rows[State::U1.index()][State::D1.index()] = 1.0;
        let m = TransitionMatrix::from_rows(rows).unwrap();
        for i in 0..50 {
            let t = simulate_trajectory(&m, &mut trajectory_rng(1, i), DEFAULT_STEP_CAP);
            assert_eq!(t.diagnosis_stage, Stage::Localized);
            assert_eq!(t.diagnosis_time, 1);
        }
    }

    #[test]
    fn cohort_deterministic_and_order_independent() {
        let m = baseline_matrix();
        let opts = SimOptions::default();
        let a = simulate_cohort(&m, 2000, 99, opts).unwrap();
        let b = simulate_cohort(&m, 2000, 99, opts).unwrap();
        assert_eq!(a, b);
        let seq = simulate_cohort_seq(&m, 2000, 99, opts).unwrap();
        assert_eq!(a, seq);
        #[cfg(feature = "parallel")]
        {
            let par = simulate_cohort_par(&m, 2000, 99, opts).unwrap();
            assert_eq!(seq, par);
        }
    }

    #[test]
    fn cohort_counts_are_consistent() {
        let m = baseline_matrix();
        let s = simulate_cohort(&m, 1000, 5, SimOptions::default()).unwrap();
        assert_eq!(s.stage_counts.iter().sum::<u64>(), 1000);
        for i in 0..3 {
            assert!(s.five_year_survivors[i] <= s.stage_counts[i]);
            if let Some(rate) = s.survival_by_stage[i] {
                assert!((0.0..=1.0).contains(&rate));
            }
        }
        let share_sum: f64 = s.stage_shares.iter().sum();
        assert!((share_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_trajectory_cohort() {
        let m = baseline_matrix();
        let s = simulate_cohort(&m, 1, 11, SimOptions::default()).unwrap();
        assert_eq!(s.stage_counts.iter().sum::<u64>(), 1);
        for &share in &s.stage_shares {
            assert!(share == 0.0 || share == 1.0);
        }
        assert_eq!(
            s.survival_by_stage.iter().filter(|r| r.is_some()).count(),
            1
        );
    }

    #[test]
    fn default_seed_cohort_matches_reported_statistics() {
        // One pinned 10,000-tumor draw lands within 2 percentage points of
        // the reported survival rates (95/72/17) and stage shares
        // (38/33/29). Single draws carry sampling noise, so this holds for
        // most but not all seeds; the 3-sigma budget test below is the
        // distribution-level check.
        let m = baseline_matrix();
        let s = simulate_cohort(&m, 10_000, 42, SimOptions::default()).unwrap();
        for (observed, reported) in s.survival_by_stage.iter().zip([0.95, 0.72, 0.17]) {
            assert!((observed.unwrap() - reported).abs() <= 0.02);
        }
        for (observed, reported) in s.stage_shares.iter().zip([0.38, 0.33, 0.29]) {
            assert!((observed - reported).abs() <= 0.02);
        }
    }

    #[test]
    fn dump_summary_matches_streaming_summary() {
        let m = baseline_matrix();
        let opts = SimOptions::default();
        let trajs = simulate_trajectories(&m, 500, 21, opts).unwrap();
        let from_dump = summarize_trajectories(&trajs, 21, opts.horizon);
        let streaming = simulate_cohort(&m, 500, 21, opts).unwrap();
        assert_eq!(from_dump, streaming);
    }

    #[test]
    fn rejects_trapped_matrix() {
        let gamma1 = RateParams {
            gamma: 1.0,
            ..RateParams::baseline()
        };
        let m = build_transition_matrix(&gamma1).unwrap();
        assert!(simulate_cohort(&m, 10, 0, SimOptions::default()).is_err());
        assert!(simulate_trajectories(&m, 10, 0, SimOptions::default()).is_err());
    }

    #[test]
    fn slow_chain_exceeds_cap_but_absorbs() {
        let params = RateParams::new(0.02, 0.02, 0.01, 0.01, 0.02, 0.02, 0.0).unwrap();
        let m = build_transition_matrix(&params).unwrap();
        let s = simulate_cohort(&m, 200, 3, SimOptions::default()).unwrap();
        assert!(s.exceeded_step_cap > 0, "expected some slow trajectories");
        assert_eq!(s.stage_counts.iter().sum::<u64>(), 200);
    }

    #[test]
    fn stage_shares_agree_with_exact_within_three_sigma() {
        let m = baseline_matrix();
        let n = 10_000u64;
        let s = simulate_cohort(&m, n, 2024, SimOptions::default()).unwrap();
        let exact_shares = exact::stage_distribution(&m).unwrap().as_array();
        for (i, &p) in exact_shares.iter().enumerate() {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (s.stage_shares[i] - p).abs() <= 3.0 * se,
                "share {i}: {} vs {p} (se {se})",
                s.stage_shares[i]
            );
        }
    }

    /// Random-matrix statistical agreement with a violation budget:
    /// 12 cohorts x 5 comparisons at 3 sigma, expected breaches ~0.16.
    #[test]
    fn random_matrices_agree_with_exact_within_budget() {
        let mut breaches = 0;
        let mut comparisons = 0;
        for seed in 0..12u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
            let b1 = draw(&mut rng, 0.1, 0.9);
            let a1 = draw(&mut rng, 0.2, 0.8);
            let b2 = draw(&mut rng, 0.1, 0.9);
            let a2 = draw(&mut rng, 0.2, 0.8);
            let params = RateParams {
                lambda1: b1 * a1,
                kappa1: b1 * (1.0 - a1),
                lambda2: b2 * a2,
                kappa2: b2 * (1.0 - a2),
                kappa3: draw(&mut rng, 0.1, 0.9),
                mu: draw(&mut rng, 0.1, 0.9),
                gamma: draw(&mut rng, 0.0, 0.9),
            };
            let m = build_transition_matrix(&params).unwrap();
            let n = 10_000u64;
            let s = simulate_cohort(&m, n, seed, SimOptions::default()).unwrap();
            let shares = exact::stage_distribution(&m).unwrap().as_array();
            let survival = exact::five_year_survival(&m);
            for (i, &p) in shares.iter().take(2).enumerate() {
                let se = (p * (1.0 - p) / n as f64).sqrt();
                comparisons += 1;
                if (s.stage_shares[i] - p).abs() > 3.0 * se {
                    breaches += 1;
                }
            }
            for (i, &p) in survival.iter().enumerate() {
                let n_stage = s.stage_counts[i];
                if n_stage == 0 {
                    continue;
                }
                let se = (p * (1.0 - p) / n_stage as f64).sqrt();
                comparisons += 1;
                if (s.survival_by_stage[i].unwrap() - p).abs() > 3.0 * se {
                    breaches += 1;
                }
            }
        }
        assert!(comparisons >= 50);
        assert!(breaches <= 2, "{breaches} breaches in {comparisons} comparisons");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn trajectories_are_structurally_valid(
            params in crate::testutil::arb_valid_params(),
            seed in 0u64..1000,
        ) {
            // Keep every transient state live so absorption is almost sure.
            let kappa1 = params.kappa1.min(0.9);
            let kappa2 = params.kappa2.min(0.9);
            let params = RateParams {
                kappa1,
                kappa2,
                lambda1: params.lambda1.clamp(0.05, 1.0 - kappa1),
                lambda2: params.lambda2.clamp(0.05, 1.0 - kappa2),
                kappa3: params.kappa3.max(0.05),
                mu: params.mu.max(0.05),
                gamma: params.gamma.min(0.9),
            };
            let m = build_transition_matrix(&params).unwrap();
            let traj = simulate_trajectory(&m, &mut trajectory_rng(seed, 0), DEFAULT_STEP_CAP);

            prop_assert_eq!(traj.states[0], State::U1);
            prop_assert_eq!(*traj.states.last().unwrap(), State::M);
            prop_assert!(traj.diagnosis_time < traj.death_time);
            prop_assert_eq!(
                traj.states[traj.diagnosis_time].diagnosis_stage(),
                Some(traj.diagnosis_stage)
            );
            // Once detected, never undetected again; M only at the end.
            let mut seen_detected = false;
            for (t, &s) in traj.states.iter().enumerate() {
                if s.diagnosis_stage().is_some() {
                    seen_detected = true;
                }
                if seen_detected {
                    prop_assert!(!matches!(s, State::U1 | State::U2 | State::U3));
                }
                prop_assert_eq!(s == State::M, t == traj.death_time);
            }
            prop_assert_eq!(traj.states.len(), traj.death_time + 1);
        }
    }
}
