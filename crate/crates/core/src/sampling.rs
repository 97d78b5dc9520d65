//! The outer trial loop shared by every sampler, with the timeout strategy
//! that turns "no success within budget" into an empty verdict.

use crate::model::Tuple;
use crate::ops;
use crate::rng::JoinRng;
use serde::Serialize;

/// Expected primitive calls per unit of `W_eff + N` for one delivered
/// sample at OUT = 1, measured on the oracle suite (observed means stay
/// below 8; see the calibration test in the matrix module).
pub const TIMEOUT_OPS_PER_UNIT: u64 = 10;

/// Result of one trial of a W-uniform sampler.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialOutcome {
    pub result: Option<Tuple>,
    pub ops_used: u64,
}

/// Outcome of a budgeted sampling run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum SampleVerdict {
    Sample(Tuple),
    /// No trial succeeded in any round: the result is empty with high probability.
    Empty,
}

impl SampleVerdict {
    pub fn tuple(&self) -> Option<&Tuple> {
        match self {
            SampleVerdict::Sample(t) => Some(t),
            SampleVerdict::Empty => None,
        }
    }
}

/// Primitive-call budget per round and the number of restarts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SampleBudget {
    pub ops_per_round: u64,
    pub rounds: u32,
}

impl SampleBudget {
    /// Twice the expected cost of one sample at OUT = 1, where one sample
    /// costs about `W_eff + N` units, restarted `⌈log₂ N⌉ + ⌈log₂(1/δ)⌉` times.
    pub fn for_cost(expected_units: f64, n: usize, delta: f64) -> Self {
        let ops = 2.0 * TIMEOUT_OPS_PER_UNIT as f64 * expected_units.max(1.0);
        SampleBudget { ops_per_round: ops.min(u64::MAX as f64 / 2.0) as u64, rounds: restart_rounds(n, delta) }
    }
}

pub fn restart_rounds(n: usize, delta: f64) -> u32 {
    let log_n = (n.max(2) as f64).log2().ceil();
    let log_d = (1.0 / delta).log2().ceil().max(0.0);
    (log_n + log_d) as u32
}

/// Runs `trial` until it succeeds or every round exhausts its budget.
pub fn run_with_budget(
    budget: SampleBudget,
    rng: &mut JoinRng,
    mut trial: impl FnMut(&mut JoinRng) -> Option<Tuple>,
) -> SampleVerdict {
    for _ in 0..budget.rounds.max(1) {
        let start = ops::primitive_calls();
        loop {
            if let Some(t) = trial(rng) {
                return SampleVerdict::Sample(t);
            }
            if ops::primitive_calls() - start > budget.ops_per_round {
                break;
            }
        }
    }
    SampleVerdict::Empty
}

/// Runs one trial and records the primitive calls it used.
pub fn measured_trial(rng: &mut JoinRng, trial: impl FnOnce(&mut JoinRng) -> Option<Tuple>) -> TrialOutcome {
    let start = ops::primitive_calls();
    let result = trial(rng);
    TrialOutcome { result, ops_used: ops::primitive_calls() - start }
}
