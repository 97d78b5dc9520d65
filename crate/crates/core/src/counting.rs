//! Counting by sampling: the threshold counter for any W-uniform sampler,
//! and the heavy/light guess ladders built on top of it.

use crate::model::{Tuple, Value};
use crate::ops::{tick, Op};
use crate::rng::JoinRng;
use rustc_hash::FxHashSet;

/// A sampler whose trial returns each result with probability exactly
/// `1 / normalizer()`, and `None` otherwise.
pub trait WUniformSampler {
    fn normalizer(&self) -> f64;
    fn trial(&self, rng: &mut JoinRng) -> Option<Tuple>;
}

/// Center values classified heavy, with the threshold used to classify them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeavySet {
    values: Vec<Value>,
    members: FxHashSet<Value>,
    threshold: f64,
}

impl HeavySet {
    pub fn new(values: impl IntoIterator<Item = Value>, threshold: f64) -> Self {
        let members: FxHashSet<Value> = values.into_iter().collect();
        let mut values: Vec<Value> = members.iter().copied().collect();
        values.sort_unstable();
        HeavySet { values, members, threshold }
    }

    #[inline]
    pub fn contains(&self, v: Value) -> bool {
        !self.values.is_empty() && self.members.contains(&v)
    }

    /// Members in ascending id order.
    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdResult {
    Estimate(f64),
    /// The count is below the threshold (with high probability).
    Bottom,
}

impl ThresholdResult {
    pub fn estimate(self) -> Option<f64> {
        match self {
            ThresholdResult::Estimate(s) => Some(s),
            ThresholdResult::Bottom => None,
        }
    }
}

/// Lower median; `xs` is reordered.
pub fn lower_median(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty(), "median of nothing");
    let mid = (xs.len() - 1) / 2;
    *xs.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1
}

pub fn repetitions_for(delta: f64) -> usize {
    (3.0 * (2.0 / delta).ln()).ceil().max(1.0) as usize
}

/// Guess-halving counter: for `λ = λ₀, λ₀/2, …` down to `tau`, takes the
/// median of `⌈3 ln(2/δ)⌉` rounds of `⌈6W/(ε²λ)⌉` trials each and returns
/// the first median that reaches `λ`.
pub fn approx_count_with_threshold<S: WUniformSampler + ?Sized>(
    sampler: &S,
    lambda_start: f64,
    tau: f64,
    eps: f64,
    delta: f64,
    rng: &mut JoinRng,
) -> ThresholdResult {
    let w = sampler.normalizer();
    if w <= 0.0 || tau <= 0.0 {
        return ThresholdResult::Bottom;
    }
    let k_delta = repetitions_for(delta);
    let mut rounds = vec![0.0; k_delta];
    let mut lambda = lambda_start;
    while lambda >= tau {
        let k_lambda = (6.0 * w / (eps * eps * lambda)).ceil().max(1.0) as u64;
        for s in rounds.iter_mut() {
            *s = round_estimate(sampler, w, k_lambda, rng);
        }
        let s = lower_median(&mut rounds);
        if s >= lambda {
            return ThresholdResult::Estimate(s);
        }
        lambda /= 2.0;
    }
    ThresholdResult::Bottom
}

/// `W · successes / trials`, an unbiased estimate of the result count.
pub fn round_estimate<S: WUniformSampler + ?Sized>(sampler: &S, w: f64, trials: u64, rng: &mut JoinRng) -> f64 {
    let mut hits = 0u64;
    for _ in 0..trials {
        tick(Op::Trial);
        if sampler.trial(rng).is_some() {
            tick(Op::Accepted);
            hits += 1;
        }
    }
    hits as f64 * w / trials as f64
}

/// An instance that splits its center values into heavy and light parts.
pub trait HybridCountable {
    type Heavy<'a>: WUniformSampler
    where
        Self: 'a;
    type Light<'a>: WUniformSampler
    where
        Self: 'a;

    /// N.
    fn input_size(&self) -> usize;
    /// Upper bound on the output size; both guess ladders start here.
    fn guess_ceiling(&self) -> f64;
    /// True when the full join is empty, so the answer is 0 outright.
    fn join_is_empty(&self) -> bool;
    fn detect_heavy(&self, lambda: f64, delta: f64, rng: &mut JoinRng) -> HeavySet;
    fn heavy_part<'a>(&'a self, hs: &'a HeavySet) -> Self::Heavy<'a>;
    fn light_part<'a>(&'a self, hs: &'a HeavySet) -> Self::Light<'a>;
    /// Whether some heavy center value witnesses `t`.
    fn in_heavy_results(&self, hs: &HeavySet, t: &Tuple) -> bool;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapFraction {
    pub beta: f64,
    pub sample_size: usize,
}

/// Fraction of light results also produced by the heavy part, estimated
/// from `⌈ln(2/δ)/(2ε²)⌉` light samples.
///
/// The light part must have at least one result.
pub fn intersect_estimate<H: HybridCountable + ?Sized, L: WUniformSampler + ?Sized>(
    inst: &H,
    hs: &HeavySet,
    light: &L,
    eps: f64,
    delta: f64,
    rng: &mut JoinRng,
) -> OverlapFraction {
    let sample_size = ((2.0 / delta).ln() / (2.0 * eps * eps)).ceil().max(1.0) as usize;
    if hs.is_empty() {
        return OverlapFraction { beta: 0.0, sample_size };
    }
    let mut hits = 0usize;
    for _ in 0..sample_size {
        let t = loop {
            if let Some(t) = light.trial(rng) {
                break t;
            }
        };
        if inst.in_heavy_results(hs, &t) {
            hits += 1;
        }
    }
    OverlapFraction { beta: hits as f64 / sample_size as f64, sample_size }
}

/// Heavy and light estimates merged: `s_h + s_l − min(s_h, β·s_l)`.
pub fn combine(heavy: ThresholdResult, light: ThresholdResult, beta: Option<f64>) -> f64 {
    match (heavy, light) {
        (ThresholdResult::Estimate(h), ThresholdResult::Estimate(l)) => {
            let overlap = (l * beta.unwrap_or(0.0)).min(h);
            (h + l - overlap).max(0.0)
        }
        (ThresholdResult::Estimate(h), ThresholdResult::Bottom) => h,
        (ThresholdResult::Bottom, ThresholdResult::Estimate(l)) => l,
        (ThresholdResult::Bottom, ThresholdResult::Bottom) => 0.0,
    }
}

/// Everything one guess produced, kept for diagnostics.
#[derive(Clone, Debug)]
pub struct GuessReport {
    pub lambda: f64,
    pub estimate: f64,
    pub heavy: ThresholdResult,
    pub light: ThresholdResult,
    pub overlap: Option<OverlapFraction>,
    pub heavy_set: HeavySet,
}

/// One estimate under the guess `Λ`: expected value at most twice the
/// output size, and accurate once `Λ ≤ 4·OUT`.
pub fn count_with_guess<H: HybridCountable + ?Sized>(
    inst: &H,
    lambda: f64,
    eps: f64,
    delta: f64,
    rng: &mut JoinRng,
) -> GuessReport {
    let e = eps / 5.0;
    let hs = inst.detect_heavy(lambda, delta / 4.0, rng);
    let tau = e * lambda / 16.0;
    let ceiling = inst.guess_ceiling();
    let (heavy, light, overlap) = {
        let heavy_view = inst.heavy_part(&hs);
        let light_view = inst.light_part(&hs);
        let heavy = approx_count_with_threshold(&heavy_view, ceiling, tau, e, delta / 4.0, rng);
        let light = approx_count_with_threshold(&light_view, ceiling, tau, e, delta / 4.0, rng);
        let overlap = match (heavy, light) {
            (ThresholdResult::Estimate(_), ThresholdResult::Estimate(_)) => {
                Some(intersect_estimate(inst, &hs, &light_view, e, delta / 4.0, rng))
            }
            _ => None,
        };
        (heavy, light, overlap)
    };
    let estimate = combine(heavy, light, overlap.map(|o| o.beta));
    GuessReport { lambda, estimate, heavy, light, overlap, heavy_set: hs }
}

/// Final estimate plus the per-guess reports that led to it.
#[derive(Clone, Debug)]
pub struct CountTrace {
    pub estimate: f64,
    pub guesses: Vec<GuessReport>,
}

/// Outer ladder: `Λ = ceiling, ceiling/2, …, 1`; at each guess, the median
/// of `⌈ln(2/δ)⌉` guessed estimates is returned once it reaches `Λ`.
pub fn approx_count_traced<H: HybridCountable + ?Sized>(
    inst: &H,
    eps: f64,
    delta: f64,
    rng: &mut JoinRng,
) -> CountTrace {
    let mut guesses = Vec::new();
    if inst.join_is_empty() {
        return CountTrace { estimate: 0.0, guesses };
    }
    let k = (2.0 / delta).ln().ceil().max(1.0) as usize;
    let mut lambda = inst.guess_ceiling();
    let mut estimates = vec![0.0; k];
    while lambda >= 1.0 {
        for s in estimates.iter_mut() {
            let report = count_with_guess(inst, lambda, eps, delta / 2.0, rng);
            *s = report.estimate;
            guesses.push(report);
        }
        let s = lower_median(&mut estimates);
        if s >= lambda {
            return CountTrace { estimate: s, guesses };
        }
        lambda /= 2.0;
    }
    CountTrace { estimate: 0.0, guesses }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rand_index, rng_from_seed};

    /// Returns one of `out` results with probability `out / w`.
    struct Synthetic {
        out: usize,
        w: usize,
    }

    impl WUniformSampler for Synthetic {
        fn normalizer(&self) -> f64 {
            self.w as f64
        }
        fn trial(&self, rng: &mut JoinRng) -> Option<Tuple> {
            let i = rand_index(rng, self.w);
            (i < self.out).then(|| Tuple(vec![Value(i as u64)]))
        }
    }

    #[test]
    fn lower_median_of_even_list() {
        assert_eq!(lower_median(&mut [4.0, 1.0, 3.0, 2.0]), 2.0);
        assert_eq!(lower_median(&mut [5.0]), 5.0);
        assert_eq!(lower_median(&mut [3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn empty_sampler_is_bottom() {
        let mut rng = rng_from_seed(1);
        let s = Synthetic { out: 0, w: 10 };
        assert_eq!(approx_count_with_threshold(&s, 100.0, 1.0, 0.2, 0.1, &mut rng), ThresholdResult::Bottom);
    }

    #[test]
    fn always_succeeding_sampler_is_exact() {
        let mut rng = rng_from_seed(2);
        let s = Synthetic { out: 37, w: 37 };
        assert_eq!(approx_count_with_threshold(&s, 10_000.0, 1.0, 0.2, 0.1, &mut rng), ThresholdResult::Estimate(37.0));
    }

    #[test]
    fn round_estimate_is_unbiased() {
        let mut rng = rng_from_seed(3);
        let s = Synthetic { out: 30, w: 100 };
        let reps = 10_000;
        let mean: f64 = (0..reps).map(|_| round_estimate(&s, 100.0, 20, &mut rng)).sum::<f64>() / reps as f64;
        assert!((mean - 30.0).abs() < 0.02 * 30.0, "mean {mean}");
    }

    #[test]
    fn threshold_counter_is_accurate() {
        let mut rng = rng_from_seed(4);
        let s = Synthetic { out: 250, w: 1000 };
        let good = (0..50)
            .filter(|_| match approx_count_with_threshold(&s, 1e6, 1.0, 0.2, 0.1, &mut rng) {
                ThresholdResult::Estimate(x) => (x - 250.0).abs() <= 50.0,
                ThresholdResult::Bottom => false,
            })
            .count();
        assert!(good >= 45, "{good}/50");
    }

    #[test]
    fn combiner_cases() {
        use ThresholdResult::*;
        assert_eq!(combine(Estimate(10.0), Estimate(6.0), Some(0.5)), 13.0);
        assert_eq!(combine(Estimate(2.0), Estimate(6.0), Some(1.0)), 6.0);
        assert_eq!(combine(Estimate(2.0), Bottom, None), 2.0);
        assert_eq!(combine(Bottom, Estimate(3.0), None), 3.0);
        assert_eq!(combine(Bottom, Bottom, None), 0.0);
    }

    #[test]
    fn heavy_set_membership() {
        let hs = HeavySet::new([Value(3), Value(1), Value(3)], 2.0);
        assert_eq!(hs.values(), &[Value(1), Value(3)]);
        assert!(hs.contains(Value(3)));
        assert!(!hs.contains(Value(2)));
        assert!(!HeavySet::default().contains(Value(0)));
    }
}
