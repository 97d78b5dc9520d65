//! Approximate counting for the matrix query through a heavy/light split
//! of the join values.

use crate::counting::{approx_count_traced, count_with_guess, CountTrace, HeavySet, HybridCountable, WUniformSampler};
use crate::matrix::{accept_traced, join_sample_h, join_sample_l, LightConfig, MatrixHIndex, MatrixInstance, Partition};
use crate::model::Tuple;
use crate::rng::JoinRng;
use rustc_hash::FxHashSet;

/// Values of B whose R2 degree exceeds `√Λ`, found by sampling R2 rows and
/// verifying each candidate. The result never contains a light value.
pub fn detect_heavy(inst: &MatrixInstance, lambda: f64, delta: f64, rng: &mut JoinRng) -> HeavySet {
    let root = lambda.max(1.0).sqrt();
    // No candidate can pass verification: skip the sampling.
    if inst.max_deg2() as f64 <= root || inst.r2().is_empty() {
        return HeavySet::new([], root);
    }
    let n = inst.n() as f64;
    let k = (n * (n / delta).ln() / root).ceil().max(1.0) as u64;
    let mut found = FxHashSet::default();
    for _ in 0..k {
        let Some((b, _)) = inst.sample_r2(rng) else { break };
        if !found.contains(&b) && inst.deg2_b(b) as f64 > root {
            found.insert(b);
        }
    }
    HeavySet::new(found, root)
}

/// The sub-instance restricted to heavy join values.
pub struct HeavyView<'a> {
    inst: &'a MatrixInstance,
    hs: &'a HeavySet,
    hidx: MatrixHIndex,
}

/// The sub-instance restricted to light join values.
pub struct LightView<'a> {
    inst: &'a MatrixInstance,
    hs: &'a HeavySet,
    cfg: LightConfig,
    empty: bool,
}

/// Both views share the original indices; only the heavy weights are rebuilt.
pub fn split_instance<'a>(inst: &'a MatrixInstance, hs: &'a HeavySet) -> (HeavyView<'a>, LightView<'a>) {
    let hidx = MatrixHIndex::build(inst, Some(hs));
    let empty = inst.full_join_size() == hidx.total();
    // Light values have R2 degree at most √Λ, so the cap never needs to be larger.
    let delta_cap = (hs.threshold().floor() as usize).min(inst.max_deg2());
    let light = LightView { inst, hs, cfg: LightConfig { delta_cap }, empty };
    (HeavyView { inst, hs, hidx }, light)
}

/// Exact full-join size of the heavy view.
pub fn heavy_join_stats(view: &HeavyView<'_>) -> u128 {
    view.hidx.total()
}

impl LightView<'_> {
    pub fn config(&self) -> LightConfig {
        self.cfg
    }
}

impl WUniformSampler for HeavyView<'_> {
    fn normalizer(&self) -> f64 {
        self.hidx.total() as f64
    }

    fn trial(&self, rng: &mut JoinRng) -> Option<Tuple> {
        let t = join_sample_h(self.inst, &self.hidx, rng).ok()?;
        accept_traced(self.inst, t, Partition::Heavy(self.hs), rng).accepted.then(|| Tuple(vec![t[0], t[2]]))
    }
}

impl WUniformSampler for LightView<'_> {
    fn normalizer(&self) -> f64 {
        if self.empty {
            return 0.0;
        }
        self.inst.r1_len() as f64 * self.cfg.delta_cap as f64
    }

    fn trial(&self, rng: &mut JoinRng) -> Option<Tuple> {
        let part = Partition::Light(self.hs);
        let t = join_sample_l(self.inst, self.cfg, part, rng)?;
        accept_traced(self.inst, t, part, rng).accepted.then(|| Tuple(vec![t[0], t[2]]))
    }
}

impl HybridCountable for MatrixInstance {
    type Heavy<'a> = HeavyView<'a>;
    type Light<'a> = LightView<'a>;

    fn input_size(&self) -> usize {
        self.n()
    }

    fn guess_ceiling(&self) -> f64 {
        let n = self.n() as f64;
        n * n
    }

    fn join_is_empty(&self) -> bool {
        self.full_join_size() == 0
    }

    fn detect_heavy(&self, lambda: f64, delta: f64, rng: &mut JoinRng) -> HeavySet {
        detect_heavy(self, lambda, delta, rng)
    }

    fn heavy_part<'a>(&'a self, hs: &'a HeavySet) -> HeavyView<'a> {
        split_instance(self, hs).0
    }

    fn light_part<'a>(&'a self, hs: &'a HeavySet) -> LightView<'a> {
        split_instance(self, hs).1
    }

    fn in_heavy_results(&self, hs: &HeavySet, t: &Tuple) -> bool {
        let (a, c) = (t.0[0], t.0[1]);
        hs.values().iter().any(|&b| self.in_r1(a, b) && self.in_r2(b, c))
    }
}

/// One estimate for the guess `Λ`.
pub fn approx_count_matrix_with_guess(
    inst: &MatrixInstance,
    lambda: f64,
    eps: f64,
    delta: f64,
    rng: &mut JoinRng,
) -> f64 {
    count_with_guess(inst, lambda, eps, delta, rng).estimate
}

/// An ε-approximation of the number of distinct `(a, c)` results with
/// probability at least `1 − δ`.
pub fn approx_count_matrix(inst: &MatrixInstance, eps: f64, delta: f64, rng: &mut JoinRng) -> f64 {
    approx_count_traced(inst, eps, delta, rng).estimate
}

pub fn approx_count_matrix_traced(inst: &MatrixInstance, eps: f64, delta: f64, rng: &mut JoinRng) -> CountTrace {
    approx_count_traced(inst, eps, delta, rng)
}
