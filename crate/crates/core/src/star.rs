//! Uniform sampling and approximate counting for k-star queries
//! `π_{A1..Ak} R1(A1,B) ⋈ … ⋈ Rk(Ak,B)`.

use crate::counting::{approx_count_traced, CountTrace, HeavySet, HybridCountable, WUniformSampler};
use crate::error::{Error, Result};
use crate::index::{IndexedRelation, NoReplacementSampler, WeightedSampler};
use crate::model::{star_binding, Instance, QuerySpec, Tuple, Value};
use crate::rng::{rand_index, rand_int, JoinRng};
use crate::sampling::{measured_trial, run_with_budget, SampleBudget, SampleVerdict, TrialOutcome};
use rustc_hash::FxHashSet;

#[derive(Clone, Debug)]
struct Arm {
    rel: IndexedRelation,
    leaf: usize,
    center: usize,
}

impl Arm {
    #[inline]
    fn has(&self, a: Value, b: Value) -> bool {
        if self.leaf == 0 {
            self.rel.contains_pair(a, b)
        } else {
            self.rel.contains_pair(b, a)
        }
    }
}

/// Per-value weights `W_b = ∏ |R_i⋉b|` and a sampler over them.
#[derive(Clone, Debug)]
pub struct StarHIndex {
    sampler: WeightedSampler<Value>,
}

impl StarHIndex {
    pub fn build(inst: &StarInstance, restrict: Option<&HeavySet>) -> Self {
        let sampler = match restrict {
            None => WeightedSampler::new(inst.centers().iter().map(|&b| (b, inst.weight_of(b)))),
            Some(hs) => WeightedSampler::new(hs.values().iter().map(|&b| (b, inst.weight_of(b)))),
        };
        StarHIndex { sampler }
    }

    pub fn total(&self) -> u128 {
        self.sampler.total_weight()
    }

    pub fn weights(&self) -> impl Iterator<Item = (Value, u64)> + '_ {
        self.sampler.items()
    }
}

/// A sampled full-join tuple together with its acceptance anchor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarCandidate {
    pub leaves: Vec<Value>,
    pub center: Value,
    /// Relation with the fewest tuples for its leaf value; lowest index wins ties.
    pub anchor: usize,
}

#[derive(Clone, Debug)]
pub struct StarInstance {
    arms: Vec<Arm>,
    n: usize,
    /// Largest `∏_{i≥2} |R_i⋉b|`.
    max_tail: u64,
    hidx: StarHIndex,
}

#[derive(Clone, Copy, Debug)]
enum Part<'a> {
    All,
    Heavy(&'a HeavySet),
    Light(&'a HeavySet),
}

impl Part<'_> {
    #[inline]
    fn admits(&self, b: Value) -> bool {
        match self {
            Part::All => true,
            Part::Heavy(hs) => hs.contains(b),
            Part::Light(hs) => !hs.contains(b),
        }
    }
}

impl StarInstance {
    pub fn new(inst: &Instance, spec: &QuerySpec) -> Result<Self> {
        let binding = star_binding(spec).ok_or_else(|| Error::ShapeUnsupported("not a star query".into()))?;
        let mut arms = Vec::with_capacity(binding.leaves.len());
        for (leaf, &ri) in binding.leaves.iter().zip(&binding.relations) {
            let schema = &spec.schemas[ri];
            let rel = inst
                .relation_for(schema)
                .ok_or_else(|| Error::Validation(vec![format!("missing relation for schema {{{}}}", schema.join(","))]))?;
            let rel = IndexedRelation::build(rel);
            let leaf = rel.position(leaf).expect("bound attribute");
            let center = rel.position(&binding.center).expect("bound attribute");
            arms.push(Arm { rel, leaf, center });
        }
        let n = arms.iter().map(|a| a.rel.len()).sum();
        let mut s =
            StarInstance { arms, n, max_tail: 0, hidx: StarHIndex { sampler: WeightedSampler::new(std::iter::empty()) } };
        s.max_tail = s.centers().iter().map(|&b| s.tail_product(b)).max().unwrap_or(0);
        s.hidx = StarHIndex::build(&s, None);
        Ok(s)
    }

    pub fn k(&self) -> usize {
        self.arms.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Center values present in R1.
    fn centers(&self) -> &[Value] {
        self.arms[0].rel.distinct(self.arms[0].center)
    }

    pub fn hindex(&self) -> &StarHIndex {
        &self.hidx
    }

    /// Exact star full-join size.
    pub fn full_join_size(&self) -> u128 {
        self.hidx.total()
    }

    #[inline]
    pub fn deg_center(&self, i: usize, b: Value) -> usize {
        self.arms[i].rel.degree_at(self.arms[i].center, b)
    }

    #[inline]
    pub fn deg_leaf(&self, i: usize, a: Value) -> usize {
        self.arms[i].rel.degree_at(self.arms[i].leaf, a)
    }

    /// `∏_i |R_i⋉b|`, saturating at `u64::MAX`.
    pub fn weight_of(&self, b: Value) -> u64 {
        (0..self.k()).fold(1u64, |w, i| w.saturating_mul(self.deg_center(i, b) as u64))
    }

    fn tail_product(&self, b: Value) -> u64 {
        (1..self.k()).fold(1u64, |w, i| w.saturating_mul(self.deg_center(i, b) as u64))
    }

    /// `min_i |R_i⋉a_i|` for a result.
    pub fn min_anchor_degree(&self, t: &Tuple) -> usize {
        t.0.iter().enumerate().map(|(i, &a)| self.deg_leaf(i, a)).min().unwrap_or(0)
    }

    /// Whether `(a_1..a_k, b)` is a full-join tuple.
    pub fn is_join_tuple(&self, leaves: &[Value], b: Value) -> bool {
        leaves.len() == self.k() && self.arms.iter().zip(leaves).all(|(arm, &a)| arm.has(a, b))
    }

    fn extend_from(&self, b: Value, first: usize, leaves: &mut Vec<Value>, rng: &mut JoinRng) {
        for arm in &self.arms[first..] {
            let d = arm.rel.degree_at(arm.center, b);
            leaves.push(arm.rel.partner(arm.center, b, rand_index(rng, d)));
        }
    }

    fn candidate(&self, leaves: Vec<Value>, center: Value) -> StarCandidate {
        let mut anchor = 0;
        let mut best = usize::MAX;
        for (i, &a) in leaves.iter().enumerate() {
            let d = self.deg_leaf(i, a);
            if d < best {
                best = d;
                anchor = i;
            }
        }
        StarCandidate { leaves, center, anchor }
    }

    /// Accepts with probability `1/deg(a_1..a_k)` restricted to `part`.
    fn accept(&self, c: &StarCandidate, part: Part<'_>, rng: &mut JoinRng) -> bool {
        let j = c.anchor;
        let arm = &self.arms[j];
        let a_j = c.leaves[j];
        let universe = arm.rel.degree_at(arm.leaf, a_j);
        let mut draws = NoReplacementSampler::new(universe);
        let mut failures = 0u64;
        while let Ok(x) = draws.next(rng) {
            let other = arm.rel.partner(arm.leaf, a_j, x);
            if other == c.center {
                continue;
            }
            let witness = part.admits(other)
                && self.arms.iter().zip(&c.leaves).enumerate().all(|(i, (r, &a))| i == j || r.has(a, other));
            if witness {
                break;
            }
            failures += 1;
        }
        rand_int(rng, 1, universe as u64) <= failures + 1
    }

    fn sample_heavy(&self, hidx: &StarHIndex, rng: &mut JoinRng) -> Option<StarCandidate> {
        let b = hidx.sampler.sample(rng).ok()?;
        let mut leaves = Vec::with_capacity(self.k());
        self.extend_from(b, 0, &mut leaves, rng);
        Some(self.candidate(leaves, b))
    }

    /// `(a_1, b)` from R1, the other leaves by uniform neighbor picks, kept
    /// with probability `∏_{i≥2}|R_i⋉b| / cap`.
    fn sample_light(&self, cap: u64, part: Part<'_>, rng: &mut JoinRng) -> Option<StarCandidate> {
        let arm = &self.arms[0];
        let row = arm.rel.sample_row(rng)?;
        let (a1, b) = (row[arm.leaf], row[arm.center]);
        if !part.admits(b) {
            return None;
        }
        let tail = self.tail_product(b);
        if tail == 0 || tail > cap {
            return None;
        }
        let mut leaves = Vec::with_capacity(self.k());
        leaves.push(a1);
        self.extend_from(b, 1, &mut leaves, rng);
        if rand_int(rng, 1, cap) > tail {
            return None;
        }
        Some(self.candidate(leaves, b))
    }

    fn trial_heavy(&self, hidx: &StarHIndex, part: Part<'_>, rng: &mut JoinRng) -> Option<Tuple> {
        let c = self.sample_heavy(hidx, rng)?;
        self.accept(&c, part, rng).then(|| Tuple(c.leaves))
    }
}

/// Draws a full-join tuple with probability `1/W`, or an error on an empty join.
pub fn sample_star_candidate(inst: &StarInstance, rng: &mut JoinRng) -> Result<StarCandidate> {
    if inst.full_join_size() == 0 {
        return Err(Error::EmptyJoin);
    }
    Ok(inst.sample_heavy(&inst.hidx, rng).expect("positive weight"))
}

/// One sample-then-accept round; every result comes back with probability `1/W`.
pub fn sample_star_trial(inst: &StarInstance, rng: &mut JoinRng) -> Result<TrialOutcome> {
    if inst.full_join_size() == 0 {
        return Err(Error::EmptyJoin);
    }
    Ok(measured_trial(rng, |rng| inst.trial_heavy(&inst.hidx, Part::All, rng)))
}

pub fn default_budget(inst: &StarInstance, delta: f64) -> SampleBudget {
    SampleBudget::for_cost(inst.full_join_size() as f64 + inst.n() as f64, inst.n(), delta)
}

pub fn sample_star(inst: &StarInstance, budget: SampleBudget, rng: &mut JoinRng) -> SampleVerdict {
    if inst.full_join_size() == 0 {
        return SampleVerdict::Empty;
    }
    run_with_budget(budget, rng, |rng| inst.trial_heavy(&inst.hidx, Part::All, rng))
}

/// Largest integer `d` with `d^k ≤ x`.
pub fn integer_root(x: f64, k: usize) -> u64 {
    if x < 1.0 {
        return 0;
    }
    let pow = |d: u64| (d as f64).powi(k as i32);
    let mut d = x.powf(1.0 / k as f64).floor() as u64;
    while pow(d + 1) <= x {
        d += 1;
    }
    while d > 0 && pow(d) > x {
        d -= 1;
    }
    d
}

/// Center values with some degree above `⌊Λ^{1/k}⌋`, found by sampling rows
/// uniformly across all relations and verifying each candidate.
pub fn detect_heavy_star(inst: &StarInstance, lambda: f64, delta: f64, rng: &mut JoinRng) -> HeavySet {
    let d = integer_root(lambda, inst.k());
    let threshold = d as f64;
    let max_deg = (0..inst.k())
        .flat_map(|i| inst.arms[i].rel.distinct(inst.arms[i].center).iter().map(move |&b| (i, b)))
        .map(|(i, b)| inst.arms[i].rel.rows_with(inst.arms[i].center, b).len())
        .max()
        .unwrap_or(0);
    if max_deg as u64 <= d || inst.n == 0 {
        return HeavySet::new([], threshold);
    }
    let n = inst.n as f64;
    let k = (n / lambda.powf(1.0 / inst.k() as f64) * (n / delta).ln()).ceil().max(1.0) as u64;
    let mut found = FxHashSet::default();
    for _ in 0..k {
        // uniform row of the union
        let mut r = rand_index(rng, inst.n);
        let mut arm = &inst.arms[0];
        for a in &inst.arms {
            if r < a.rel.len() {
                arm = a;
                break;
            }
            r -= a.rel.len();
        }
        crate::ops::tick(crate::ops::Op::Sample);
        let b = arm.rel.row(r)[arm.center];
        if !found.contains(&b) && (0..inst.k()).any(|i| inst.deg_center(i, b) as u64 > d) {
            found.insert(b);
        }
    }
    HeavySet::new(found, threshold)
}

pub struct StarHeavyView<'a> {
    inst: &'a StarInstance,
    hs: &'a HeavySet,
    hidx: StarHIndex,
}

pub struct StarLightView<'a> {
    inst: &'a StarInstance,
    hs: &'a HeavySet,
    cap: u64,
    empty: bool,
}

pub fn split_star<'a>(inst: &'a StarInstance, hs: &'a HeavySet) -> (StarHeavyView<'a>, StarLightView<'a>) {
    let hidx = StarHIndex::build(inst, Some(hs));
    let empty = inst.full_join_size() == hidx.total();
    // light values have every degree ≤ d, so their tail product is ≤ d^(k-1)
    let d = hs.threshold() as u64;
    let bound = (1..inst.k()).fold(1u64, |w, _| w.saturating_mul(d));
    let cap = bound.min(inst.max_tail);
    (StarHeavyView { inst, hs, hidx }, StarLightView { inst, hs, cap, empty })
}

impl StarHeavyView<'_> {
    pub fn join_size(&self) -> u128 {
        self.hidx.total()
    }
}

impl StarLightView<'_> {
    pub fn cap(&self) -> u64 {
        self.cap
    }
}

impl WUniformSampler for StarHeavyView<'_> {
    fn normalizer(&self) -> f64 {
        self.hidx.total() as f64
    }

    fn trial(&self, rng: &mut JoinRng) -> Option<Tuple> {
        self.inst.trial_heavy(&self.hidx, Part::Heavy(self.hs), rng)
    }
}

impl WUniformSampler for StarLightView<'_> {
    fn normalizer(&self) -> f64 {
        if self.empty {
            return 0.0;
        }
        self.inst.arms[0].rel.len() as f64 * self.cap as f64
    }

    fn trial(&self, rng: &mut JoinRng) -> Option<Tuple> {
        let part = Part::Light(self.hs);
        let c = self.inst.sample_light(self.cap, part, rng)?;
        self.inst.accept(&c, part, rng).then(|| Tuple(c.leaves))
    }
}

impl HybridCountable for StarInstance {
    type Heavy<'a> = StarHeavyView<'a>;
    type Light<'a> = StarLightView<'a>;

    fn input_size(&self) -> usize {
        self.n
    }

    fn guess_ceiling(&self) -> f64 {
        (self.n as f64).powi(self.k() as i32)
    }

    fn join_is_empty(&self) -> bool {
        self.full_join_size() == 0
    }

    fn detect_heavy(&self, lambda: f64, delta: f64, rng: &mut JoinRng) -> HeavySet {
        detect_heavy_star(self, lambda, delta, rng)
    }

    fn heavy_part<'a>(&'a self, hs: &'a HeavySet) -> StarHeavyView<'a> {
        split_star(self, hs).0
    }

    fn light_part<'a>(&'a self, hs: &'a HeavySet) -> StarLightView<'a> {
        split_star(self, hs).1
    }

    fn in_heavy_results(&self, hs: &HeavySet, t: &Tuple) -> bool {
        hs.values().iter().any(|&b| self.is_join_tuple(&t.0, b))
    }
}

pub fn approx_count_star(inst: &StarInstance, eps: f64, delta: f64, rng: &mut JoinRng) -> f64 {
    approx_count_traced(inst, eps, delta, rng).estimate
}

pub fn approx_count_star_traced(inst: &StarInstance, eps: f64, delta: f64, rng: &mut JoinRng) -> CountTrace {
    approx_count_traced(inst, eps, delta, rng)
}
