//! Uniform sampling for the matrix query `π_{A,C} R1(A,B) ⋈ R2(B,C)`.

use crate::counting::HeavySet;
use crate::error::{Error, Result};
use crate::index::{IndexedRelation, NoReplacementSampler, WeightedSampler};
use crate::model::{star_binding, Instance, QuerySpec, Tuple, Value};
use crate::rng::{rand_index, rand_int, JoinRng};
use crate::sampling::{measured_trial, run_with_budget, SampleBudget, SampleVerdict, TrialOutcome};

/// A matrix instance oriented so that R1 holds the first output attribute.
#[derive(Clone, Debug)]
pub struct MatrixInstance {
    pub(crate) r1: IndexedRelation,
    pub(crate) r2: IndexedRelation,
    a1: usize,
    b1: usize,
    b2: usize,
    c2: usize,
    n: usize,
    max_deg2: usize,
    hidx: MatrixHIndex,
}

/// Per-value join weights `W_b = |R1⋉b|·|R2⋉b|` and a sampler over them.
#[derive(Clone, Debug)]
pub struct MatrixHIndex {
    sampler: WeightedSampler<Value>,
}

impl MatrixHIndex {
    /// Weights over every B value, or only over `restrict` when given.
    pub fn build(inst: &MatrixInstance, restrict: Option<&HeavySet>) -> Self {
        let weight = |b: Value| (inst.deg1_b(b) as u64) * (inst.deg2_b(b) as u64);
        let sampler = match restrict {
            None => WeightedSampler::new(inst.r1.distinct(inst.b1).iter().map(|&b| (b, weight(b)))),
            Some(hs) => WeightedSampler::new(hs.values().iter().map(|&b| (b, weight(b)))),
        };
        MatrixHIndex { sampler }
    }

    /// Total weight W, the exact full-join size of the covered values.
    pub fn total(&self) -> u128 {
        self.sampler.total_weight()
    }

    pub fn weights(&self) -> impl Iterator<Item = (Value, u64)> + '_ {
        self.sampler.items()
    }
}

/// Degree cap Δ for the rejection-based full-join sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LightConfig {
    pub delta_cap: usize,
}

/// Which center values a sampler and its acceptance step may use.
#[derive(Clone, Copy, Debug)]
pub enum Partition<'a> {
    All,
    Heavy(&'a HeavySet),
    Light(&'a HeavySet),
}

impl Partition<'_> {
    #[inline]
    pub fn admits(&self, b: Value) -> bool {
        match self {
            Partition::All => true,
            Partition::Heavy(hs) => hs.contains(b),
            Partition::Light(hs) => !hs.contains(b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Exact per-value weights; every trial yields a full-join tuple.
    Heavy,
    /// Uniform tuple from R1 with degree smoothing against a cap.
    Light(LightConfig),
}

/// Details of one acceptance attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AcceptTrace {
    pub accepted: bool,
    /// F + 1: failures before the next witness, plus one.
    pub failures_plus_one: usize,
    /// |S|, the size of the scanned neighbor list.
    pub universe: usize,
}

impl MatrixInstance {
    pub fn new(inst: &Instance, spec: &QuerySpec) -> Result<Self> {
        let binding = star_binding(spec)
            .filter(|b| b.leaves.len() == 2)
            .ok_or_else(|| Error::ShapeUnsupported("not a matrix query".into()))?;
        let get = |i: usize| {
            let schema = &spec.schemas[binding.relations[i]];
            inst.relation_for(schema)
                .ok_or_else(|| Error::Validation(vec![format!("missing relation for schema {{{}}}", schema.join(","))]))
        };
        let (rel1, rel2) = (get(0)?, get(1)?);
        let r1 = IndexedRelation::build(rel1);
        let r2 = IndexedRelation::build(rel2);
        let pos = |r: &IndexedRelation, a: &str| r.position(a).expect("bound attribute");
        let (a1, b1) = (pos(&r1, &binding.leaves[0]), pos(&r1, &binding.center));
        let (b2, c2) = (pos(&r2, &binding.center), pos(&r2, &binding.leaves[1]));
        let max_deg2 = r2.distinct(b2).iter().map(|&b| r2.rows_with(b2, b).len()).max().unwrap_or(0);
        let mut m = MatrixInstance {
            n: r1.len() + r2.len(),
            r1,
            r2,
            a1,
            b1,
            b2,
            c2,
            max_deg2,
            hidx: MatrixHIndex { sampler: WeightedSampler::new(std::iter::empty()) },
        };
        m.hidx = MatrixHIndex::build(&m, None);
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r1_len(&self) -> usize {
        self.r1.len()
    }

    pub fn r1(&self) -> &IndexedRelation {
        &self.r1
    }

    pub fn r2(&self) -> &IndexedRelation {
        &self.r2
    }

    /// Index over all B values, built once at construction.
    pub fn hindex(&self) -> &MatrixHIndex {
        &self.hidx
    }

    /// Largest `|R2⋉b|`.
    pub fn max_deg2(&self) -> usize {
        self.max_deg2
    }

    /// Cap equal to the largest R2 degree, valid for the whole instance.
    pub fn default_light_config(&self) -> LightConfig {
        LightConfig { delta_cap: self.max_deg2.max(1) }
    }

    #[inline]
    pub fn deg1_b(&self, b: Value) -> usize {
        self.r1.degree_at(self.b1, b)
    }

    #[inline]
    pub fn deg2_b(&self, b: Value) -> usize {
        self.r2.degree_at(self.b2, b)
    }

    #[inline]
    pub fn deg1_a(&self, a: Value) -> usize {
        self.r1.degree_at(self.a1, a)
    }

    #[inline]
    pub fn deg2_c(&self, c: Value) -> usize {
        self.r2.degree_at(self.c2, c)
    }

    #[inline]
    pub fn in_r1(&self, a: Value, b: Value) -> bool {
        if self.a1 == 0 {
            self.r1.contains_pair(a, b)
        } else {
            self.r1.contains_pair(b, a)
        }
    }

    #[inline]
    pub fn in_r2(&self, b: Value, c: Value) -> bool {
        if self.b2 == 0 {
            self.r2.contains_pair(b, c)
        } else {
            self.r2.contains_pair(c, b)
        }
    }

    /// Uniform `(a, b)` from R1.
    #[inline]
    pub(crate) fn sample_r1(&self, rng: &mut JoinRng) -> Option<(Value, Value)> {
        self.r1.sample_row(rng).map(|r| (r[self.a1], r[self.b1]))
    }

    /// Uniform `(b, c)` from R2.
    #[inline]
    pub(crate) fn sample_r2(&self, rng: &mut JoinRng) -> Option<(Value, Value)> {
        self.r2.sample_row(rng).map(|r| (r[self.b2], r[self.c2]))
    }

    #[inline]
    fn random_a_of(&self, b: Value, deg: usize, rng: &mut JoinRng) -> Value {
        self.r1.partner(self.b1, b, rand_index(rng, deg))
    }

    #[inline]
    fn random_c_of(&self, b: Value, deg: usize, rng: &mut JoinRng) -> Value {
        self.r2.partner(self.b2, b, rand_index(rng, deg))
    }

    /// Sum over B values of `|R1⋉b|·|R2⋉b|`, over all values.
    pub fn full_join_size(&self) -> u128 {
        self.hidx.total()
    }

    /// The weight `W_b` of one value.
    pub fn weight_of(&self, b: Value) -> u128 {
        self.deg1_b(b) as u128 * self.deg2_b(b) as u128
    }

    /// Per-trial normalizer for `strategy`.
    pub fn effective_weight(&self, strategy: Strategy) -> u128 {
        match strategy {
            Strategy::Heavy => self.hidx.total(),
            Strategy::Light(cfg) => self.r1.len() as u128 * cfg.delta_cap as u128,
        }
    }
}

/// Full-join tuple `(a, b, c)` with probability exactly `1/W`.
pub fn join_sample_h(inst: &MatrixInstance, hidx: &MatrixHIndex, rng: &mut JoinRng) -> Result<[Value; 3]> {
    let b = hidx.sampler.sample(rng).map_err(|_| Error::EmptyJoin)?;
    let a = inst.random_a_of(b, inst.deg1_b(b), rng);
    let c = inst.random_c_of(b, inst.deg2_b(b), rng);
    Ok([a, b, c])
}

/// Full-join tuple with probability exactly `1/(|R1|·Δ)` each, else `None`.
///
/// Draws whose `b` is outside `part`, or whose R2 degree exceeds the cap,
/// are rejections.
pub fn join_sample_l(
    inst: &MatrixInstance,
    cfg: LightConfig,
    part: Partition<'_>,
    rng: &mut JoinRng,
) -> Option<[Value; 3]> {
    let (a, b) = inst.sample_r1(rng)?;
    if !part.admits(b) {
        return None;
    }
    let d = inst.deg2_b(b);
    if d == 0 || d > cfg.delta_cap {
        return None;
    }
    let c = inst.random_c_of(b, d, rng);
    if rand_int(rng, 1, cfg.delta_cap as u64) > d as u64 {
        return None;
    }
    Some([a, b, c])
}

/// Accepts a full-join tuple with probability `1/deg(a,c)` by counting
/// non-witnesses drawn without replacement before the next witness.
pub(crate) fn accept_traced(
    inst: &MatrixInstance,
    [a, b, c]: [Value; 3],
    part: Partition<'_>,
    rng: &mut JoinRng,
) -> AcceptTrace {
    let da = inst.deg1_a(a);
    let dc = inst.deg2_c(c);
    let from_r1 = da < dc;
    let universe = if from_r1 { da } else { dc };
    let mut draws = NoReplacementSampler::new(universe);
    let mut failures = 0usize;
    while let Ok(j) = draws.next(rng) {
        let other = if from_r1 { inst.r1.partner(inst.a1, a, j) } else { inst.r2.partner(inst.c2, c, j) };
        if other == b {
            continue;
        }
        let witness = part.admits(other) && if from_r1 { inst.in_r2(other, c) } else { inst.in_r1(a, other) };
        if witness {
            break;
        }
        failures += 1;
    }
    let accepted = rand_int(rng, 1, universe as u64) <= failures as u64 + 1;
    AcceptTrace { accepted, failures_plus_one: failures + 1, universe }
}

/// Acceptance over the whole instance; errors if `(a,b,c)` is not a join tuple.
pub fn matrix_accept(inst: &MatrixInstance, triple: [Value; 3], rng: &mut JoinRng) -> Result<bool> {
    matrix_accept_traced(inst, triple, rng).map(|t| t.accepted)
}

pub fn matrix_accept_traced(inst: &MatrixInstance, triple: [Value; 3], rng: &mut JoinRng) -> Result<AcceptTrace> {
    let [a, b, c] = triple;
    if !inst.in_r1(a, b) || !inst.in_r2(b, c) {
        return Err(Error::Precondition(format!("({a}, {b}, {c}) is not a full-join tuple")));
    }
    Ok(accept_traced(inst, triple, Partition::All, rng))
}

fn trial(inst: &MatrixInstance, strategy: Strategy, part: Partition<'_>, rng: &mut JoinRng) -> Option<Tuple> {
    let triple = match strategy {
        Strategy::Heavy => join_sample_h(inst, &inst.hidx, rng).ok()?,
        Strategy::Light(cfg) => join_sample_l(inst, cfg, part, rng)?,
    };
    accept_traced(inst, triple, part, rng).accepted.then(|| Tuple(vec![triple[0], triple[2]]))
}

/// One round of sample-then-accept. Each result `(a, c)` comes back with
/// probability exactly `1/W_eff`.
pub fn sample_matrix_trial(inst: &MatrixInstance, strategy: Strategy, rng: &mut JoinRng) -> TrialOutcome {
    measured_trial(rng, |rng| trial(inst, strategy, Partition::All, rng))
}

/// Budget from the expected cost at OUT = 1.
pub fn default_budget(inst: &MatrixInstance, strategy: Strategy, delta: f64) -> SampleBudget {
    let units = inst.effective_weight(strategy) as f64 + inst.n as f64;
    SampleBudget::for_cost(units, inst.n, delta)
}

/// A uniform result, or the empty verdict once the budget runs out.
pub fn sample_matrix(
    inst: &MatrixInstance,
    strategy: Strategy,
    budget: SampleBudget,
    rng: &mut JoinRng,
) -> SampleVerdict {
    if inst.effective_weight(strategy) == 0 {
        return SampleVerdict::Empty;
    }
    run_with_budget(budget, rng, |rng| trial(inst, strategy, Partition::All, rng))
}
