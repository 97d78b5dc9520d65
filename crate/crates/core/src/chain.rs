//! Counting and near-uniform sampling for k-chain queries
//! `π_{A1,A(k+1)} R1(A1,A2) ⋈ … ⋈ Rk(Ak,A(k+1))` through bottom-K sketches.

use crate::counting::lower_median;
use crate::error::{Error, Result};
use crate::index::IndexedRelation;
use crate::model::{chain_binding, Instance, QuerySpec, Tuple, Value};
use crate::ops::{tick, tick_n, Op};
use crate::rng::{rand_index, rand_unit, JoinRng};
use crate::sampling::SampleVerdict;
use rand::Rng;
use rustc_hash::{FxHashMap, FxHashSet};

#[derive(Clone, Debug)]
struct Layer {
    rel: IndexedRelation,
    src: usize,
    dst: usize,
}

#[derive(Clone, Debug)]
pub struct ChainInstance {
    layers: Vec<Layer>,
    n: usize,
}

impl ChainInstance {
    pub fn new(inst: &Instance, spec: &QuerySpec) -> Result<Self> {
        let binding = chain_binding(spec).ok_or_else(|| Error::ShapeUnsupported("not a chain query".into()))?;
        let mut layers = Vec::with_capacity(binding.relations.len());
        for (i, &ri) in binding.relations.iter().enumerate() {
            let schema = &spec.schemas[ri];
            let rel = inst
                .relation_for(schema)
                .ok_or_else(|| Error::Validation(vec![format!("missing relation for schema {{{}}}", schema.join(","))]))?;
            let rel = IndexedRelation::build(rel);
            let src = rel.position(&binding.path[i]).expect("bound attribute");
            let dst = rel.position(&binding.path[i + 1]).expect("bound attribute");
            layers.push(Layer { rel, src, dst });
        }
        let n = layers.iter().map(|l| l.rel.len()).sum();
        Ok(ChainInstance { layers, n })
    }

    pub fn k(&self) -> usize {
        self.layers.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Values of the first attribute that occur in R1.
    pub fn starts(&self) -> &[Value] {
        self.layers[0].rel.distinct(self.layers[0].src)
    }
}

/// Multiply-add-shift hashing of value ids into 64-bit fixed point, read as
/// a real in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashDraw {
    mul: u128,
    add: u128,
}

impl HashDraw {
    pub fn new(mul: u128, add: u128) -> Self {
        HashDraw { mul: mul | 1, add }
    }

    pub fn draw(rng: &mut JoinRng) -> Self {
        HashDraw::new(rng.random(), rng.random())
    }

    #[inline]
    pub fn hash(&self, v: Value) -> u64 {
        (self.mul.wrapping_mul(v.0 as u128).wrapping_add(self.add) >> 64) as u64
    }

    pub fn unit(&self, v: Value) -> f64 {
        to_unit(self.hash(v))
    }
}

#[inline]
pub fn to_unit(h: u64) -> f64 {
    h as f64 / 18_446_744_073_709_551_616.0
}

/// The K smallest distinct hashes of a set, ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KmvSummary {
    capacity: usize,
    values: Vec<u64>,
}

impl KmvSummary {
    pub fn empty(capacity: usize) -> Self {
        KmvSummary { capacity, values: Vec::new() }
    }

    /// Builds from arbitrary hashes, keeping the K smallest distinct ones.
    pub fn from_hashes(capacity: usize, hashes: impl IntoIterator<Item = u64>) -> Self {
        let mut values: Vec<u64> = hashes.into_iter().collect();
        values.sort_unstable();
        values.dedup();
        values.truncate(capacity);
        KmvSummary { capacity, values }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// In-place union keeping the K smallest.
    fn absorb(&mut self, other: &KmvSummary) {
        if other.values.is_empty() {
            return;
        }
        let (x, y) = (&self.values, &other.values);
        let mut out = Vec::with_capacity(self.capacity.min(x.len() + y.len()));
        let (mut i, mut j) = (0, 0);
        while out.len() < self.capacity && (i < x.len() || j < y.len()) {
            let next = match (x.get(i), y.get(j)) {
                (Some(&a), Some(&b)) if a == b => {
                    i += 1;
                    j += 1;
                    a
                }
                (Some(&a), Some(&b)) if a < b => {
                    i += 1;
                    a
                }
                (Some(_), Some(&b)) => {
                    j += 1;
                    b
                }
                (Some(&a), None) => {
                    i += 1;
                    a
                }
                (None, Some(&b)) => {
                    j += 1;
                    b
                }
                (None, None) => unreachable!(),
            };
            out.push(next);
        }
        tick_n(Op::Merge, (i + j) as u64);
        self.values = out;
    }
}

pub fn kmv_singleton(h: &HashDraw, v: Value, capacity: usize) -> KmvSummary {
    assert!(capacity >= 1, "summary capacity must be positive");
    KmvSummary { capacity, values: vec![h.hash(v)] }
}

pub fn kmv_merge(x: &KmvSummary, y: &KmvSummary) -> Result<KmvSummary> {
    if x.capacity != y.capacity {
        return Err(Error::Precondition(format!("summary capacities differ: {} vs {}", x.capacity, y.capacity)));
    }
    let mut out = x.clone();
    out.absorb(y);
    Ok(out)
}

/// Exact size below capacity, otherwise `K / v_K`.
pub fn kmv_estimate(s: &KmvSummary) -> f64 {
    if s.values.len() < s.capacity {
        return s.values.len() as f64;
    }
    let top = to_unit(*s.values.last().expect("full summary"));
    if top <= 0.0 {
        return s.capacity as f64;
    }
    s.capacity as f64 / top
}

/// One backward pass: the summary of values reachable from every start.
pub fn backward_pass(inst: &ChainInstance, h: &HashDraw, capacity: usize) -> FxHashMap<Value, KmvSummary> {
    let last = inst.layers.last().expect("chain has layers");
    let mut cur: FxHashMap<Value, KmvSummary> =
        last.rel.distinct(last.dst).iter().map(|&v| (v, kmv_singleton(h, v, capacity))).collect();
    for layer in inst.layers.iter().rev() {
        let mut next: FxHashMap<Value, KmvSummary> = FxHashMap::default();
        for row in layer.rel.rows() {
            tick(Op::Scan);
            if let Some(s) = cur.get(&row[layer.dst]) {
                next.entry(row[layer.src]).or_insert_with(|| KmvSummary::empty(capacity)).absorb(s);
            }
        }
        cur = next;
    }
    cur
}

/// Per-start degree estimates, their inflated proxies, and a sampler over
/// the proxies.
#[derive(Clone, Debug)]
pub struct DegreeTable {
    eps: f64,
    starts: Vec<Value>,
    est: Vec<f64>,
    proxy: Vec<f64>,
    prefix: Vec<f64>,
    position: FxHashMap<Value, usize>,
}

impl DegreeTable {
    /// Proxies are `est / (1 − ε)`; starts with estimate 0 are dropped.
    pub fn from_estimates(eps: f64, estimates: impl IntoIterator<Item = (Value, f64)>) -> Self {
        let mut pairs: Vec<(Value, f64)> = estimates.into_iter().filter(|p| p.1 > 0.0).collect();
        pairs.sort_unstable_by_key(|p| p.0);
        let starts: Vec<Value> = pairs.iter().map(|p| p.0).collect();
        let est: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let proxy: Vec<f64> = est.iter().map(|e| e / (1.0 - eps)).collect();
        let mut prefix = Vec::with_capacity(proxy.len());
        let mut acc = 0.0;
        for p in &proxy {
            acc += p;
            prefix.push(acc);
        }
        let position = starts.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        DegreeTable { eps, starts, est, proxy, prefix, position }
    }

    /// Exact degrees from full traversals; proxies equal the degrees.
    pub fn exact(inst: &ChainInstance) -> Self {
        let degs: Vec<(Value, f64)> =
            inst.starts().iter().map(|&u| (u, reachable_set(inst, u).values.len() as f64)).collect();
        DegreeTable::from_estimates(0.0, degs)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Σ proxy.
    pub fn total(&self) -> f64 {
        self.prefix.last().copied().unwrap_or(0.0)
    }

    /// Σ estimate.
    pub fn estimate_total(&self) -> f64 {
        self.est.iter().sum()
    }

    pub fn estimate(&self, u: Value) -> f64 {
        self.position.get(&u).map_or(0.0, |&i| self.est[i])
    }

    pub fn proxy(&self, u: Value) -> f64 {
        self.position.get(&u).map_or(0.0, |&i| self.proxy[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = (Value, f64, f64)> + '_ {
        (0..self.starts.len()).map(|i| (self.starts[i], self.est[i], self.proxy[i]))
    }

    /// A start drawn with probability `proxy(u) / total`.
    pub fn sample(&self, rng: &mut JoinRng) -> Result<Value> {
        let w = self.total();
        if w <= 0.0 {
            return Err(Error::ZeroWeight);
        }
        tick(Op::Sample);
        let x = rand_unit(rng) * w;
        let i = self.prefix.partition_point(|&p| p <= x).min(self.starts.len() - 1);
        Ok(self.starts[i])
    }
}

/// Result of the chain counter.
#[derive(Clone, Debug)]
pub struct ChainCount {
    pub estimate: f64,
    pub table: DegreeTable,
    pub capacity: usize,
    pub repetitions: usize,
}

pub fn sketch_capacity(eps: f64) -> usize {
    (8.0 / (eps * eps)).ceil() as usize
}

pub fn sketch_repetitions(n: usize, delta: f64) -> usize {
    (12.0 * (n.max(1) as f64 / delta).ln()).ceil().max(1.0) as usize
}

/// Sum over starts of the median bottom-K estimate of their reach.
pub fn approx_count_chain(inst: &ChainInstance, eps: f64, delta: f64, rng: &mut JoinRng) -> ChainCount {
    let capacity = sketch_capacity(eps);
    let repetitions = sketch_repetitions(inst.n, delta);
    let starts = inst.starts();
    let slot: FxHashMap<Value, usize> = starts.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let mut per_start = vec![vec![0.0; repetitions]; starts.len()];
    for r in 0..repetitions {
        let h = HashDraw::draw(rng);
        for (u, s) in backward_pass(inst, &h, capacity) {
            per_start[slot[&u]][r] = kmv_estimate(&s);
        }
    }
    let medians: Vec<(Value, f64)> =
        starts.iter().zip(per_start.iter_mut()).map(|(&u, xs)| (u, lower_median(xs))).collect();
    let table = DegreeTable::from_estimates(eps, medians);
    ChainCount { estimate: table.estimate_total(), table, capacity, repetitions }
}

/// Values reachable from one start.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReachSet {
    pub start: Value,
    /// In discovery order.
    pub values: Vec<Value>,
}

impl ReachSet {
    pub fn degree(&self) -> usize {
        self.values.len()
    }
}

/// Layer-by-layer traversal from `u`. A start with no outgoing tuple
/// reaches nothing.
pub fn reachable_set(inst: &ChainInstance, u: Value) -> ReachSet {
    let mut frontier = vec![u];
    for layer in &inst.layers {
        let mut seen = FxHashSet::default();
        let mut next = Vec::new();
        for &x in &frontier {
            for &r in layer.rel.rows_with(layer.src, x) {
                tick(Op::Scan);
                let y = layer.rel.row(r as usize)[layer.dst];
                if seen.insert(y) {
                    next.push(y);
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    ReachSet { start: u, values: frontier }
}

/// Outcome of a single chain-sampling attempt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChainTrial {
    Sample(Tuple),
    /// Rejected by the `deg / proxy` coin.
    Rejected,
    /// The start's true degree exceeds its proxy.
    TooLow,
}

/// One attempt: each result comes back with probability `1/W` when every
/// proxy is at least the true degree.
pub fn sample_chain_trial(inst: &ChainInstance, table: &DegreeTable, rng: &mut JoinRng) -> Result<ChainTrial> {
    let u = table.sample(rng)?;
    let reach = reachable_set(inst, u);
    let d = reach.degree() as f64;
    let proxy = table.proxy(u);
    if d > proxy {
        return Ok(ChainTrial::TooLow);
    }
    let v = reach.values[rand_index(rng, reach.values.len())];
    if rand_unit(rng) * proxy < d {
        Ok(ChainTrial::Sample(Tuple(vec![u, v])))
    } else {
        Ok(ChainTrial::Rejected)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainDraw {
    pub result: Tuple,
    /// Attempts that did not produce the result.
    pub retries: u64,
}

/// Retries until success; gives up with [`Error::TableTooLow`] after
/// `⌈log₂ N⌉` consecutive low proxies.
pub fn sample_chain(inst: &ChainInstance, table: &DegreeTable, rng: &mut JoinRng) -> Result<ChainDraw> {
    let limit = (inst.n.max(2) as f64).log2().ceil() as u64;
    let mut retries = 0;
    let mut low = 0;
    loop {
        match sample_chain_trial(inst, table, rng)? {
            ChainTrial::Sample(result) => return Ok(ChainDraw { result, retries }),
            ChainTrial::Rejected => low = 0,
            ChainTrial::TooLow => {
                low += 1;
                if low >= limit {
                    return Err(Error::TableTooLow);
                }
            }
        }
        retries += 1;
    }
}

/// A degree table that rebuilds itself with a halved ε whenever it turns
/// out too low.
#[derive(Clone, Debug)]
pub struct ChainSampler<'a> {
    inst: &'a ChainInstance,
    table: DegreeTable,
    delta: f64,
    rebuilds: u32,
}

/// After this many rebuilds the sampler switches to exact degrees.
const MAX_REBUILDS: u32 = 6;

impl<'a> ChainSampler<'a> {
    pub fn new(inst: &'a ChainInstance, eps: f64, delta: f64, rng: &mut JoinRng) -> Self {
        let table = approx_count_chain(inst, eps, delta, rng).table;
        ChainSampler { inst, table, delta, rebuilds: 0 }
    }

    pub fn with_table(inst: &'a ChainInstance, table: DegreeTable, delta: f64) -> Self {
        ChainSampler { inst, table, delta, rebuilds: 0 }
    }

    pub fn table(&self) -> &DegreeTable {
        &self.table
    }

    pub fn rebuilds(&self) -> u32 {
        self.rebuilds
    }

    /// A result, or the empty verdict when no start reaches anything.
    pub fn sample(&mut self, rng: &mut JoinRng) -> (SampleVerdict, u64) {
        let mut retries = 0;
        loop {
            if self.table.total() <= 0.0 {
                return (SampleVerdict::Empty, retries);
            }
            match sample_chain(self.inst, &self.table, rng) {
                Ok(d) => return (SampleVerdict::Sample(d.result), retries + d.retries),
                Err(_) => {
                    retries += 1;
                    self.rebuilds += 1;
                    self.table = if self.rebuilds > MAX_REBUILDS {
                        DegreeTable::exact(self.inst)
                    } else {
                        approx_count_chain(self.inst, self.table.eps() / 2.0, self.delta, rng).table
                    };
                }
            }
        }
    }
}
