//! Access structures: the four property-testing primitives over one relation,
//! exact weighted sampling, and lazy sampling without replacement.

use crate::error::{Error, Result};
use crate::model::{Assignment, Relation, Value};
use crate::ops::{tick, tick_n, Op};
use crate::rng::{rand_index, JoinRng};
use rand::Rng;
use rustc_hash::{FxHashMap, FxHashSet};

/// Values whose ids stay below this multiple of the row count get an
/// array-backed lookup; sparser ids fall back to hashing.
const DENSE_FACTOR: usize = 8;

#[derive(Clone, Debug)]
enum Lookup {
    Dense(Vec<(u32, u32)>),
    Sparse(FxHashMap<Value, (u32, u32)>),
}

impl Lookup {
    #[inline]
    fn get(&self, v: Value) -> (u32, u32) {
        match self {
            Lookup::Dense(slots) => slots.get(v.0 as usize).copied().unwrap_or((0, 0)),
            Lookup::Sparse(map) => map.get(&v).copied().unwrap_or((0, 0)),
        }
    }
}

/// Rows grouped by the value of one attribute, in insertion order.
#[derive(Clone, Debug)]
struct Column {
    lookup: Lookup,
    row_ids: Vec<u32>,
    distinct: Vec<Value>,
}

#[derive(Clone, Debug)]
enum Membership {
    Pairs(FxHashSet<(Value, Value)>),
    Rows(FxHashSet<Box<[Value]>>),
}

/// One relation with O(1) sample / degree / neighbor / membership access.
///
/// Neighbor order is the insertion order of the rows, fixed for the life of
/// the index.
#[derive(Clone, Debug)]
pub struct IndexedRelation {
    schema: Vec<String>,
    arity: usize,
    data: Vec<Value>,
    columns: Vec<Column>,
    membership: Membership,
}

impl IndexedRelation {
    pub fn build(rel: &Relation) -> Self {
        let arity = rel.arity();
        let n = rel.len();
        let data: Vec<Value> = rel.rows().flatten().copied().collect();
        tick_n(Op::Build, n as u64);
        let columns = (0..arity).map(|pos| build_column(&data, arity, pos, n)).collect();
        let membership = if arity == 2 {
            Membership::Pairs(data.chunks_exact(2).map(|r| (r[0], r[1])).collect())
        } else {
            Membership::Rows(data.chunks_exact(arity).map(|r| r.to_vec().into_boxed_slice()).collect())
        };
        IndexedRelation { schema: rel.schema().to_vec(), arity, data, columns, membership }
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.arity
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn position(&self, attr: &str) -> Option<usize> {
        self.schema.iter().position(|a| a == attr)
    }

    fn require(&self, attr: &str) -> Result<usize> {
        self.position(attr).ok_or_else(|| Error::UnknownAttribute(attr.to_string()))
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Value] {
        &self.data[i * self.arity..(i + 1) * self.arity]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, Value> {
        self.data.chunks_exact(self.arity)
    }

    /// Distinct values of the attribute at `pos`, in first-appearance order.
    pub fn distinct(&self, pos: usize) -> &[Value] {
        &self.columns[pos].distinct
    }

    /// Uniform row.
    #[inline]
    pub fn sample_row(&self, rng: &mut JoinRng) -> Option<&[Value]> {
        tick(Op::Sample);
        if self.data.is_empty() {
            return None;
        }
        Some(self.row(rand_index(rng, self.len())))
    }

    /// `|R ⋉ v|` for the attribute at `pos`.
    #[inline]
    pub fn degree_at(&self, pos: usize, v: Value) -> usize {
        tick(Op::Degree);
        self.columns[pos].lookup.get(v).1 as usize
    }

    /// Row ids with value `v` at `pos`, in the fixed neighbor order. Not
    /// counted as a primitive; callers tick for what they touch.
    #[inline]
    pub fn rows_with(&self, pos: usize, v: Value) -> &[u32] {
        let col = &self.columns[pos];
        let (off, len) = col.lookup.get(v);
        &col.row_ids[off as usize..(off + len) as usize]
    }

    /// The `j`-th (0-based) row with value `v` at `pos`.
    #[inline]
    pub fn neighbor_row(&self, pos: usize, v: Value, j: usize) -> Option<&[Value]> {
        tick(Op::Neighbor);
        let ids = self.rows_with(pos, v);
        ids.get(j).map(|&r| self.row(r as usize))
    }

    /// For a binary relation: the partner of `v` in the `j`-th (0-based) row with `v` at `pos`.
    #[inline]
    pub fn partner(&self, pos: usize, v: Value, j: usize) -> Value {
        tick(Op::Neighbor);
        let r = self.rows_with(pos, v)[j] as usize;
        self.data[r * 2 + (1 - pos)]
    }

    /// Membership of a full row given in schema order.
    #[inline]
    pub fn contains(&self, row: &[Value]) -> bool {
        tick(Op::Test);
        match &self.membership {
            Membership::Pairs(set) => row.len() == 2 && set.contains(&(row[0], row[1])),
            Membership::Rows(set) => set.contains(row),
        }
    }

    /// Membership for binary relations, values in schema order.
    #[inline]
    pub fn contains_pair(&self, x: Value, y: Value) -> bool {
        tick(Op::Test);
        match &self.membership {
            Membership::Pairs(set) => set.contains(&(x, y)),
            Membership::Rows(set) => set.contains(&[x, y][..]),
        }
    }

    // Named-attribute forms of the primitives.

    pub fn sample_tuple(&self, rng: &mut JoinRng) -> Result<Assignment> {
        let row = self.sample_row(rng).ok_or(Error::EmptyRelation)?;
        Ok(self.schema.iter().cloned().zip(row.iter().copied()).collect())
    }

    pub fn degree(&self, attr: &str, v: Value) -> Result<usize> {
        let pos = self.require(attr)?;
        Ok(self.degree_at(pos, v))
    }

    /// The `j`-th (1-based) element of `π_{e−attr}(R ⋉ v)`.
    pub fn neighbor_at(&self, attr: &str, v: Value, j: usize) -> Result<Assignment> {
        let pos = self.require(attr)?;
        let degree = self.degree_at(pos, v);
        if j == 0 || j > degree {
            return Err(Error::IndexOutOfRange { index: j, degree });
        }
        let row = self.neighbor_row(pos, v, j - 1).expect("in range");
        Ok(self
            .schema
            .iter()
            .zip(row)
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, (a, &x))| (a.clone(), x))
            .collect())
    }

    pub fn test_tuple(&self, t: &Assignment) -> Result<bool> {
        if t.len() != self.arity || self.schema.iter().any(|a| !t.contains_key(a)) {
            return Err(Error::SchemaMismatch(format!(
                "expected {:?}, got {:?}",
                self.schema,
                t.keys().collect::<Vec<_>>()
            )));
        }
        let row: Vec<Value> = self.schema.iter().map(|a| t[a]).collect();
        Ok(self.contains(&row))
    }
}

fn build_column(data: &[Value], arity: usize, pos: usize, n: usize) -> Column {
    let max_id = data.chunks_exact(arity).map(|r| r[pos].0).max().unwrap_or(0);
    let dense = (max_id as usize) < DENSE_FACTOR * n + 64;
    let mut distinct = Vec::new();
    let mut counts: FxHashMap<Value, u32> = FxHashMap::default();
    for r in data.chunks_exact(arity) {
        let c = counts.entry(r[pos]).or_insert(0);
        if *c == 0 {
            distinct.push(r[pos]);
        }
        *c += 1;
    }
    let mut offsets: FxHashMap<Value, (u32, u32)> = FxHashMap::default();
    let mut off = 0u32;
    for v in &distinct {
        let c = counts[v];
        offsets.insert(*v, (off, 0));
        off += c;
    }
    let mut row_ids = vec![0u32; n];
    for (i, r) in data.chunks_exact(arity).enumerate() {
        let slot = offsets.get_mut(&r[pos]).expect("counted");
        row_ids[(slot.0 + slot.1) as usize] = i as u32;
        slot.1 += 1;
    }
    let lookup = if dense {
        let mut slots = vec![(0u32, 0u32); max_id as usize + 1];
        for (v, s) in &offsets {
            slots[v.0 as usize] = *s;
        }
        Lookup::Dense(slots)
    } else {
        Lookup::Sparse(offsets)
    };
    Column { lookup, row_ids, distinct }
}

/// Items up to this count use a linear prefix scan instead of an alias table.
const PREFIX_SCAN_LIMIT: usize = 64;

#[derive(Clone, Debug)]
enum Table {
    Prefix(Vec<u128>),
    Alias { cut: Vec<u128>, alias: Vec<u32> },
}

/// Draws key `i` with probability exactly `weight_i / total`.
///
/// Large tables use an integer alias method, so no floating-point rounding
/// enters the probabilities.
#[derive(Clone, Debug)]
pub struct WeightedSampler<K> {
    keys: Vec<K>,
    weights: Vec<u64>,
    total: u128,
    table: Table,
}

impl<K: Copy> WeightedSampler<K> {
    pub fn new(items: impl IntoIterator<Item = (K, u64)>) -> Self {
        let (keys, weights): (Vec<K>, Vec<u64>) = items.into_iter().unzip();
        let total: u128 = weights.iter().map(|&w| w as u128).sum();
        let table = if keys.len() <= PREFIX_SCAN_LIMIT {
            let mut acc = 0u128;
            Table::Prefix(
                weights
                    .iter()
                    .map(|&w| {
                        acc += w as u128;
                        acc
                    })
                    .collect(),
            )
        } else {
            build_alias(&weights, total)
        };
        WeightedSampler { keys, weights, total, table }
    }

    pub fn total_weight(&self) -> u128 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = (K, u64)> + '_ {
        self.keys.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn sample(&self, rng: &mut JoinRng) -> Result<K> {
        if self.total == 0 {
            return Err(Error::ZeroWeight);
        }
        tick(Op::Draw);
        let i = match &self.table {
            Table::Prefix(prefix) => {
                let r = rng.random_range(0..self.total);
                prefix.iter().position(|&p| r < p).expect("r below total")
            }
            Table::Alias { cut, alias } => {
                let i = rand_index(rng, self.keys.len());
                let r = rng.random_range(0..self.total);
                if r < cut[i] {
                    i
                } else {
                    alias[i] as usize
                }
            }
        };
        Ok(self.keys[i])
    }
}

// Vose's construction on integers: bucket i keeps item i with mass cut[i]
// out of `total`, and hands the rest to alias[i].
fn build_alias(weights: &[u64], total: u128) -> Table {
    let n = weights.len();
    let mut scaled: Vec<u128> = weights.iter().map(|&w| w as u128 * n as u128).collect();
    let mut cut = vec![total; n];
    let mut alias: Vec<u32> = (0..n as u32).collect();
    let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < total);
    while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
        cut[s] = scaled[s];
        alias[s] = l as u32;
        scaled[l] -= total - scaled[s];
        if scaled[l] < total {
            large.pop();
            small.push(l);
        }
    }
    Table::Alias { cut, alias }
}

/// Online Fisher-Yates over `0..universe`, storing only displaced slots.
///
/// Displacements live in a fixed inline list until it fills up, then move
/// to a hash map, so short draws never allocate.
#[derive(Clone, Debug)]
pub struct NoReplacementSampler {
    universe: usize,
    few: [(usize, usize); SHORT_SWAP_LIST],
    few_len: usize,
    many: Option<FxHashMap<usize, usize>>,
    drawn: usize,
}

const SHORT_SWAP_LIST: usize = 16;

impl NoReplacementSampler {
    pub fn new(universe: usize) -> Self {
        NoReplacementSampler { universe, few: [(0, 0); SHORT_SWAP_LIST], few_len: 0, many: None, drawn: 0 }
    }

    pub fn universe_size(&self) -> usize {
        self.universe
    }

    pub fn drawn(&self) -> usize {
        self.drawn
    }

    pub fn remaining(&self) -> usize {
        self.universe - self.drawn
    }

    fn slot(&self, i: usize) -> usize {
        match &self.many {
            Some(map) => map.get(&i).copied().unwrap_or(i),
            None => self.few[..self.few_len].iter().find(|e| e.0 == i).map_or(i, |e| e.1),
        }
    }

    fn set(&mut self, i: usize, v: usize) {
        if let Some(map) = &mut self.many {
            map.insert(i, v);
        } else if let Some(e) = self.few[..self.few_len].iter_mut().find(|e| e.0 == i) {
            e.1 = v;
        } else if self.few_len < SHORT_SWAP_LIST {
            self.few[self.few_len] = (i, v);
            self.few_len += 1;
        } else {
            let mut map: FxHashMap<usize, usize> = self.few.iter().copied().collect();
            map.insert(i, v);
            self.many = Some(map);
        }
    }

    /// A uniform index (0-based) among those not yet drawn.
    pub fn next(&mut self, rng: &mut JoinRng) -> Result<usize> {
        if self.drawn >= self.universe {
            return Err(Error::Exhausted);
        }
        tick(Op::Draw);
        let i = self.drawn;
        let j = rng.random_range(i..self.universe);
        let picked = self.slot(j);
        if j != i {
            let displaced = self.slot(i);
            self.set(j, displaced);
        }
        self.drawn += 1;
        Ok(picked)
    }
}
