//! Instance families with known output sizes, including the hard
//! constructions used to argue lower bounds.

use crate::error::{Error, Result};
use crate::model::{Instance, InstanceBuilder, QuerySpec, Value};
use crate::rng::{rng_from_seed, JoinRng};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Zipf};
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    MatrixCartesian,
    MatrixDisjointness,
    StarDisjointness,
    ChainD0d1,
    ZipfRandom,
}

impl Family {
    pub const ALL: [Family; 5] =
        [Family::MatrixCartesian, Family::MatrixDisjointness, Family::StarDisjointness, Family::ChainD0d1, Family::ZipfRandom];

    pub fn name(self) -> &'static str {
        match self {
            Family::MatrixCartesian => "matrix-cartesian",
            Family::MatrixDisjointness => "matrix-disjointness",
            Family::StarDisjointness => "star-disjointness",
            Family::ChainD0d1 => "chain-d0d1",
            Family::ZipfRandom => "zipf-random",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Param(format!("unknown family `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub params: BTreeMap<String, u64>,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(family: Family, params: &[(&str, u64)], seed: u64) -> Self {
        GeneratorSpec { family, params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(), seed }
    }

    fn get(&self, key: &str, default: Option<u64>) -> Result<u64> {
        self.params
            .get(key)
            .copied()
            .or(default)
            .ok_or_else(|| Error::Param(format!("{} needs parameter `{key}`", self.family)))
    }
}

/// Sizes promised by a family; `out` and `out_join` are set where closed forms exist.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub family: String,
    pub n: usize,
    pub out: Option<u64>,
    pub out_join: Option<u128>,
    pub flags: BTreeMap<String, String>,
}

#[derive(Clone, Debug)]
pub struct GeneratedInstance {
    pub label: String,
    pub spec: QuerySpec,
    pub instance: Instance,
    pub manifest: Manifest,
}

fn exact_sqrt(x: u64) -> Option<u64> {
    let r = (x as f64).sqrt().round() as u64;
    (r * r == x).then_some(r)
}

fn manifest(family: Family, inst: &Instance, out: Option<u64>, out_join: Option<u128>, flags: &[(&str, String)]) -> Manifest {
    Manifest {
        family: family.name().into(),
        n: inst.n_total(),
        out,
        out_join,
        flags: flags.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
    }
}

pub fn generate(gs: &GeneratorSpec) -> Result<Vec<GeneratedInstance>> {
    let mut rng = rng_from_seed(gs.seed);
    match gs.family {
        Family::MatrixCartesian => matrix_cartesian(gs).map(|g| vec![g]),
        Family::MatrixDisjointness => matrix_disjointness(gs, &mut rng).map(|g| vec![g]),
        Family::StarDisjointness => star_disjointness(gs, &mut rng).map(|g| vec![g]),
        Family::ChainD0d1 => chain_d0d1(gs, &mut rng),
        Family::ZipfRandom => zipf_random(gs, &mut rng).map(|g| vec![g]),
    }
}

/// `R1 = A × B`, `R2 = B × C`; either sizes `a, b, c` or `n, out` with
/// `|A| = |C| = √out` and `|B| = n / (2√out)`.
fn matrix_cartesian(gs: &GeneratorSpec) -> Result<GeneratedInstance> {
    let (a, b, c) = if gs.params.contains_key("out") {
        let (n, out) = (gs.get("n", None)?, gs.get("out", None)?);
        let root = exact_sqrt(out).filter(|&r| r > 0).ok_or_else(|| Error::Param("out must be a positive square".into()))?;
        if n % (2 * root) != 0 || n == 0 {
            return Err(Error::Param(format!("n must be a positive multiple of 2·√out = {}", 2 * root)));
        }
        (root, n / (2 * root), root)
    } else {
        (gs.get("a", None)?, gs.get("b", None)?, gs.get("c", None)?)
    };
    let mut ib = InstanceBuilder::new();
    let av: Vec<Value> = (0..a).map(|i| ib.intern(&format!("a{i}"))).collect();
    let bv: Vec<Value> = (0..b).map(|i| ib.intern(&format!("b{i}"))).collect();
    let cv: Vec<Value> = (0..c).map(|i| ib.intern(&format!("c{i}"))).collect();
    let r1 = av.iter().flat_map(|&x| bv.iter().map(move |&y| vec![x, y])).collect();
    let r2 = bv.iter().flat_map(|&y| cv.iter().map(move |&z| vec![y, z])).collect();
    ib.push(&["A", "B"], r1);
    ib.push(&["B", "C"], r2);
    let inst = ib.build();
    let out = if b > 0 { a * c } else { 0 };
    let m = manifest(
        Family::MatrixCartesian,
        &inst,
        Some(out),
        Some(a as u128 * b as u128 * c as u128),
        &[("a", a.to_string()), ("b", b.to_string()), ("c", c.to_string())],
    );
    Ok(GeneratedInstance { label: "matrix-cartesian".into(), spec: QuerySpec::matrix(), instance: inst, manifest: m })
}

/// `k` random subsets of `[m]` of size `size`, sharing exactly one element
/// when `intersect`, otherwise with empty common intersection.
fn private_sets(m: u64, k: usize, size: u64, intersect: bool, rng: &mut JoinRng) -> Result<(Vec<BTreeSet<u64>>, Option<u64>)> {
    if size == 0 || size > m / 2 {
        return Err(Error::Param(format!("set size {size} must lie in [1, m/2] with m = {m}")));
    }
    let planted = rng.random_range(0..m);
    let mut sets: Vec<BTreeSet<u64>> = (0..k)
        .map(|_| {
            sample(rng, m as usize - 1, size as usize - usize::from(intersect))
                .into_iter()
                .map(|i| if i as u64 >= planted { i as u64 + 1 } else { i as u64 })
                .collect()
        })
        .collect();
    // clear accidental common elements from the last set
    loop {
        let common: Vec<u64> = sets[0].iter().copied().filter(|x| sets.iter().all(|s| s.contains(x))).collect();
        let Some(&y) = common.first() else { break };
        let last = sets.len() - 1;
        sets[last].remove(&y);
        let z = loop {
            let z = rng.random_range(0..m);
            if z != planted && !sets[0].contains(&z) && !sets[last].contains(&z) {
                break z;
            }
        };
        sets[last].insert(z);
    }
    if intersect {
        for s in &mut sets {
            s.insert(planted);
        }
    }
    Ok((sets, intersect.then_some(planted)))
}

/// `R1 = adom(A) × S_A`, `R2 = S_B × adom(C)` with `|adom(A)| = |adom(C)| = √out`
/// and `|S_A| = |S_B| = m/4`.
fn matrix_disjointness(gs: &GeneratorSpec, rng: &mut JoinRng) -> Result<GeneratedInstance> {
    let m = gs.get("m", Some(64))?;
    let out = gs.get("out", Some(16))?;
    let intersect = gs.get("intersect", Some(1))? != 0;
    let root = exact_sqrt(out).filter(|&r| r > 0).ok_or_else(|| Error::Param("out must be a positive square".into()))?;
    let (sets, _) = private_sets(m, 2, m / 4, intersect, rng)?;
    let mut ib = InstanceBuilder::new();
    let av: Vec<Value> = (0..root).map(|i| ib.intern(&format!("a{i}"))).collect();
    let cv: Vec<Value> = (0..root).map(|i| ib.intern(&format!("c{i}"))).collect();
    let r1 = av.iter().flat_map(|&x| sets[0].iter().map(|&b| vec![x, Value(b)]).collect::<Vec<_>>()).collect::<Vec<_>>();
    let r1 = r1.into_iter().map(|r| vec![r[0], ib.intern(&format!("b{}", r[1].0))]).collect();
    let r2: Vec<Vec<Value>> = sets[1]
        .iter()
        .flat_map(|&b| cv.iter().map(move |&z| (b, z)))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|(b, z)| vec![ib.intern(&format!("b{b}")), z])
        .collect();
    ib.push(&["A", "B"], r1);
    ib.push(&["B", "C"], r2);
    let inst = ib.build();
    let (o, oj) = if intersect { (out, out as u128) } else { (0, 0) };
    let flags = [("m", m.to_string()), ("intersect", intersect.to_string())];
    let man = manifest(Family::MatrixDisjointness, &inst, Some(o), Some(oj), &flags);
    Ok(GeneratedInstance { label: "matrix-disjointness".into(), spec: QuerySpec::matrix(), instance: inst, manifest: man })
}

/// `R_i = adom(A_i) × S_i` with `|adom(A_i)| = l` and `|S_i| = m/(2k)`.
fn star_disjointness(gs: &GeneratorSpec, rng: &mut JoinRng) -> Result<GeneratedInstance> {
    let k = gs.get("k", Some(3))? as usize;
    let m = gs.get("m", Some(60))?;
    let l = gs.get("l", Some(2))?;
    let intersect = gs.get("intersect", Some(1))? != 0;
    if k < 2 || l == 0 {
        return Err(Error::Param("star-disjointness needs k ≥ 2 and l ≥ 1".into()));
    }
    let (sets, _) = private_sets(m, k, m / (2 * k as u64), intersect, rng)?;
    let mut ib = InstanceBuilder::new();
    for (i, s) in sets.iter().enumerate() {
        let mut rows = Vec::new();
        for j in 0..l {
            let a = ib.intern(&format!("a{}_{j}", i + 1));
            for &b in s {
                rows.push(vec![a, ib.intern(&format!("b{b}"))]);
            }
        }
        ib.push(&[&format!("A{}", i + 1), "B"], rows);
    }
    let inst = ib.build();
    let full = (l as u128).pow(k as u32);
    let (o, oj) = if intersect { (full as u64, full) } else { (0, 0) };
    let flags = [("k", k.to_string()), ("m", m.to_string()), ("l", l.to_string()), ("intersect", intersect.to_string())];
    let man = manifest(Family::StarDisjointness, &inst, Some(o), Some(oj), &flags);
    Ok(GeneratedInstance { label: "star-disjointness".into(), spec: QuerySpec::star(k), instance: inst, manifest: man })
}

/// The paired 3-chain distributions: `planted` random tuples in the critical
/// block `B_α × C_α` (`l` for d0, `θ·l` for d1), padded to `n` per block.
fn chain_d0d1(gs: &GeneratorSpec, rng: &mut JoinRng) -> Result<Vec<GeneratedInstance>> {
    let n = gs.get("n", None)?;
    let theta = gs.get("theta", Some(2))?;
    let l = gs.get("l", Some(1))?;
    let delta = gs.get("delta", None)?;
    let root = exact_sqrt(delta).filter(|&r| r > 0).ok_or_else(|| Error::Param("delta must be a positive square".into()))?;
    if n % root != 0 {
        return Err(Error::Param(format!("n must be a multiple of √delta = {root}")));
    }
    if theta < 2 || delta as u128 * l as u128 * theta as u128 > n as u128 * n as u128 || (theta + 1) * l > n {
        return Err(Error::Param("need θ ≥ 2, Δ·L ≤ N²/θ and (θ+1)·L ≤ N".into()));
    }
    let alpha = n / root;
    let dom = 3 * n;
    let mut out = Vec::new();
    for (tag, planted) in [("d0", l), ("d1", theta * l)] {
        let mut ib = InstanceBuilder::new();
        let b = |ib: &mut InstanceBuilder, i: u64| ib.intern(&format!("b{i}"));
        let c = |ib: &mut InstanceBuilder, i: u64| ib.intern(&format!("c{i}"));
        let mut r1 = Vec::new();
        let mut r3 = Vec::new();
        for i in 0..alpha {
            for j in 0..root {
                r1.push(vec![ib.intern(&format!("a{i}_{j}")), b(&mut ib, i)]);
                r3.push(vec![c(&mut ib, i), ib.intern(&format!("d{i}_{j}"))]);
            }
        }
        // B_α = C_α = 0..alpha, the β blocks are the rest of 0..3n
        let blocks = [(true, true, planted), (true, false, n - planted), (false, true, n - planted), (false, false, planted)];
        let mut seen = FxHashSet::default();
        let mut r2 = Vec::new();
        for (ba, ca, count) in blocks {
            let pick = |rng: &mut JoinRng, in_alpha: bool| {
                if in_alpha {
                    rng.random_range(0..alpha)
                } else {
                    rng.random_range(alpha..dom)
                }
            };
            let capacity = (if ba { alpha } else { dom - alpha }) * (if ca { alpha } else { dom - alpha });
            if count > capacity {
                return Err(Error::Param(format!("block too small for {count} tuples")));
            }
            let mut added = 0;
            while added < count {
                let (x, y) = (pick(rng, ba), pick(rng, ca));
                if seen.insert((x, y)) {
                    r2.push(vec![b(&mut ib, x), c(&mut ib, y)]);
                    added += 1;
                }
            }
        }
        ib.push(&["A1", "A2"], r1);
        ib.push(&["A2", "A3"], r2);
        ib.push(&["A3", "A4"], r3);
        let inst = ib.build();
        let o = planted * delta;
        let flags = [
            ("distribution", tag.to_string()),
            ("planted", planted.to_string()),
            ("theta", theta.to_string()),
            ("l", l.to_string()),
            ("delta", delta.to_string()),
        ];
        let man = manifest(Family::ChainD0d1, &inst, Some(o), Some(o as u128), &flags);
        out.push(GeneratedInstance { label: format!("chain-{tag}"), spec: QuerySpec::chain(3), instance: inst, manifest: man });
    }
    Ok(out)
}

/// `k` relations of `n` distinct rows with Zipf-distributed values over
/// `dom` values, exponent `s100 / 100`, shaped as a star or (with
/// `chain = 1`) a chain.
fn zipf_random(gs: &GeneratorSpec, rng: &mut JoinRng) -> Result<GeneratedInstance> {
    let k = gs.get("k", Some(2))? as usize;
    let chain = gs.get("chain", Some(0))? != 0;
    let n = gs.get("n", Some(100))?;
    let dom = gs.get("dom", Some(50))?;
    let s = gs.get("s100", Some(110))? as f64 / 100.0;
    if k < 2 || dom == 0 || n > dom * dom {
        return Err(Error::Param("zipf-random needs k ≥ 2, dom ≥ 1 and n ≤ dom²".into()));
    }
    let zipf = Zipf::new(dom as f64, s).map_err(|e| Error::Param(e.to_string()))?;
    let spec = if chain { QuerySpec::chain(k) } else { QuerySpec::star(k) };
    let mut ib = InstanceBuilder::new();
    for e in &spec.schemas {
        let mut seen = FxHashSet::default();
        let mut rows = Vec::new();
        while (rows.len() as u64) < n {
            let x = zipf.sample(rng) as u64;
            let y = zipf.sample(rng) as u64;
            if seen.insert((x, y)) {
                rows.push(vec![ib.intern(&format!("{}{x}", e[0].to_lowercase())), ib.intern(&format!("{}{y}", e[1].to_lowercase()))]);
            }
        }
        ib.push(&[&e[0], &e[1]], rows);
    }
    let inst = ib.build();
    let flags = [("k", k.to_string()), ("chain", chain.to_string()), ("dom", dom.to_string()), ("s100", gs.get("s100", Some(110))?.to_string())];
    let man = manifest(Family::ZipfRandom, &inst, None, None, &flags);
    Ok(GeneratedInstance { label: "zipf-random".into(), spec, instance: inst, manifest: man })
}
