//! Brute-force ground truth: two independent exact evaluators.

use crate::error::{Error, Result};
use crate::model::{chain_binding, Instance, QuerySpec, Relation, Tuple, Value};
use rustc_hash::FxHashMap;
use std::collections::{BTreeMap, BTreeSet};

/// Largest number of intermediate tuples the index-join evaluator will build.
pub const SIZE_GUARD: u64 = 10_000_000;

/// Exact answers for one query on one instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleReport {
    pub result_set: BTreeSet<Tuple>,
    pub out: u64,
    pub out_join: u128,
    /// Result → number of full-join tuples projecting to it.
    pub deg_map: BTreeMap<Tuple, u64>,
    /// For chain queries: start value → number of results starting there.
    pub per_start_reach: Option<BTreeMap<Value, u64>>,
}

impl OracleReport {
    fn from_degrees(spec: &QuerySpec, deg_map: BTreeMap<Tuple, u64>) -> Self {
        let result_set: BTreeSet<Tuple> = deg_map.keys().cloned().collect();
        let out_join = deg_map.values().map(|&d| d as u128).sum();
        let per_start_reach = chain_binding(spec).map(|_| {
            let mut m = BTreeMap::new();
            for t in &result_set {
                *m.entry(t.0[0]).or_insert(0) += 1;
            }
            m
        });
        OracleReport { out: result_set.len() as u64, result_set, out_join, deg_map, per_start_reach }
    }

    pub fn degree(&self, t: &Tuple) -> u64 {
        self.deg_map.get(t).copied().unwrap_or(0)
    }
}

fn relations<'a>(inst: &'a Instance, spec: &QuerySpec) -> Result<Vec<&'a Relation>> {
    spec.schemas
        .iter()
        .map(|e| {
            inst.relation_for(e)
                .ok_or_else(|| Error::Validation(vec![format!("missing relation for schema {{{}}}", e.join(","))]))
        })
        .collect()
}

/// Relation visiting order: each next relation shares the most attributes
/// with those already bound (lowest index on ties).
fn join_order(spec: &QuerySpec) -> Vec<usize> {
    let m = spec.schemas.len();
    let mut bound: BTreeSet<&String> = BTreeSet::new();
    let mut used = vec![false; m];
    let mut order = Vec::with_capacity(m);
    for _ in 0..m {
        let next = (0..m)
            .filter(|&i| !used[i])
            .max_by_key(|&i| (spec.schemas[i].iter().filter(|a| bound.contains(a)).count(), std::cmp::Reverse(i)))
            .expect("an unused relation");
        used[next] = true;
        bound.extend(spec.schemas[next].iter());
        order.push(next);
    }
    order
}

struct Step<'a> {
    rel: &'a Relation,
    /// (position in relation, attribute id) for attributes bound earlier.
    probe: Vec<(usize, usize)>,
    /// (position in relation, attribute id) for attributes bound here.
    bind: Vec<(usize, usize)>,
    index: FxHashMap<Vec<Value>, Vec<usize>>,
}

/// Full join by nested index joins, then projection with witness counts.
pub fn exact_eval(inst: &Instance, spec: &QuerySpec) -> Result<OracleReport> {
    let rels = relations(inst, spec)?;
    let mut bound = vec![false; spec.attributes.len()];
    let mut steps = Vec::new();
    for i in join_order(spec) {
        let rel = rels[i];
        let (mut probe, mut bind) = (Vec::new(), Vec::new());
        for (p, a) in rel.schema().iter().enumerate() {
            let id = spec.attribute_index(a).expect("known attribute");
            if bound[id] {
                probe.push((p, id));
            } else {
                bind.push((p, id));
            }
        }
        for &(_, id) in &bind {
            bound[id] = true;
        }
        let mut index: FxHashMap<Vec<Value>, Vec<usize>> = FxHashMap::default();
        for (r, row) in rel.rows().enumerate() {
            index.entry(probe.iter().map(|&(p, _)| row[p]).collect()).or_default().push(r);
        }
        steps.push(Step { rel, probe, bind, index });
    }
    let out_ids: Vec<usize> = spec.output.iter().map(|a| spec.attribute_index(a).expect("known")).collect();
    let mut deg: BTreeMap<Tuple, u64> = BTreeMap::new();
    let mut assignment = vec![Value(0); spec.attributes.len()];
    let mut built = 0u64;
    fn go(
        steps: &[Step<'_>],
        depth: usize,
        assignment: &mut Vec<Value>,
        out_ids: &[usize],
        deg: &mut BTreeMap<Tuple, u64>,
        built: &mut u64,
    ) -> Result<()> {
        if depth == steps.len() {
            *deg.entry(Tuple(out_ids.iter().map(|&i| assignment[i]).collect())).or_insert(0) += 1;
            return Ok(());
        }
        let step = &steps[depth];
        let key: Vec<Value> = step.probe.iter().map(|&(_, id)| assignment[id]).collect();
        let Some(rows) = step.index.get(&key) else { return Ok(()) };
        for &r in rows {
            *built += 1;
            if *built > SIZE_GUARD {
                return Err(Error::SizeGuard(*built));
            }
            let row = step.rel.row(r);
            for &(p, id) in &step.bind {
                assignment[id] = row[p];
            }
            go(steps, depth + 1, assignment, out_ids, deg, built)?;
        }
        Ok(())
    }
    go(&steps, 0, &mut assignment, &out_ids, &mut deg, &mut built)?;
    Ok(OracleReport::from_degrees(spec, deg))
}

/// Odometer over one row per relation, in input order, pruning as soon as
/// two chosen rows disagree on a shared attribute.
pub fn naive_eval(inst: &Instance, spec: &QuerySpec) -> Result<OracleReport> {
    let rels = relations(inst, spec)?;
    let mut deg: BTreeMap<Tuple, u64> = BTreeMap::new();
    let mut chosen: Vec<Option<Assignment>> = vec![None; rels.len()];
    type Assignment = BTreeMap<String, Value>;
    fn consistent(a: &Assignment, partial: &[Option<Assignment>]) -> bool {
        partial.iter().flatten().all(|b| a.iter().all(|(k, v)| b.get(k).is_none_or(|w| w == v)))
    }
    fn go(
        rels: &[&Relation],
        depth: usize,
        chosen: &mut Vec<Option<Assignment>>,
        spec: &QuerySpec,
        deg: &mut BTreeMap<Tuple, u64>,
    ) {
        if depth == rels.len() {
            let mut merged = Assignment::new();
            for a in chosen.iter().flatten() {
                merged.extend(a.iter().map(|(k, v)| (k.clone(), *v)));
            }
            *deg.entry(Tuple(spec.output.iter().map(|a| merged[a]).collect())).or_insert(0) += 1;
            return;
        }
        for row in rels[depth].rows() {
            let a: Assignment = rels[depth].schema().iter().cloned().zip(row.iter().copied()).collect();
            if consistent(&a, &chosen[..depth]) {
                chosen[depth] = Some(a);
                go(rels, depth + 1, chosen, spec, deg);
                chosen[depth] = None;
            }
        }
    }
    go(&rels, 0, &mut chosen, spec, &mut deg);
    Ok(OracleReport::from_degrees(spec, deg))
}
