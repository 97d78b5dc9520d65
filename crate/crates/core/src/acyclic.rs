//! Join-project sampling and counting for arbitrary acyclic queries: join
//! tree, exact full-join counts, top-down uniform full-join sampling and an
//! exact residual count for acceptance.

use crate::counting::{approx_count_with_threshold, WUniformSampler};
use crate::error::{Error, Result};
use crate::model::{Instance, QuerySpec, Tuple, Value};
use crate::ops::{tick, tick_n, Op};
use crate::rng::JoinRng;
use crate::sampling::{run_with_budget, SampleBudget, SampleVerdict};
use rand::Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use std::collections::{BTreeSet, VecDeque};

/// A join tree over the relations of a query, rooted and listed top-down.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JoinTree {
    /// Attribute sets, one per node; node `i` is relation `i` of the query.
    pub schemas: Vec<Vec<String>>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Breadth-first order from the root.
    pub order: Vec<usize>,
    pub root: usize,
}

impl JoinTree {
    /// GYO ear removal over `schemas`, rooted at `root_hint` when given.
    pub fn from_schemas(schemas: &[Vec<String>], root_hint: Option<usize>) -> Option<Self> {
        let m = schemas.len();
        if m == 0 {
            return None;
        }
        let sets: Vec<BTreeSet<&String>> = schemas.iter().map(|e| e.iter().collect()).collect();
        let mut alive = vec![true; m];
        let mut adj = vec![Vec::new(); m];
        for _ in 1..m {
            let mut ear = None;
            'search: for i in (0..m).filter(|&i| alive[i]) {
                let shared: Vec<&String> = sets[i]
                    .iter()
                    .copied()
                    .filter(|a| (0..m).any(|k| k != i && alive[k] && sets[k].contains(a)))
                    .collect();
                for j in (0..m).filter(|&j| j != i && alive[j]) {
                    if shared.iter().all(|a| sets[j].contains(a)) {
                        ear = Some((i, j));
                        break 'search;
                    }
                }
            }
            let (i, j) = ear?;
            alive[i] = false;
            adj[i].push(j);
            adj[j].push(i);
        }
        let root = root_hint.unwrap_or(0);
        let mut parent = vec![None; m];
        let mut children = vec![Vec::new(); m];
        let mut seen = vec![false; m];
        let mut order = Vec::with_capacity(m);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(x) = queue.pop_front() {
            order.push(x);
            let mut next = adj[x].clone();
            next.sort_unstable();
            for y in next {
                if !seen[y] {
                    seen[y] = true;
                    parent[y] = Some(x);
                    children[x].push(y);
                    queue.push_back(y);
                }
            }
        }
        Some(JoinTree { schemas: schemas.to_vec(), parent, children, order, root })
    }

    /// Nodes whose schema holds `attr`.
    pub fn attribute_nodes(&self, attr: &str) -> Vec<usize> {
        (0..self.schemas.len()).filter(|&i| self.schemas[i].iter().any(|a| a == attr)).collect()
    }

    /// Every attribute's nodes form a connected subtree.
    pub fn is_valid(&self) -> bool {
        let attrs: BTreeSet<&String> = self.schemas.iter().flatten().collect();
        attrs.into_iter().all(|a| {
            let nodes = self.attribute_nodes(a);
            // a connected subtree has exactly one node whose parent lacks the attribute
            nodes.iter().filter(|&&i| self.parent[i].is_none_or(|p| !self.schemas[p].contains(a))).count() == 1
        })
    }

    fn shared_with_parent(&self, i: usize) -> Vec<String> {
        let Some(p) = self.parent[i] else { return Vec::new() };
        let mut s: Vec<String> = self.schemas[i].iter().filter(|a| self.schemas[p].contains(a)).cloned().collect();
        s.sort();
        s
    }
}

/// The join tree of `spec`, rooted at the relation holding the smallest
/// output attribute, or `None` when the query is cyclic.
pub fn build_join_tree(spec: &QuerySpec) -> Option<JoinTree> {
    let first = spec.output.iter().min()?;
    let root = spec.schemas.iter().position(|e| e.contains(first));
    JoinTree::from_schemas(&spec.schemas, root)
}

#[derive(Clone, Debug)]
struct Group {
    rows: Vec<u32>,
    prefix: Vec<u128>,
}

#[derive(Clone, Debug)]
struct NodeCounts {
    arity: usize,
    rows: Vec<Value>,
    cnt: Vec<u128>,
    /// Positions in the parent of the attributes shared with it, by name.
    parent_key_pos: Vec<usize>,
    groups: FxHashMap<Box<[Value]>, Group>,
}

impl NodeCounts {
    fn row(&self, r: usize) -> &[Value] {
        &self.rows[r * self.arity..(r + 1) * self.arity]
    }
}

/// Per-row counts of full-join extensions below each row.
#[derive(Clone, Debug)]
pub struct AnnotatedTree {
    tree: JoinTree,
    nodes: Vec<NodeCounts>,
    total: u128,
}

fn key_of(row: &[Value], pos: &[usize]) -> Box<[Value]> {
    pos.iter().map(|&p| row[p]).collect()
}

impl AnnotatedTree {
    /// Bottom-up aggregation. Each node gets its row count and its rows
    /// flattened in schema order (an empty-schema node has 0 or 1 rows).
    pub fn build(tree: &JoinTree, rows: Vec<(usize, Vec<Value>)>) -> Self {
        let m = tree.schemas.len();
        let mut nodes: Vec<Option<NodeCounts>> = vec![None; m];
        for &i in tree.order.iter().rev() {
            let arity = tree.schemas[i].len();
            let (n_rows, data) = rows[i].clone();
            tick_n(Op::Build, n_rows as u64);
            let mut cnt = vec![1u128; n_rows];
            for &c in &tree.children[i] {
                let child = nodes[c].as_ref().expect("children first");
                for (r, slot) in cnt.iter_mut().enumerate() {
                    if *slot == 0 {
                        continue;
                    }
                    let row = &data[r * arity..(r + 1) * arity];
                    let key = key_of(row, &child.parent_key_pos);
                    *slot = match child.groups.get(&key) {
                        Some(g) => slot.saturating_mul(*g.prefix.last().expect("non-empty group")),
                        None => 0,
                    };
                }
            }
            let shared = tree.shared_with_parent(i);
            let pos_in = |schema: &[String], a: &String| schema.iter().position(|x| x == a).expect("shared");
            let key_pos: Vec<usize> = shared.iter().map(|a| pos_in(&tree.schemas[i], a)).collect();
            let parent_key_pos = match tree.parent[i] {
                Some(p) => shared.iter().map(|a| pos_in(&tree.schemas[p], a)).collect(),
                None => Vec::new(),
            };
            let mut groups: FxHashMap<Box<[Value]>, Group> = FxHashMap::default();
            for (r, &c) in cnt.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let key = key_of(&data[r * arity..(r + 1) * arity], &key_pos);
                let g = groups.entry(key).or_insert_with(|| Group { rows: Vec::new(), prefix: Vec::new() });
                let acc = g.prefix.last().copied().unwrap_or(0);
                g.rows.push(r as u32);
                g.prefix.push(acc.saturating_add(c));
            }
            nodes[i] = Some(NodeCounts { arity, rows: data, cnt, parent_key_pos, groups });
        }
        let nodes: Vec<NodeCounts> = nodes.into_iter().map(|n| n.expect("every node visited")).collect();
        let total = nodes[tree.root].groups.values().next().map_or(0, |g| *g.prefix.last().expect("non-empty"));
        AnnotatedTree { tree: tree.clone(), nodes, total }
    }

    /// Exact full-join size.
    pub fn total(&self) -> u128 {
        self.total
    }

    pub fn tree(&self) -> &JoinTree {
        &self.tree
    }

    /// Downward count of row `r` at node `i`.
    pub fn row_count(&self, i: usize, r: usize) -> u128 {
        self.nodes[i].cnt[r]
    }

    /// Rows per node in the top-down draw, as row ids.
    fn sample_rows(&self, rng: &mut JoinRng) -> Result<Vec<usize>> {
        if self.total == 0 {
            return Err(Error::EmptyJoin);
        }
        let m = self.nodes.len();
        let mut chosen = vec![usize::MAX; m];
        for &i in &self.tree.order {
            let node = &self.nodes[i];
            let key: Box<[Value]> = match self.tree.parent[i] {
                Some(p) => key_of(self.nodes[p].row(chosen[p]), &node.parent_key_pos),
                None => Box::new([]),
            };
            let g = node.groups.get(&key).expect("positive count implies a matching group");
            let total = *g.prefix.last().expect("non-empty");
            tick(Op::Sample);
            let x = rng.random_range(0..total);
            let k = g.prefix.partition_point(|&p| p <= x);
            chosen[i] = g.rows[k] as usize;
        }
        Ok(chosen)
    }
}

/// Semijoin index of one relation on the attributes it shares with the output.
#[derive(Clone, Debug)]
struct SemijoinIndex {
    key_attrs: Vec<usize>,
    rest_pos: Vec<usize>,
    by_key: FxHashMap<Box<[Value]>, Vec<u32>>,
}

/// An acyclic query bound to an instance, with its annotated full join.
#[derive(Clone, Debug)]
pub struct AcyclicInstance {
    spec: QuerySpec,
    annotated: AnnotatedTree,
    /// Per node: global attribute index of each schema position.
    attr_ids: Vec<Vec<usize>>,
    semi: Vec<SemijoinIndex>,
    residual_tree: JoinTree,
    out_ids: Vec<usize>,
    n: usize,
}

impl AcyclicInstance {
    pub fn new(inst: &Instance, spec: &QuerySpec) -> Result<Self> {
        let tree = build_join_tree(spec).ok_or(Error::NotAcyclic)?;
        let mut rows = Vec::with_capacity(spec.schemas.len());
        let mut n = 0;
        for schema in &spec.schemas {
            let rel = inst
                .relation_for(schema)
                .ok_or_else(|| Error::Validation(vec![format!("missing relation for schema {{{}}}", schema.join(","))]))?;
            n += rel.len();
            let perm: Vec<usize> = schema.iter().map(|a| rel.position(a).expect("same attribute set")).collect();
            let mut flat = Vec::with_capacity(rel.len() * schema.len());
            for row in rel.rows() {
                flat.extend(perm.iter().map(|&p| row[p]));
            }
            rows.push((rel.len(), flat));
        }
        let annotated = AnnotatedTree::build(&tree, rows);
        let attr_ids: Vec<Vec<usize>> = spec
            .schemas
            .iter()
            .map(|e| e.iter().map(|a| spec.attribute_index(a).expect("known attribute")).collect())
            .collect();
        let out: FxHashSet<&String> = spec.output.iter().collect();
        let semi = (0..spec.schemas.len())
            .map(|i| {
                let schema = &spec.schemas[i];
                let mut key_attrs: Vec<usize> = (0..schema.len()).filter(|&p| out.contains(&schema[p])).collect();
                key_attrs.sort_by(|&x, &y| schema[x].cmp(&schema[y]));
                let rest_pos: Vec<usize> = (0..schema.len()).filter(|&p| !out.contains(&schema[p])).collect();
                let node = &annotated.nodes[i];
                let mut by_key: FxHashMap<Box<[Value]>, Vec<u32>> = FxHashMap::default();
                for r in 0..node.cnt.len() {
                    by_key.entry(key_of(node.row(r), &key_attrs)).or_default().push(r as u32);
                }
                SemijoinIndex { key_attrs, rest_pos, by_key }
            })
            .collect::<Vec<_>>();
        let residual_schemas: Vec<Vec<String>> =
            semi.iter().zip(&spec.schemas).map(|(s, e)| s.rest_pos.iter().map(|&p| e[p].clone()).collect()).collect();
        let residual_tree = JoinTree {
            schemas: residual_schemas,
            parent: tree.parent.clone(),
            children: tree.children.clone(),
            order: tree.order.clone(),
            root: tree.root,
        };
        let out_ids = spec.output.iter().map(|a| spec.attribute_index(a).expect("known")).collect();
        Ok(AcyclicInstance { spec: spec.clone(), annotated, attr_ids, semi, residual_tree, out_ids, n })
    }

    pub fn spec(&self) -> &QuerySpec {
        &self.spec
    }

    pub fn annotated(&self) -> &AnnotatedTree {
        &self.annotated
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Exact full-join size.
    pub fn full_join_size(&self) -> u128 {
        self.annotated.total()
    }

    /// Projection of a full-join tuple onto the output attributes.
    pub fn project(&self, s: &[Value]) -> Tuple {
        Tuple(self.out_ids.iter().map(|&i| s[i]).collect())
    }
}

/// Exact full-join size of `spec` on `inst`, with the annotated tree.
pub fn yannakakis_count(inst: &Instance, spec: &QuerySpec) -> Result<(u128, AnnotatedTree)> {
    let a = AcyclicInstance::new(inst, &spec.full_join())?;
    Ok((a.full_join_size(), a.annotated))
}

/// A full-join tuple, values in `spec.attributes` order, each with
/// probability exactly `1/OUT_⋈`.
pub fn join_sample_acyclic(inst: &AcyclicInstance, rng: &mut JoinRng) -> Result<Vec<Value>> {
    let chosen = inst.annotated.sample_rows(rng)?;
    let mut s = vec![Value(0); inst.spec.attributes.len()];
    for (i, &r) in chosen.iter().enumerate() {
        for (p, &a) in inst.attr_ids[i].iter().enumerate() {
            s[a] = inst.annotated.nodes[i].row(r)[p];
        }
    }
    Ok(s)
}

/// Per relation, the distinct projections onto the non-output attributes
/// of the rows that agree with `s` on the output attributes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidualInstance {
    pub schemas: Vec<Vec<String>>,
    pub rows: Vec<Vec<Vec<Value>>>,
}

pub fn residual_instance(inst: &AcyclicInstance, s: &[Value]) -> ResidualInstance {
    let mut rows = Vec::with_capacity(inst.semi.len());
    for (i, semi) in inst.semi.iter().enumerate() {
        let node = &inst.annotated.nodes[i];
        let key: Box<[Value]> = semi.key_attrs.iter().map(|&p| s[inst.attr_ids[i][p]]).collect();
        let mut seen: FxHashSet<Vec<Value>> = FxHashSet::default();
        let mut out = Vec::new();
        for &r in semi.by_key.get(&key).map_or(&[][..], |v| v.as_slice()) {
            tick(Op::Scan);
            let proj: Vec<Value> = semi.rest_pos.iter().map(|&p| node.row(r as usize)[p]).collect();
            if seen.insert(proj.clone()) {
                out.push(proj);
            }
        }
        rows.push(out);
    }
    ResidualInstance { schemas: inst.residual_tree.schemas.clone(), rows }
}

/// `deg(π_y s)`: the number of full-join tuples projecting to the same result.
pub fn residual_degree(inst: &AcyclicInstance, s: &[Value]) -> u128 {
    let res = residual_instance(inst, s);
    let rows = res.rows.into_iter().map(|rs| (rs.len(), rs.into_iter().flatten().collect())).collect();
    AnnotatedTree::build(&inst.residual_tree, rows).total()
}

/// Accepts `s` with probability exactly `1/deg(π_y s)`.
pub fn accept_join_project_exact(inst: &AcyclicInstance, s: &[Value], rng: &mut JoinRng) -> Result<bool> {
    let deg = residual_degree(inst, s);
    if deg == 0 {
        return Err(Error::Precondition("tuple is not in the full join".into()));
    }
    Ok(rng.random_range(0..deg) == 0)
}

fn trial(inst: &AcyclicInstance, rng: &mut JoinRng) -> Option<Tuple> {
    let s = join_sample_acyclic(inst, rng).ok()?;
    accept_join_project_exact(inst, &s, rng).ok()?.then(|| inst.project(&s))
}

/// Per-trial success probability `OUT / OUT_⋈`, each result `1 / OUT_⋈`.
impl WUniformSampler for AcyclicInstance {
    fn normalizer(&self) -> f64 {
        self.full_join_size() as f64
    }

    fn trial(&self, rng: &mut JoinRng) -> Option<Tuple> {
        trial(self, rng)
    }
}

pub fn default_budget(inst: &AcyclicInstance, delta: f64) -> SampleBudget {
    let units = (inst.full_join_size() as f64 + 1.0) * inst.n().max(1) as f64;
    SampleBudget::for_cost(units, inst.n(), delta)
}

pub fn sample_join_project(inst: &AcyclicInstance, budget: SampleBudget, rng: &mut JoinRng) -> SampleVerdict {
    if inst.full_join_size() == 0 {
        return SampleVerdict::Empty;
    }
    run_with_budget(budget, rng, |rng| trial(inst, rng))
}

/// Threshold counting with `W = OUT_⋈` and guesses from `OUT_⋈` down to 1/2.
pub fn approx_count_acyclic(inst: &AcyclicInstance, eps: f64, delta: f64, rng: &mut JoinRng) -> f64 {
    let w = inst.full_join_size() as f64;
    if w == 0.0 {
        return 0.0;
    }
    approx_count_with_threshold(inst, w, 0.5, eps, delta, rng).estimate().unwrap_or(0.0)
}
