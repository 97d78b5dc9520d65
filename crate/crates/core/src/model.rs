//! Relations, instances, join-project query specifications and shapes.

use crate::error::{Error, Result};
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// An opaque domain value. Algorithms only compare and hash these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Value(pub u64);

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Values of one tuple, aligned with an attribute list known from context
/// (a relation schema, the output attributes, or the query attributes).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tuple(pub Vec<Value>);

impl Tuple {
    pub fn values(&self) -> &[Value] {
        &self.0
    }
}

impl From<Vec<Value>> for Tuple {
    fn from(v: Vec<Value>) -> Self {
        Tuple(v)
    }
}

/// A tuple keyed by attribute name.
pub type Assignment = BTreeMap<String, Value>;

/// Interning table between external strings and dense value ids.
#[derive(Clone, Debug, Default)]
pub struct Dictionary {
    names: Vec<String>,
    ids: FxHashMap<String, u64>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> Value {
        if let Some(&id) = self.ids.get(name) {
            return Value(id);
        }
        let id = self.names.len() as u64;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        Value(id)
    }

    pub fn lookup(&self, name: &str) -> Option<Value> {
        self.ids.get(name).map(|&id| Value(id))
    }

    /// External name of `v`, or `#id` for values that were never interned.
    pub fn name(&self, v: Value) -> String {
        self.names.get(v.0 as usize).cloned().unwrap_or_else(|| v.to_string())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// A relation stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Relation {
    schema: Vec<String>,
    data: Vec<Value>,
}

impl Relation {
    pub fn new(schema: Vec<String>, rows: impl IntoIterator<Item = Vec<Value>>) -> Result<Self> {
        if schema.is_empty() {
            return Err(Error::InvalidQuery("relation with empty schema".into()));
        }
        let arity = schema.len();
        let mut data = Vec::new();
        for row in rows {
            if row.len() != arity {
                return Err(Error::SchemaMismatch(format!(
                    "row of width {} for schema {:?}",
                    row.len(),
                    schema
                )));
            }
            data.extend_from_slice(&row);
        }
        Ok(Relation { schema, data })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn arity(&self) -> usize {
        self.schema.len()
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.schema.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, Value> {
        self.data.chunks_exact(self.schema.len())
    }

    pub fn row(&self, i: usize) -> &[Value] {
        let k = self.schema.len();
        &self.data[i * k..(i + 1) * k]
    }

    pub fn position(&self, attr: &str) -> Option<usize> {
        self.schema.iter().position(|a| a == attr)
    }

    /// Same attribute set as `attrs`, in any order.
    pub fn has_schema(&self, attrs: &[String]) -> bool {
        same_attribute_set(&self.schema, attrs)
    }

    /// Copy without duplicate rows, keeping first occurrences in order.
    pub fn deduplicated(&self) -> Relation {
        let mut seen = FxHashSet::default();
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            if seen.insert(row) {
                data.extend_from_slice(row);
            }
        }
        Relation { schema: self.schema.clone(), data }
    }

    pub fn duplicate_count(&self) -> usize {
        let distinct: FxHashSet<&[Value]> = self.rows().collect();
        self.len() - distinct.len()
    }
}

pub(crate) fn same_attribute_set(a: &[String], b: &[String]) -> bool {
    let sa: BTreeSet<&String> = a.iter().collect();
    let sb: BTreeSet<&String> = b.iter().collect();
    a.len() == sa.len() && b.len() == sb.len() && sa == sb
}

/// A database instance: relations plus the dictionary that named their values.
#[derive(Clone, Debug, Default)]
pub struct Instance {
    relations: Vec<Relation>,
    dictionary: Dictionary,
}

impl Instance {
    pub fn new(relations: Vec<Relation>, dictionary: Dictionary) -> Self {
        Instance { relations, dictionary }
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    /// Total number of tuples (N).
    pub fn n_total(&self) -> usize {
        self.relations.iter().map(Relation::len).sum()
    }

    pub fn relation_for(&self, attrs: &[String]) -> Option<&Relation> {
        self.relations.iter().find(|r| r.has_schema(attrs))
    }

    /// Rows rendered with external names, for equality checks across ingestion.
    pub fn named_rows(&self) -> BTreeMap<Vec<String>, BTreeSet<Vec<String>>> {
        self.relations
            .iter()
            .map(|r| {
                let rows = r.rows().map(|row| row.iter().map(|&v| self.dictionary.name(v)).collect()).collect();
                (r.schema().to_vec(), rows)
            })
            .collect()
    }
}

/// Builds instances from string-valued rows, interning as it goes.
#[derive(Default)]
pub struct InstanceBuilder {
    relations: Vec<Relation>,
    dictionary: Dictionary,
}

impl InstanceBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> Value {
        self.dictionary.intern(name)
    }

    pub fn relation<S: AsRef<str>>(mut self, schema: &[&str], rows: &[&[S]]) -> Self {
        let rows: Vec<Vec<Value>> =
            rows.iter().map(|r| r.iter().map(|v| self.dictionary.intern(v.as_ref())).collect()).collect();
        self.push(schema, rows);
        self
    }

    /// Adds a relation whose rows are already interned.
    pub fn push(&mut self, schema: &[&str], rows: Vec<Vec<Value>>) {
        let schema = schema.iter().map(|s| s.to_string()).collect();
        self.relations.push(Relation::new(schema, rows).expect("row width matches schema"));
    }

    pub fn build(self) -> Instance {
        Instance { relations: self.relations, dictionary: self.dictionary }
    }
}

/// A join-project query `(V, E, y)`.
///
/// `attributes` is sorted; `output` keeps the caller's order, which fixes the
/// column order of result tuples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub attributes: Vec<String>,
    pub schemas: Vec<Vec<String>>,
    pub output: Vec<String>,
}

impl QuerySpec {
    pub fn new(schemas: Vec<Vec<String>>, output: Vec<String>) -> Result<Self> {
        if schemas.is_empty() {
            return Err(Error::InvalidQuery("no relations".into()));
        }
        let mut attrs = BTreeSet::new();
        for e in &schemas {
            if e.is_empty() {
                return Err(Error::InvalidQuery("empty relation schema".into()));
            }
            let set: BTreeSet<&String> = e.iter().collect();
            if set.len() != e.len() {
                return Err(Error::InvalidQuery(format!("repeated attribute in schema {e:?}")));
            }
            attrs.extend(e.iter().cloned());
        }
        if output.is_empty() {
            return Err(Error::InvalidQuery("output attribute list is empty".into()));
        }
        let outset: BTreeSet<&String> = output.iter().collect();
        if outset.len() != output.len() {
            return Err(Error::InvalidQuery("repeated output attribute".into()));
        }
        if let Some(a) = output.iter().find(|a| !attrs.contains(*a)) {
            return Err(Error::InvalidQuery(format!("output attribute `{a}` appears in no relation")));
        }
        Ok(QuerySpec { attributes: attrs.into_iter().collect(), schemas, output })
    }

    /// Convenience constructor from string slices.
    pub fn from_strs(schemas: &[&[&str]], output: &[&str]) -> Result<Self> {
        Self::new(
            schemas.iter().map(|e| e.iter().map(|s| s.to_string()).collect()).collect(),
            output.iter().map(|s| s.to_string()).collect(),
        )
    }

    /// The matrix query `π_{A,C} R1(A,B) ⋈ R2(B,C)`.
    pub fn matrix() -> Self {
        Self::from_strs(&[&["A", "B"], &["B", "C"]], &["A", "C"]).expect("valid")
    }

    /// The k-star query over `A1..Ak` and center `B`.
    pub fn star(k: usize) -> Self {
        let leaves: Vec<String> = (1..=k).map(|i| format!("A{i}")).collect();
        let schemas = leaves.iter().map(|a| vec![a.clone(), "B".to_string()]).collect();
        Self::new(schemas, leaves).expect("valid")
    }

    /// The k-chain query over `A1..A(k+1)`.
    pub fn chain(k: usize) -> Self {
        let attrs: Vec<String> = (1..=k + 1).map(|i| format!("A{i}")).collect();
        let schemas = (0..k).map(|i| vec![attrs[i].clone(), attrs[i + 1].clone()]).collect();
        Self::new(schemas, vec![attrs[0].clone(), attrs[k].clone()]).expect("valid")
    }

    /// The same query with every attribute projected out.
    pub fn full_join(&self) -> Self {
        QuerySpec { attributes: self.attributes.clone(), schemas: self.schemas.clone(), output: self.attributes.clone() }
    }

    pub fn attribute_index(&self, attr: &str) -> Option<usize> {
        self.attributes.binary_search_by(|a| a.as_str().cmp(attr)).ok()
    }
}

/// Orientation of a star (or matrix) query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarBinding {
    pub center: String,
    /// Leaf attributes in output order.
    pub leaves: Vec<String>,
    /// `relations[i]` is the schema index holding `leaves[i]`.
    pub relations: Vec<usize>,
}

/// Orientation of a chain query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainBinding {
    /// `A1 .. A(k+1)`, starting at the first output attribute.
    pub path: Vec<String>,
    /// `relations[i]` is the schema index joining `path[i]` and `path[i+1]`.
    pub relations: Vec<usize>,
}

pub fn star_binding(spec: &QuerySpec) -> Option<StarBinding> {
    let k = spec.schemas.len();
    if k < 2 || spec.schemas.iter().any(|e| e.len() != 2) {
        return None;
    }
    'center: for center in &spec.schemas[0] {
        if !spec.schemas.iter().all(|e| e.contains(center)) {
            continue;
        }
        let leaves: Vec<&String> =
            spec.schemas.iter().map(|e| if &e[0] == center { &e[1] } else { &e[0] }).collect();
        let distinct: BTreeSet<&String> = leaves.iter().copied().collect();
        if distinct.len() != k || distinct.contains(center) {
            continue;
        }
        let out: BTreeSet<&String> = spec.output.iter().collect();
        if out != distinct {
            continue 'center;
        }
        let relations =
            spec.output.iter().map(|a| leaves.iter().position(|l| *l == a).expect("leaf present")).collect();
        return Some(StarBinding { center: center.clone(), leaves: spec.output.clone(), relations });
    }
    None
}

pub fn chain_binding(spec: &QuerySpec) -> Option<ChainBinding> {
    let k = spec.schemas.len();
    if k < 2 || spec.schemas.iter().any(|e| e.len() != 2) || spec.attributes.len() != k + 1 {
        return None;
    }
    if spec.output.len() != 2 {
        return None;
    }
    let mut used = vec![false; k];
    let mut path = vec![spec.output[0].clone()];
    let mut relations = Vec::with_capacity(k);
    for _ in 0..k {
        let cur = path.last().expect("non-empty").clone();
        let next: Vec<usize> = (0..k).filter(|&i| !used[i] && spec.schemas[i].contains(&cur)).collect();
        if next.len() != 1 {
            return None;
        }
        let i = next[0];
        used[i] = true;
        let other = if spec.schemas[i][0] == cur { &spec.schemas[i][1] } else { &spec.schemas[i][0] };
        if path.contains(other) {
            return None;
        }
        path.push(other.clone());
        relations.push(i);
    }
    if path.last() != Some(&spec.output[1]) {
        return None;
    }
    Some(ChainBinding { path, relations })
}

/// Shape classes handled by the dedicated engines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryShape {
    Matrix,
    Star(usize),
    Chain(usize),
    AcyclicGeneral,
    Unsupported,
}

pub fn classify_query(spec: &QuerySpec) -> QueryShape {
    if let Some(b) = star_binding(spec) {
        return if b.leaves.len() == 2 { QueryShape::Matrix } else { QueryShape::Star(b.leaves.len()) };
    }
    if let Some(c) = chain_binding(spec) {
        return if c.relations.len() == 2 { QueryShape::Matrix } else { QueryShape::Chain(c.relations.len()) };
    }
    if crate::acyclic::build_join_tree(spec).is_some() {
        QueryShape::AcyclicGeneral
    } else {
        QueryShape::Unsupported
    }
}

/// Fractional edge covering number for the shapes with a closed form.
pub fn rho_star_closed_form(shape: QueryShape) -> Result<u32> {
    match shape {
        QueryShape::Matrix => Ok(2),
        QueryShape::Star(k) => Ok(k as u32),
        QueryShape::Chain(k) => Ok((k as u32 + 2) / 2),
        other => Err(Error::ShapeUnsupported(format!("{other:?}"))),
    }
}

/// Approximation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
}

impl EstimatorParams {
    pub fn new(epsilon: f64, delta: f64, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Param(format!("epsilon must lie in (0,1), got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Param(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(EstimatorParams { epsilon, delta, seed })
    }
}

/// Checks that `inst` provides exactly one duplicate-free relation per schema.
pub fn validate_instance(inst: &Instance, spec: &QuerySpec) -> std::result::Result<(), Vec<String>> {
    let mut errors = Vec::new();
    for e in &spec.schemas {
        let matches: Vec<&Relation> = inst.relations().iter().filter(|r| r.has_schema(e)).collect();
        match matches.len() {
            0 => errors.push(format!("missing relation for schema {{{}}}", e.join(","))),
            1 => {
                let dups = matches[0].duplicate_count();
                if dups > 0 {
                    errors.push(format!("duplicate row in relation {{{}}} ({dups} repeats)", e.join(",")));
                }
            }
            _ => errors.push(format!("several relations for schema {{{}}}", e.join(","))),
        }
    }
    for r in inst.relations() {
        if !spec.schemas.iter().any(|e| r.has_schema(e)) {
            errors.push(format!("relation {{{}}} matches no schema of the query", r.schema().join(",")));
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}
