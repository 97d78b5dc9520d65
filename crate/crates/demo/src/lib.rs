//! Browser bindings: paste a query and its relations, then list, sample or
//! count the projected results. Every entry point returns a JSON string; on
//! failure the object carries a single `error` field.

use joinsketch::acyclic::{self, AcyclicInstance};
use joinsketch::chain::{self, ChainInstance, ChainSampler};
use joinsketch::io::{ingest_text, parse_query};
use joinsketch::matrix::{self, MatrixInstance, Strategy};
use joinsketch::matrix_count::approx_count_matrix;
use joinsketch::model::{classify_query, Instance, QueryShape, QuerySpec, Tuple};
use joinsketch::oracle::exact_eval;
use joinsketch::rng::{derive_stream, JoinRng};
use joinsketch::sampling::SampleVerdict;
use joinsketch::star::{self, StarInstance};
use joinsketch::{Error, Result};
use serde_json::{json, Value as Json};
use std::collections::BTreeMap;
use wasm_bindgen::prelude::*;

/// Hard cap so a typo in the sample box cannot hang the tab.
const MAX_SAMPLES: u32 = 100_000;

enum Engine {
    Matrix(MatrixInstance),
    Star(StarInstance),
    Chain(ChainInstance),
    Acyclic(AcyclicInstance),
}

impl Engine {
    fn build(inst: &Instance, spec: &QuerySpec) -> Result<Self> {
        Ok(match classify_query(spec) {
            QueryShape::Matrix => Engine::Matrix(MatrixInstance::new(inst, spec)?),
            QueryShape::Star(_) => Engine::Star(StarInstance::new(inst, spec)?),
            QueryShape::Chain(_) => Engine::Chain(ChainInstance::new(inst, spec)?),
            QueryShape::AcyclicGeneral => Engine::Acyclic(AcyclicInstance::new(inst, spec)?),
            QueryShape::Unsupported => return Err(Error::ShapeUnsupported("the query is cyclic".into())),
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Engine::Matrix(_) => "matrix",
            Engine::Star(_) => "star",
            Engine::Chain(_) => "chain",
            Engine::Acyclic(_) => "acyclic",
        }
    }
}

fn load(query: &str, relations: &str) -> Result<(Instance, QuerySpec)> {
    let spec = parse_query(query, "query")?;
    let blocks = split_blocks(relations);
    let refs: Vec<&str> = blocks.iter().map(String::as_str).collect();
    let inst = ingest_text(&spec, &refs, true)?;
    Ok((inst, spec))
}

/// Blank lines separate relations.
fn split_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut cur = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                blocks.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push_str(line);
            cur.push('\n');
        }
    }
    if !cur.is_empty() {
        blocks.push(cur);
    }
    blocks
}

fn names(inst: &Instance, t: &Tuple) -> Vec<String> {
    t.0.iter().map(|&v| inst.dictionary().name(v)).collect()
}

fn respond(r: Result<Json>) -> String {
    r.unwrap_or_else(|e| json!({ "error": e.to_string() })).to_string()
}

fn exact_doc(query: &str, relations: &str) -> Result<Json> {
    let (inst, spec) = load(query, relations)?;
    let r = exact_eval(&inst, &spec)?;
    let results: Vec<Json> =
        r.deg_map.iter().map(|(t, d)| json!({ "tuple": names(&inst, t), "degree": d })).collect();
    Ok(json!({
        "output": spec.output,
        "out": r.out,
        "out_join": r.out_join as u64,
        "results": results,
    }))
}

fn sample_doc(query: &str, relations: &str, n: u32, seed: u64) -> Result<Json> {
    if n > MAX_SAMPLES {
        return Err(Error::Param(format!("at most {MAX_SAMPLES} samples")));
    }
    let (inst, spec) = load(query, relations)?;
    let engine = Engine::build(&inst, &spec)?;
    let delta = 0.1;
    let mut chain_sampler = match &engine {
        Engine::Chain(c) => Some(ChainSampler::new(c, 0.2, delta, &mut derive_stream(seed, u64::MAX))),
        _ => None,
    };
    let mut hist: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for i in 0..n as u64 {
        let mut rng = derive_stream(seed, i);
        let verdict = match &engine {
            Engine::Matrix(m) => {
                matrix::sample_matrix(m, Strategy::Heavy, matrix::default_budget(m, Strategy::Heavy, delta), &mut rng)
            }
            Engine::Star(s) => star::sample_star(s, star::default_budget(s, delta), &mut rng),
            Engine::Chain(_) => chain_sampler.as_mut().expect("built above").sample(&mut rng).0,
            Engine::Acyclic(a) => acyclic::sample_join_project(a, acyclic::default_budget(a, delta), &mut rng),
        };
        match verdict {
            SampleVerdict::Sample(t) => *hist.entry(names(&inst, &t)).or_default() += 1,
            SampleVerdict::Empty => return Ok(json!({ "engine": engine.name(), "empty": true, "counts": [] })),
        }
    }
    let counts: Vec<Json> = hist.into_iter().map(|(t, c)| json!({ "tuple": t, "count": c })).collect();
    Ok(json!({ "engine": engine.name(), "empty": false, "samples": n, "counts": counts }))
}

fn count_doc(query: &str, relations: &str, epsilon: f64, delta: f64, seed: u64) -> Result<Json> {
    if !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Param("epsilon and delta must lie in (0, 1)".into()));
    }
    let (inst, spec) = load(query, relations)?;
    let engine = Engine::build(&inst, &spec)?;
    let mut rng: JoinRng = derive_stream(seed, 0);
    let estimate = match &engine {
        Engine::Matrix(m) => approx_count_matrix(m, epsilon, delta, &mut rng),
        Engine::Star(s) => star::approx_count_star(s, epsilon, delta, &mut rng),
        Engine::Chain(c) => chain::approx_count_chain(c, epsilon, delta, &mut rng).estimate,
        Engine::Acyclic(a) => acyclic::approx_count_acyclic(a, epsilon, delta, &mut rng),
    };
    Ok(json!({ "engine": engine.name(), "estimate": estimate, "epsilon": epsilon, "delta": delta }))
}

/// Every projected result with the number of join tuples behind it.
#[wasm_bindgen]
pub fn exact(query: &str, relations: &str) -> String {
    respond(exact_doc(query, relations))
}

/// Draws `n` independent uniform samples and returns how often each result came up.
#[wasm_bindgen]
pub fn sample(query: &str, relations: &str, n: u32, seed: u64) -> String {
    respond(sample_doc(query, relations, n, seed))
}

/// One approximate count of the projected results.
#[wasm_bindgen]
pub fn count(query: &str, relations: &str, epsilon: f64, delta: f64, seed: u64) -> String {
    respond(count_doc(query, relations, epsilon, delta, seed))
}
