//! Routes a query to the engine that serves its shape.

use crate::par::par_map;
use clap::ValueEnum;
use joinsketch::acyclic::{self, AcyclicInstance};
use joinsketch::chain::{self, ChainInstance, ChainSampler};
use joinsketch::matrix::{self, MatrixInstance, Strategy};
use joinsketch::matrix_count::approx_count_matrix;
use joinsketch::model::{classify_query, Instance, QueryShape, QuerySpec, Tuple};
use joinsketch::ops::OpCounters;
use joinsketch::rng::JoinRng;
use joinsketch::sampling::SampleVerdict;
use joinsketch::star::{self, StarInstance};
use joinsketch::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Auto,
    Matrix,
    Star,
    Chain,
    Acyclic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    /// Exact per-value weights.
    H,
    /// Degree smoothing against the largest R2 degree.
    L,
}

/// Parameters shared by every engine call.
#[derive(Clone, Copy, Debug)]
pub struct Knobs {
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub threads: usize,
}

pub enum Engine {
    Matrix(MatrixInstance, Strategy),
    Star(StarInstance),
    Chain(ChainInstance),
    Acyclic(AcyclicInstance),
}

/// Stream keys, one range per use, so commands never share randomness.
const SAMPLE_KEYS: u64 = 0;
const COUNT_KEYS: u64 = 1 << 40;
const TABLE_KEY: u64 = 1 << 41;

impl Engine {
    pub fn build(inst: &Instance, spec: &QuerySpec, shape: ShapeArg, strategy: StrategyArg) -> Result<Self> {
        let shape = match shape {
            ShapeArg::Auto => match classify_query(spec) {
                QueryShape::Matrix => ShapeArg::Matrix,
                QueryShape::Star(_) => ShapeArg::Star,
                QueryShape::Chain(_) => ShapeArg::Chain,
                QueryShape::AcyclicGeneral => ShapeArg::Acyclic,
                QueryShape::Unsupported => {
                    return Err(Error::ShapeUnsupported("the query is cyclic".into()));
                }
            },
            s => s,
        };
        Ok(match shape {
            ShapeArg::Matrix => {
                let m = MatrixInstance::new(inst, spec)?;
                let s = match strategy {
                    StrategyArg::H => Strategy::Heavy,
                    StrategyArg::L => Strategy::Light(m.default_light_config()),
                };
                Engine::Matrix(m, s)
            }
            ShapeArg::Star => Engine::Star(StarInstance::new(inst, spec)?),
            ShapeArg::Chain => Engine::Chain(ChainInstance::new(inst, spec)?),
            ShapeArg::Acyclic | ShapeArg::Auto => Engine::Acyclic(AcyclicInstance::new(inst, spec)?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Engine::Matrix(..) => "matrix",
            Engine::Star(_) => "star",
            Engine::Chain(_) => "chain",
            Engine::Acyclic(_) => "acyclic",
        }
    }

    /// `n` independent samples; `None` once the engine reports an empty result.
    pub fn sample(&self, n: usize, k: Knobs) -> (Option<Vec<Tuple>>, OpCounters) {
        let (draws, used) = match self {
            Engine::Matrix(m, s) => {
                let budget = matrix::default_budget(m, *s, k.delta);
                par_map(k.threads, n, k.seed, SAMPLE_KEYS, |_, r| matrix::sample_matrix(m, *s, budget, r))
            }
            Engine::Star(s) => {
                let budget = star::default_budget(s, k.delta);
                par_map(k.threads, n, k.seed, SAMPLE_KEYS, |_, r| star::sample_star(s, budget, r))
            }
            Engine::Chain(c) => {
                if n == 0 {
                    return (Some(Vec::new()), OpCounters::default());
                }
                let mut table_rng = joinsketch::rng::derive_stream(k.seed, TABLE_KEY);
                let (base, mut build) =
                    joinsketch::ops::measure(|| ChainSampler::new(c, k.epsilon, k.delta, &mut table_rng));
                let (draws, used) = par_map(k.threads, n, k.seed, SAMPLE_KEYS, |_, r| base.clone().sample(r).0);
                build.add(&used);
                (draws, build)
            }
            Engine::Acyclic(a) => {
                let budget = acyclic::default_budget(a, k.delta);
                par_map(k.threads, n, k.seed, SAMPLE_KEYS, |_, r| acyclic::sample_join_project(a, budget, r))
            }
        };
        let tuples: Option<Vec<Tuple>> = draws
            .into_iter()
            .map(|v| match v {
                SampleVerdict::Sample(t) => Some(t),
                SampleVerdict::Empty => None,
            })
            .collect();
        (tuples, used)
    }

    fn count_one(&self, k: Knobs, rng: &mut JoinRng) -> f64 {
        match self {
            Engine::Matrix(m, _) => approx_count_matrix(m, k.epsilon, k.delta, rng),
            Engine::Star(s) => star::approx_count_star(s, k.epsilon, k.delta, rng),
            Engine::Chain(c) => chain::approx_count_chain(c, k.epsilon, k.delta, rng).estimate,
            Engine::Acyclic(a) => acyclic::approx_count_acyclic(a, k.epsilon, k.delta, rng),
        }
    }

    /// `runs` independent estimates.
    pub fn count(&self, runs: usize, k: Knobs) -> (Vec<f64>, OpCounters) {
        par_map(k.threads, runs, k.seed, COUNT_KEYS, |_, r| self.count_one(k, r))
    }
}
