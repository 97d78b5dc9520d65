use crate::engine::{Engine, Knobs, ShapeArg, StrategyArg};
use crate::{Cli, CliError, Command, DataArgs, EngineArgs, Suite};
use joinsketch::generate::{generate, Family, GeneratorSpec};
use joinsketch::io::{ingest, read_query, write_dataset};
use joinsketch::model::{Instance, QuerySpec, Tuple};
use joinsketch::oracle::exact_eval;
use joinsketch::verify::uniformity_from_counts;
use serde_json::{json, Value as Json};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

pub enum Output {
    Json(Json),
    Text(String),
}

type Outcome = Result<Output, CliError>;

/// Allowed range for the sampler cost ratio between OUT = q and OUT = 4q.
const SCALING_RATIO: (f64, f64) = (1.4, 2.9);

fn load(data: &Path, query: Option<&Path>, dedup: bool) -> Result<(Instance, QuerySpec), CliError> {
    let qpath = query.map(Path::to_path_buf).unwrap_or_else(|| data.join("query.txt"));
    let spec = read_query(&qpath)?;
    let inst = ingest(data, &spec, dedup)?;
    Ok((inst, spec))
}

fn load_args(d: &DataArgs) -> Result<(Instance, QuerySpec), CliError> {
    load(&d.data, d.query.as_deref(), d.dedup)
}

fn names(inst: &Instance, t: &Tuple) -> Vec<String> {
    t.0.iter().map(|&v| inst.dictionary().name(v)).collect()
}

fn check_knobs(e: &EngineArgs) -> Result<(), CliError> {
    if !(e.epsilon > 0.0 && e.epsilon < 1.0) {
        return Err(CliError::Usage(format!("--epsilon must lie in (0,1), got {}", e.epsilon)));
    }
    if !(e.delta > 0.0 && e.delta < 1.0) {
        return Err(CliError::Usage(format!("--delta must lie in (0,1), got {}", e.delta)));
    }
    Ok(())
}

fn knobs(cli_seed: u64, threads: u64, e: &EngineArgs) -> Knobs {
    Knobs { epsilon: e.epsilon, delta: e.delta, seed: cli_seed, threads: threads as usize }
}

pub fn run(cli: Cli) -> Outcome {
    let (seed, threads, pretty) = (cli.seed, cli.threads, cli.pretty);
    match cli.command {
        Command::Sample { data, engine, n } => {
            check_knobs(&engine)?;
            let (inst, spec) = load_args(&data)?;
            let eng = Engine::build(&inst, &spec, engine.shape, engine.strategy)?;
            let (tuples, used) = eng.sample(n, knobs(seed, threads, &engine));
            let samples: Vec<Vec<String>> = tuples.iter().flatten().map(|t| names(&inst, t)).collect();
            Ok(Output::Json(json!({
                "engine": eng.name(),
                "output": spec.output,
                "empty": tuples.is_none(),
                "samples": samples,
                "runtime_ops": used.primitive_calls(),
            })))
        }
        Command::Count { data, engine } => {
            check_knobs(&engine)?;
            let (inst, spec) = load_args(&data)?;
            let eng = Engine::build(&inst, &spec, engine.shape, engine.strategy)?;
            let (est, used) = eng.count(1, knobs(seed, threads, &engine));
            Ok(Output::Json(json!({
                "engine": eng.name(),
                "estimate": est[0],
                "epsilon": engine.epsilon,
                "delta": engine.delta,
                "runtime_ops": used.primitive_calls(),
                "ops": used,
            })))
        }
        Command::Exact { data, summary } => {
            let (inst, spec) = load_args(&data)?;
            let r = exact_eval(&inst, &spec)?;
            let mut doc = json!({ "output": spec.output, "out": r.out, "out_join": r.out_join as u64 });
            if !summary {
                let results: Vec<Json> = r
                    .deg_map
                    .iter()
                    .map(|(t, d)| json!({ "tuple": names(&inst, t), "degree": d }))
                    .collect();
                doc["results"] = Json::Array(results);
            }
            if let Some(reach) = &r.per_start_reach {
                let m: BTreeMap<String, u64> = reach.iter().map(|(v, d)| (inst.dictionary().name(*v), *d)).collect();
                doc["per_start_reach"] = json!(m);
            }
            Ok(Output::Json(doc))
        }
        Command::Gen { family, params, out } => {
            let gs = GeneratorSpec { family, params: params.into_iter().collect(), seed };
            let gens = generate(&gs)?;
            let many = gens.len() > 1;
            let mut written = Vec::new();
            for g in gens {
                let dir = if many { out.join(&g.label) } else { out.clone() };
                write_dataset(&dir, &g.spec, &g.instance)?;
                let manifest = serde_json::to_string_pretty(&g.manifest).expect("manifest serializes");
                let mpath = dir.join("manifest.json");
                std::fs::write(&mpath, manifest + "\n").map_err(|e| joinsketch::Error::Io {
                    path: mpath.display().to_string(),
                    message: e.to_string(),
                })?;
                written.push(json!({ "path": dir.display().to_string(), "label": g.label, "manifest": g.manifest }));
            }
            Ok(Output::Json(json!({ "family": family.name(), "seed": seed, "datasets": written })))
        }
        Command::Verify { suite, query, data, dedup, engine, n, runs, quantile, params } => {
            check_knobs(&engine)?;
            let k = knobs(seed, threads, &engine);
            if suite == Suite::Scaling {
                return verify_scaling(&params, n.min(10_000), k).map(Output::Json);
            }
            let data = data.ok_or_else(|| CliError::Usage("--data is required for this suite".into()))?;
            let (inst, spec) = load(&data, query.as_deref(), dedup)?;
            let eng = Engine::build(&inst, &spec, engine.shape, engine.strategy)?;
            let truth = exact_eval(&inst, &spec)?;
            match suite {
                Suite::Uniformity => {
                    let (tuples, used) = eng.sample(n, k);
                    let Some(tuples) = tuples else {
                        return Ok(Output::Json(json!({
                            "suite": "uniformity", "engine": eng.name(), "out": truth.out,
                            "empty_verdict": true, "pass": truth.out == 0,
                        })));
                    };
                    let mut counts = BTreeMap::new();
                    for t in tuples {
                        *counts.entry(t).or_insert(0u64) += 1;
                    }
                    if truth.out == 0 {
                        return Ok(Output::Json(json!({
                            "suite": "uniformity", "engine": eng.name(), "out": 0, "empty_verdict": false, "pass": false,
                        })));
                    }
                    let verdict = uniformity_from_counts(&counts, &truth.result_set, quantile)?;
                    Ok(Output::Json(json!({
                        "suite": "uniformity",
                        "engine": eng.name(),
                        "out": truth.out,
                        "verdict": verdict,
                        "pass": verdict.pass,
                        "runtime_ops": used.primitive_calls(),
                    })))
                }
                Suite::Accuracy => {
                    let (estimates, used) = eng.count(runs, k);
                    let t = truth.out as f64;
                    let good = estimates.iter().filter(|&&e| (e - t).abs() <= engine.epsilon * t).count();
                    let fraction = if runs == 0 { 0.0 } else { good as f64 / runs as f64 };
                    Ok(Output::Json(json!({
                        "suite": "accuracy",
                        "engine": eng.name(),
                        "truth": truth.out,
                        "estimates": estimates,
                        "within_epsilon": fraction,
                        "pass": runs > 0 && fraction >= 1.0 - engine.delta,
                        "runtime_ops": used.primitive_calls(),
                    })))
                }
                Suite::Scaling => unreachable!("handled above"),
            }
        }
        Command::Bench { total, outs, reps, count_runs, epsilon, delta } => {
            let e = EngineArgs { shape: ShapeArg::Matrix, strategy: StrategyArg::H, epsilon, delta };
            check_knobs(&e)?;
            let rows = bench(total, &outs, reps, count_runs, knobs(seed, threads, &e))?;
            if pretty {
                Ok(Output::Text(bench_table(&rows)))
            } else {
                Ok(Output::Json(json!({ "family": Family::MatrixCartesian.name(), "rows": rows })))
            }
        }
    }
}

fn cartesian(total: u64, out: u64) -> Result<Instance, CliError> {
    let gs = GeneratorSpec::new(Family::MatrixCartesian, &[("n", total), ("out", out)], 0);
    Ok(generate(&gs)?.remove(0).instance)
}

fn mean_sample_ops(inst: &Instance, strategy: StrategyArg, reps: usize, k: Knobs) -> Result<f64, CliError> {
    let eng = Engine::build(inst, &QuerySpec::matrix(), ShapeArg::Matrix, strategy)?;
    let (_, used) = eng.sample(reps, k);
    Ok(used.primitive_calls() as f64 / reps.max(1) as f64)
}

fn verify_scaling(params: &[(String, u64)], reps: usize, k: Knobs) -> Result<Json, CliError> {
    let get = |key: &str, default: u64| params.iter().rev().find(|(k, _)| k == key).map_or(default, |p| p.1);
    let (total, q) = (get("n", 4096), get("q", 64));
    let (small, large) = (cartesian(total, q)?, cartesian(total, 4 * q)?);
    let mut checks = Vec::new();
    let mut pass = true;
    for strategy in [StrategyArg::H, StrategyArg::L] {
        let a = mean_sample_ops(&small, strategy, reps, k)?;
        let b = mean_sample_ops(&large, strategy, reps, k)?;
        let ratio = a / b;
        let ok = (SCALING_RATIO.0..=SCALING_RATIO.1).contains(&ratio);
        pass &= ok;
        let name = if strategy == StrategyArg::H { "h" } else { "l" };
        checks.push(json!({ "strategy": name, "mean_ops_q": a, "mean_ops_4q": b, "ratio": ratio, "pass": ok }));
    }
    Ok(json!({
        "suite": "scaling",
        "n": total,
        "q": q,
        "range": [SCALING_RATIO.0, SCALING_RATIO.1],
        "checks": checks,
        "pass": pass,
    }))
}

#[derive(serde::Serialize)]
struct BenchRow {
    n: u64,
    out: u64,
    sample_ops_h: f64,
    sample_ops_l: f64,
    count_ops: Option<f64>,
}

fn bench(total: u64, outs: &[u64], reps: usize, count_runs: usize, k: Knobs) -> Result<Vec<BenchRow>, CliError> {
    let mut rows = Vec::new();
    for &out in outs {
        let inst = cartesian(total, out)?;
        let count_ops = if count_runs > 0 {
            let eng = Engine::build(&inst, &QuerySpec::matrix(), ShapeArg::Matrix, StrategyArg::H)?;
            let (_, used) = eng.count(count_runs, k);
            Some(used.primitive_calls() as f64 / count_runs as f64)
        } else {
            None
        };
        rows.push(BenchRow {
            n: total,
            out,
            sample_ops_h: mean_sample_ops(&inst, StrategyArg::H, reps, k)?,
            sample_ops_l: mean_sample_ops(&inst, StrategyArg::L, reps, k)?,
            count_ops,
        });
    }
    Ok(rows)
}

fn bench_table(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>8} {:>8} {:>14} {:>14} {:>16}", "N", "OUT", "ops/sample h", "ops/sample l", "ops/count");
    for r in rows {
        let c = r.count_ops.map_or("-".to_string(), |c| format!("{c:.0}"));
        let _ = writeln!(s, "{:>8} {:>8} {:>14.1} {:>14.1} {:>16}", r.n, r.out, r.sample_ops_h, r.sample_ops_l, c);
    }
    s
}
