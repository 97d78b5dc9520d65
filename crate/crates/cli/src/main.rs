//! `joinsketch`: sample, count and verify join-project queries from the shell.
//!
//! Every command prints one JSON document on stdout. Exit status is 0 on
//! success, 1 on usage errors and 2 on data errors.

mod commands;
mod engine;
mod par;

use clap::{Args, Parser, Subcommand, ValueEnum};
use engine::{ShapeArg, StrategyArg};
use joinsketch::generate::Family;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "joinsketch", version, about = "Uniform sampling and approximate counting for join-project queries")]
pub struct Cli {
    /// Base seed; every random choice derives from it.
    #[arg(long, global = true, env = "JOINSKETCH_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for repeated runs; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=256))]
    pub threads: u64,
    /// Indented JSON, and a text table for `bench`.
    #[arg(long, global = true)]
    pub pretty: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Query spec file; defaults to `query.txt` inside the data directory.
    #[arg(long)]
    pub query: Option<PathBuf>,
    /// Directory holding one CSV per relation.
    #[arg(long)]
    pub data: PathBuf,
    /// Drop repeated rows instead of rejecting the input.
    #[arg(long)]
    pub dedup: bool,
}

#[derive(Args, Debug, Clone)]
pub struct EngineArgs {
    #[arg(long, value_enum, default_value_t = ShapeArg::Auto)]
    pub shape: ShapeArg,
    /// Matrix sampler strategy.
    #[arg(long, value_enum, default_value_t = StrategyArg::H)]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 0.2)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Uniformity,
    Accuracy,
    Scaling,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw uniform samples from the query result.
    Sample {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// Number of samples.
        #[arg(long, default_value_t = 1)]
        n: usize,
    },
    /// Estimate the number of results.
    Count {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Evaluate the query exactly.
    Exact {
        #[command(flatten)]
        data: DataArgs,
        /// Leave the result list out of the report.
        #[arg(long)]
        summary: bool,
    },
    /// Write a generated instance and its manifest.
    Gen {
        /// matrix-cartesian, matrix-disjointness, star-disjointness, chain-d0d1 or zipf-random
        #[arg(long)]
        family: Family,
        /// Family parameter, repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_param)]
        params: Vec<(String, u64)>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an engine against the exact evaluator.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        query: Option<PathBuf>,
        /// Dataset for the uniformity and accuracy suites.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        dedup: bool,
        #[command(flatten)]
        engine: EngineArgs,
        /// Samples for the uniformity suite; per-member samples for scaling, capped at 10000.
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        /// Counter runs for the accuracy suite.
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 0.999)]
        quantile: f64,
        /// Scaling family parameter (`n=TOTAL`, `q=OUT`), repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_param)]
        params: Vec<(String, u64)>,
    },
    /// Mean primitive calls per sample and per count across a family.
    Bench {
        /// Total tuples per instance.
        #[arg(long = "total", default_value_t = 4096)]
        total: u64,
        /// Output sizes to probe; each must be a square.
        #[arg(long, value_delimiter = ',', default_values_t = [16u64, 64, 256, 1024])]
        outs: Vec<u64>,
        /// Samples per member.
        #[arg(long, default_value_t = 500)]
        reps: usize,
        /// Counter runs per member (0 skips the counter).
        #[arg(long, default_value_t = 0)]
        count_runs: usize,
        #[arg(long, default_value_t = 0.2)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
}

fn parse_param(s: &str) -> Result<(String, u64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let v = v.trim().parse::<u64>().map_err(|e| format!("value of `{k}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(joinsketch::Error),
}

impl From<joinsketch::Error> for CliError {
    fn from(e: joinsketch::Error) -> Self {
        CliError::Data(e)
    }
}

fn emit(doc: &serde_json::Value, pretty: bool) {
    let text = if pretty { serde_json::to_string_pretty(doc) } else { serde_json::to_string(doc) };
    println!("{}", text.expect("JSON values serialize"));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let pretty = cli.pretty;
    match commands::run(cli) {
        Ok(out) => {
            match out {
                commands::Output::Json(doc) => emit(&doc, pretty),
                commands::Output::Text(text) => print!("{text}"),
            }
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            emit(&serde_json::json!({ "error": msg, "kind": "usage" }), pretty);
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            emit(&serde_json::json!({ "error": e.to_string(), "kind": "data" }), pretty);
            ExitCode::from(2)
        }
    }
}
