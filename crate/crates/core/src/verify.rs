//! Statistical checks that turn the probabilistic guarantees into tests.

use crate::error::{Error, Result};
use crate::model::Tuple;
use crate::ops;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::{BTreeMap, BTreeSet};

/// Upper `q`-quantile of χ²(dof) by the Wilson–Hilferty cube approximation.
///
/// Relative error is below 2% for dof ≥ 3 and below 0.5% for dof ≥ 30 at
/// q ≤ 0.999; dof 1 and 2 use the exact closed forms.
pub fn chi_square_quantile(dof: usize, q: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    match dof {
        0 => 0.0,
        1 => {
            let z = normal.inverse_cdf((1.0 + q) / 2.0);
            z * z
        }
        2 => -2.0 * (1.0 - q).ln(),
        _ => {
            let k = dof as f64;
            let z = normal.inverse_cdf(q);
            let c = 2.0 / (9.0 * k);
            k * (1.0 - c + z * c.sqrt()).powi(3)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformityVerdict {
    pub chi_square: f64,
    pub dof: usize,
    pub quantile: f64,
    /// χ² value the statistic must stay below.
    pub threshold_quantile: f64,
    pub pass: bool,
    /// Largest `|frequency − 1/OUT|` over results.
    pub max_abs_dev: f64,
    pub samples: u64,
}

/// Pearson χ² of `counts` against the uniform distribution on `results`.
/// Any counted tuple outside `results` is an error.
pub fn uniformity_from_counts(
    counts: &BTreeMap<Tuple, u64>,
    results: &BTreeSet<Tuple>,
    quantile: f64,
) -> Result<UniformityVerdict> {
    if let Some(t) = counts.keys().find(|t| !results.contains(*t)) {
        return Err(Error::OutOfSet(format!("{:?}", t.0)));
    }
    let n: u64 = counts.values().sum();
    let k = results.len();
    if k == 0 {
        return Err(Error::Precondition("empty result set".into()));
    }
    let expected = n as f64 / k as f64;
    let mut chi = 0.0;
    let mut dev: f64 = 0.0;
    for t in results {
        let c = counts.get(t).copied().unwrap_or(0) as f64;
        if expected > 0.0 {
            chi += (c - expected).powi(2) / expected;
        }
        if n > 0 {
            dev = dev.max((c / n as f64 - 1.0 / k as f64).abs());
        }
    }
    let dof = k - 1;
    let threshold = chi_square_quantile(dof, quantile);
    Ok(UniformityVerdict {
        chi_square: chi,
        dof,
        quantile,
        threshold_quantile: threshold,
        pass: dof == 0 || chi < threshold,
        max_abs_dev: dev,
        samples: n,
    })
}

/// Draws `n` samples and tests them for uniformity over `results`.
pub fn uniformity_test(
    results: &BTreeSet<Tuple>,
    n: u64,
    quantile: f64,
    mut sampler: impl FnMut() -> Option<Tuple>,
) -> Result<UniformityVerdict> {
    let mut counts: BTreeMap<Tuple, u64> = BTreeMap::new();
    for _ in 0..n {
        let t = sampler().ok_or_else(|| Error::Precondition("sampler returned the empty verdict".into()))?;
        if !results.contains(&t) {
            return Err(Error::OutOfSet(format!("{:?}", t.0)));
        }
        *counts.entry(t).or_insert(0) += 1;
    }
    uniformity_from_counts(&counts, results, quantile)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoSampleVerdict {
    pub statistic: f64,
    pub dof: usize,
    pub threshold: f64,
    pub pass: bool,
}

/// χ² homogeneity test between two samples over the same categories.
pub fn two_sample_chi_square(a: &BTreeMap<Tuple, u64>, b: &BTreeMap<Tuple, u64>, quantile: f64) -> TwoSampleVerdict {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let keys: BTreeSet<&Tuple> = a.keys().chain(b.keys()).collect();
    let (ra, rb) = if na == 0 || nb == 0 { (1.0, 1.0) } else { ((nb as f64 / na as f64).sqrt(), (na as f64 / nb as f64).sqrt()) };
    let mut stat = 0.0;
    for k in &keys {
        let x = a.get(*k).copied().unwrap_or(0) as f64;
        let y = b.get(*k).copied().unwrap_or(0) as f64;
        if x + y > 0.0 {
            stat += (ra * x - rb * y).powi(2) / (x + y);
        }
    }
    let dof = keys.len().saturating_sub(1);
    let threshold = chi_square_quantile(dof, quantile);
    TwoSampleVerdict { statistic: stat, dof, threshold, pass: dof == 0 || stat < threshold }
}

/// Fraction of `runs` estimates within relative error `eps` of `truth`.
pub fn accuracy_trials(mut counter: impl FnMut() -> f64, truth: f64, eps: f64, runs: usize) -> f64 {
    if runs == 0 {
        return 0.0;
    }
    let ok = (0..runs).filter(|_| (counter() - truth).abs() <= eps * truth).count();
    ok as f64 / runs as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub out: u64,
    pub mean_ops: f64,
}

/// Mean primitive calls of `run` over `reps` repetitions per family member.
pub fn scaling_probe<T>(family: &[(usize, u64, T)], reps: usize, mut run: impl FnMut(&T)) -> Vec<ScalingRow> {
    family
        .iter()
        .map(|(n, out, member)| {
            let (_, used) = ops::measure(|| {
                for _ in 0..reps {
                    run(member);
                }
            });
            ScalingRow { n: *n, out: *out, mean_ops: used.primitive_calls() as f64 / reps.max(1) as f64 }
        })
        .collect()
}

/// Normal-approximation interval for a proportion.
pub fn wald_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let p = successes as f64 / trials as f64;
    let half = z * (p * (1.0 - p) / trials as f64).sqrt();
    ((p - half).max(0.0), (p + half).min(1.0))
}
