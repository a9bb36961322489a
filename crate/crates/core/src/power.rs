//! Monte-Carlo level and power studies.
//!
//! Replicate `k` draws its data with seed [`replicate_seed`]`(seed, k)`, so
//! results do not depend on thread scheduling. All replicates of one shape
//! share a single simulated null per test functional.

use std::io::Write;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jdcov::{Subset, WeightScheme};
use crate::models::{ModelFamily, SymmetricLaw};
use crate::rng::{substream, Stream};
use crate::stats::proportion_se;
use crate::testing::{IndependenceTester, TestKind};

pub const POWER_SCHEMA_VERSION: u32 = 1;

/// Data seed of replicate `k`.
pub fn replicate_seed(seed: u64, k: usize) -> u64 {
    substream(seed, Stream::Data, k as u64 + 1).next_u64()
}

/// Short label of a test kind for tables.
pub fn test_label(kind: &TestKind) -> String {
    match kind {
        TestKind::Joint { .. } => "joint".to_string(),
        TestKind::PairwiseAggregate => "pairwise".to_string(),
        TestKind::Subset { subset } => format!("subset{subset}"),
    }
}

/// p-values of several tests on each replicate; `out[t][k]` is test `t` on replicate `k`.
pub fn replicate_p_values(
    tester: &IndependenceTester,
    model: ModelFamily,
    param: f64,
    n: usize,
    replicates: usize,
    tests: &[TestKind],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if replicates == 0 {
        return Err(Error::invalid("replicates must be >= 1"));
    }
    if tests.is_empty() {
        return Err(Error::invalid("no tests requested"));
    }
    // warm the null cache once, before the parallel loop
    let probe = model.generate(n, param, replicate_seed(seed, 0))?;
    let dims = probe.block_dims();
    let per_rep = (0..replicates)
        .into_par_iter()
        .map(|k| {
            let sample = if k == 0 { probe.clone() } else { model.generate(n, param, replicate_seed(seed, k))? };
            let ranked = tester.rank(&sample)?;
            tests.iter().map(|t| tester.run_ranked(&ranked, &dims, t).map(|r| r.p_value)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..tests.len()).map(|t| per_rep.iter().map(|ps| ps[t]).collect()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub model: String,
    pub param: f64,
    pub n: usize,
    pub test: String,
    pub replicates: usize,
    pub rejections: usize,
    pub rate: f64,
    pub se: f64,
    pub wall_seconds: f64,
}

/// Rejection rate per (parameter, test) over the grid.
pub fn power_curve(
    tester: &IndependenceTester,
    model: ModelFamily,
    params: &[f64],
    n: usize,
    replicates: usize,
    tests: &[TestKind],
    seed: u64,
) -> Result<Vec<PowerRow>> {
    let alpha = tester.config().alpha;
    let mut rows = Vec::new();
    for &param in params {
        let start = Instant::now();
        let pvals = replicate_p_values(tester, model, param, n, replicates, tests, seed)?;
        let wall = start.elapsed().as_secs_f64();
        for (kind, ps) in tests.iter().zip(pvals) {
            let rejections = ps.iter().filter(|&&p| p <= alpha).count();
            let rate = rejections as f64 / replicates as f64;
            rows.push(PowerRow {
                model: model.to_string(),
                param,
                n,
                test: test_label(kind),
                replicates,
                rejections,
                rate,
                se: proportion_se(rate, replicates),
                wall_seconds: wall,
            });
        }
    }
    Ok(rows)
}

pub fn write_power_csv<W: Write>(rows: &[PowerRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["schema_version", "model", "param", "n", "test", "replicates", "rejections", "rate", "se", "wall_seconds"])?;
    for r in rows {
        w.write_record([
            POWER_SCHEMA_VERSION.to_string(),
            r.model.clone(),
            r.param.to_string(),
            r.n.to_string(),
            r.test.clone(),
            r.replicates.to_string(),
            r.rejections.to_string(),
            format!("{:.6}", r.rate),
            format!("{:.6}", r.se),
            format!("{:.3}", r.wall_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the pairwise / higher-order / joint table for the sign model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTableRow {
    pub law: String,
    pub n: usize,
    pub d: usize,
    pub replicates: usize,
    pub pairwise: f64,
    pub higher_order: f64,
    pub joint: f64,
}

/// The three sign-model tests in table order.
pub fn sign_model_tests() -> [TestKind; 3] {
    [
        TestKind::PairwiseAggregate,
        TestKind::Subset { subset: Subset::full(3) },
        TestKind::Joint { weights: WeightScheme::Geometric(1.0) },
    ]
}

pub fn sign_model_table(
    tester: &IndependenceTester,
    laws: &[SymmetricLaw],
    n: usize,
    d: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<SignTableRow>> {
    let alpha = tester.config().alpha;
    let tests = sign_model_tests();
    laws.iter()
        .map(|&law| {
            let pv = replicate_p_values(tester, ModelFamily::Sign(law), d as f64, n, replicates, &tests, seed)?;
            let rate = |ps: &[f64]| ps.iter().filter(|&&p| p <= alpha).count() as f64 / replicates as f64;
            Ok(SignTableRow {
                law: law.to_string(),
                n,
                d,
                replicates,
                pairwise: rate(&pv[0]),
                higher_order: rate(&pv[1]),
                joint: rate(&pv[2]),
            })
        })
        .collect()
}

pub fn write_sign_table_csv<W: Write>(rows: &[SignTableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["schema_version", "law", "n", "d", "replicates", "pairwise", "higher_order", "joint"])?;
    for r in rows {
        w.write_record([
            POWER_SCHEMA_VERSION.to_string(),
            r.law.clone(),
            r.n.to_string(),
            r.d.to_string(),
            r.replicates.to_string(),
            format!("{:.6}", r.pairwise),
            format!("{:.6}", r.higher_order),
            format!("{:.6}", r.joint),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// True when each rate is at least the previous one minus `k` combined standard errors.
pub fn is_monotone_within(rates: &[f64], replicates: usize, k: f64) -> bool {
    rates.windows(2).all(|w| {
        let se = (proportion_se(w[0], replicates).powi(2) + proportion_se(w[1], replicates).powi(2)).sqrt();
        w[1] >= w[0] - k * se
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::TestConfig;

    #[test]
    fn replicate_seeds_differ() {
        let s: Vec<u64> = (0..5).map(|k| replicate_seed(1, k)).collect();
        let mut d = s.clone();
        d.dedup();
        assert_eq!(s.len(), d.len());
        assert_eq!(replicate_seed(1, 3), replicate_seed(1, 3));
    }

    #[test]
    fn zero_replicates_rejected() {
        let t = IndependenceTester::new(TestConfig::new(0.05, 19, 1)).unwrap();
        let tests = [TestKind::PairwiseAggregate];
        assert!(power_curve(&t, ModelFamily::NullGaussian, &[0.0], 20, 0, &tests, 1).is_err());
    }

    #[test]
    fn small_curve_and_csv() {
        let t = IndependenceTester::new(TestConfig::new(0.05, 19, 1)).unwrap();
        let tests = [TestKind::Joint { weights: WeightScheme::Geometric(1.0) }];
        let rows = power_curve(&t, ModelFamily::Mixture, &[0.0, 1.0], 30, 10, &tests, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].rate, 1.0);
        let mut buf = Vec::new();
        write_power_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("schema_version,model,param,n,test,replicates,rejections,rate,se,wall_seconds\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn monotone_tolerance() {
        assert!(is_monotone_within(&[0.1, 0.3, 0.28, 0.9], 200, 2.0));
        assert!(!is_monotone_within(&[0.1, 0.9, 0.2], 200, 2.0));
    }
}
