//! Data-agnostic resampling calibration.
//!
//! Under joint independence the rank-transformed sample is a set of
//! independent uniform relabellings of the reference grids, so the null law of
//! any [`Functional`] can be simulated once per `(n, block dims, functional,
//! grid kind)` without looking at data. Each draw applies fresh uniform
//! permutations to the precomputed grid matrices.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridKind, ReferenceGrid};
use crate::jdcov::{grid_matrices, CenteredDistanceMatrix, Functional};
use crate::rng::{random_permutation, substream, Stream};

/// Everything that determines a null distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullKey {
    pub n: usize,
    pub block_dims: Vec<usize>,
    pub functional: Functional,
    pub grid: GridKind,
    pub resamples: usize,
    pub seed: u64,
}

impl NullKey {
    /// Canonical string form, used for hashing and equality of cache entries.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("null key serialises")
    }

    pub fn grids(&self) -> Result<Vec<ReferenceGrid>> {
        self.block_dims.iter().map(|&d| ReferenceGrid::new(self.grid, self.n, d)).collect()
    }
}

/// Simulated null draws for one key.
#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution {
    key: NullKey,
    draws: Vec<f64>,
}

impl NullDistribution {
    pub fn from_parts(key: NullKey, draws: Vec<f64>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::invalid("null distribution needs at least one draw"));
        }
        Ok(NullDistribution { key, draws })
    }

    pub fn key(&self) -> &NullKey {
        &self.key
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Simulates the distribution described by `key`.
    pub fn simulate(key: &NullKey) -> Result<Self> {
        let grids = key.grids()?;
        simulate_null(&grids, &key.functional, key.resamples, key.seed)
    }

    /// Critical value `c_{n,B,alpha}`.
    pub fn cutoff(&self, alpha: f64) -> Result<f64> {
        quantile_cutoff(&self.draws, alpha)
    }
}

/// `B` null draws of `functional` on independently permuted grids.
///
/// Draw `b` uses permutation substream `b`, so the result does not depend on
/// how draws are scheduled across threads.
pub fn simulate_null(
    grids: &[ReferenceGrid],
    functional: &Functional,
    resamples: usize,
    seed: u64,
) -> Result<NullDistribution> {
    if resamples == 0 {
        return Err(Error::invalid("number of resamples B must be >= 1"));
    }
    if grids.len() < 2 {
        return Err(Error::invalid("need at least 2 grids"));
    }
    let n = grids[0].len();
    if let Some(g) = grids.iter().find(|g| g.len() != n) {
        return Err(Error::SizeMismatch { expected: n, found: g.len() });
    }
    functional.validate(grids.len())?;
    let mats = grid_matrices(grids)?;
    let refs: Vec<&CenteredDistanceMatrix> = mats.iter().collect();
    let r = grids.len();

    let draws: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, Stream::Permutations, b);
            let perms: Vec<Vec<usize>> = (0..r).map(|_| random_permutation(n, &mut rng)).collect();
            functional.evaluate(&refs, Some(&perms))
        })
        .collect();

    let key = NullKey {
        n,
        block_dims: grids.iter().map(ReferenceGrid::dim).collect(),
        functional: functional.clone(),
        grid: grids[0].kind(),
        resamples,
        seed,
    };
    NullDistribution::from_parts(key, draws)
}

/// Every value of the functional over all `(n!)^r` permutation tuples, for
/// tiny `n`. Intended for checking the sampler against exact enumeration.
pub fn enumerate_null(grids: &[ReferenceGrid], functional: &Functional) -> Result<Vec<f64>> {
    let n = grids[0].len();
    let r = grids.len();
    let count = (1..=n).product::<usize>().checked_pow(r as u32);
    if n > 6 || count.is_none_or(|c| c > 2_000_000) {
        return Err(Error::invalid("exhaustive enumeration is limited to tiny n and r"));
    }
    functional.validate(r)?;
    let mats = grid_matrices(grids)?;
    let refs: Vec<&CenteredDistanceMatrix> = mats.iter().collect();
    let all = all_permutations(n);
    let mut out = Vec::with_capacity(all.len().pow(r as u32));
    let mut idx = vec![0usize; r];
    loop {
        let perms: Vec<Vec<usize>> = idx.iter().map(|&k| all[k].clone()).collect();
        out.push(functional.evaluate(&refs, Some(&perms)));
        let mut pos = r;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < all.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).unwrap();
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

/// Outcome of calibrating one statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Rank of the statistic among the draws, 1 = largest.
    pub rank: usize,
    pub cutoff: f64,
    pub alpha: f64,
    pub reject: bool,
}

/// Two values are tied when they agree to this relative tolerance; the
/// statistic and a draw computed in different summation orders may differ in
/// the last bits even when they are the same permutation tuple.
const TIE_RTOL: f64 = 1e-12;

fn tied(x: f64, y: f64) -> bool {
    let scale = x.abs().max(y.abs());
    (x - y).abs() <= TIE_RTOL * scale || x == y
}

/// Resampling p-value `R / (B + 1)` with random tie-breaking.
///
/// One fair coin per tied draw is taken, in draw order, from the tie-break
/// substream of `seed`.
pub fn p_value(statistic: f64, null: &NullDistribution, alpha: f64, seed: u64) -> Result<CalibrationResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let mut rng = substream(seed, Stream::TieBreak, 0);
    let mut rank = 1usize;
    for &d in null.draws() {
        if tied(d, statistic) {
            if rng.random::<bool>() {
                rank += 1;
            }
        } else if d > statistic {
            rank += 1;
        }
    }
    let b = null.len();
    let p = rank as f64 / (b + 1) as f64;
    Ok(CalibrationResult {
        statistic,
        p_value: p,
        rank,
        cutoff: null.cutoff(alpha)?,
        alpha,
        reject: p <= alpha,
    })
}

/// `min { T_s : (1/B) #{b : T_b > T_s} <= alpha }`.
pub fn quantile_cutoff(draws: &[f64], alpha: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::invalid("empty null distribution"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len() as f64;
    for &v in &sorted {
        let above = sorted.len() - sorted.partition_point(|&x| x <= v);
        if above as f64 / b <= alpha {
            return Ok(v);
        }
    }
    unreachable!("the largest draw has no draws above it")
}
