//! Rank distance-covariance estimators.
//!
//! Every statistic here is a double sum over pairs of observations of products
//! of per-block double-centred rank-distance matrices:
//!
//! ```text
//! E_i(a,b) = mean_v |R_a - R_v| + mean_u |R_u - R_b| - |R_a - R_b| - mean_{u,v} |R_u - R_v|
//! RdCov^2_n(X_S) = n^-2 sum_{a,b} prod_{i in S} E_i(a,b)
//! RJdCov^2_n(X; C) = sum_{s>=2} C_s sum_{|S|=s} RdCov^2_n(X_S)
//! ```
//!
//! The same double sum evaluated on permuted reference grids gives the null
//! draws used for calibration, so [`Functional`] is shared by both paths.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ReferenceGrid;
use crate::ranks::{rank_points, solve_rank_map, RankAssignment};
use crate::sample::{Block, BlockedSample};

/// Default cap on the number of blocks; the decomposition has `2^r - r - 1` terms.
pub const DEFAULT_MAX_BLOCKS: usize = 12;

/// Hard limit imposed by the bitmask subset representation.
pub const MAX_BLOCKS_LIMIT: usize = 31;

/// Double-centred Euclidean distance matrix of one block's rank points.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredDistanceMatrix {
    block_index: usize,
    n: usize,
    values: Vec<f64>,
}

impl CenteredDistanceMatrix {
    pub fn block_index(&self) -> usize {
        self.block_index
    }

    pub fn with_block_index(mut self, i: usize) -> Self {
        self.block_index = i;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }

    #[inline]
    pub fn row(&self, a: usize) -> &[f64] {
        &self.values[a * self.n..(a + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `E_pi(a,b) = E(pi(a), pi(b))`.
    pub fn permuted(&self, perm: &[usize]) -> CenteredDistanceMatrix {
        let n = self.n;
        let mut values = Vec::with_capacity(n * n);
        for &pa in perm {
            let row = self.row(pa);
            values.extend(perm.iter().map(|&pb| row[pb]));
        }
        CenteredDistanceMatrix { block_index: self.block_index, n, values }
    }

    /// Double-centres an arbitrary symmetric distance matrix (row-major).
    pub fn from_distances(n: usize, dist: &[f64]) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("centred matrix needs n >= 2, got {n}")));
        }
        if dist.len() != n * n {
            return Err(Error::SizeMismatch { expected: n * n, found: dist.len() });
        }
        let nf = n as f64;
        let row_means: Vec<f64> = dist.chunks_exact(n).map(|r| r.iter().sum::<f64>() / nf).collect();
        let grand = row_means.iter().sum::<f64>() / nf;
        let mut values = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                values[a * n + b] = row_means[a] + row_means[b] - dist[a * n + b] - grand;
            }
        }
        Ok(CenteredDistanceMatrix { block_index: 0, n, values })
    }
}

/// Pairwise Euclidean distances of the rows of `points`.
pub fn distance_matrix(points: &Block) -> Vec<f64> {
    let n = points.len();
    let mut dist = vec![0.0; n * n];
    for a in 0..n {
        let pa = points.row(a);
        for b in (a + 1)..n {
            let d = pa.iter().zip(points.row(b)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            dist[a * n + b] = d;
            dist[b * n + a] = d;
        }
    }
    dist
}

/// Builds the centred matrix of a block of rank points.
pub fn centered_matrix(rank_points: &Block) -> Result<CenteredDistanceMatrix> {
    let n = rank_points.len();
    if n < 2 {
        return Err(Error::invalid(format!("centred matrix needs n >= 2, got {n}")));
    }
    CenteredDistanceMatrix::from_distances(n, &distance_matrix(rank_points))
}

/// A set of block indices (0-based internally, printed 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subset(u32);

impl Subset {
    /// From 0-based block indices.
    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let mut mask = 0u32;
        for &i in indices {
            if i >= MAX_BLOCKS_LIMIT {
                return Err(Error::InvalidSubset(indices.to_vec(), format!("index {i} out of range")));
            }
            if mask & (1 << i) != 0 {
                return Err(Error::InvalidSubset(indices.to_vec(), "repeated index".into()));
            }
            mask |= 1 << i;
        }
        Ok(Subset(mask))
    }

    /// From 1-based block labels as written by users.
    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::InvalidSubset(indices.to_vec(), "block labels are 1-based".into()));
        }
        Self::from_indices(&indices.iter().map(|i| i - 1).collect::<Vec<_>>())
    }

    pub fn full(r: usize) -> Self {
        Subset(((1u64 << r) - 1) as u32)
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, i: usize) -> bool {
        i < 32 && self.0 & (1 << i) != 0
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&i| self.0 & (1 << i) != 0)
    }

    pub fn max_index(self) -> Option<usize> {
        self.members().last()
    }

    /// Checks `|S| >= 2` and all members `< r`.
    pub fn validate(self, r: usize) -> Result<()> {
        let idx: Vec<usize> = self.members().collect();
        if self.size() < 2 {
            return Err(Error::InvalidSubset(idx, "needs at least 2 blocks".into()));
        }
        if self.max_index().is_some_and(|m| m >= r) {
            return Err(Error::InvalidSubset(idx, format!("only {r} blocks available")));
        }
        Ok(())
    }

    fn lex_key(self) -> (usize, Vec<usize>) {
        (self.size(), self.members().collect())
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.members().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl Serialize for Subset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let one_based: Vec<usize> = self.members().map(|i| i + 1).collect();
        one_based.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Subset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        Subset::from_one_based(&v).map_err(serde::de::Error::custom)
    }
}

/// All subsets of `{0..r}` with at least two members, ordered by size then
/// lexicographically.
pub fn all_subsets(r: usize) -> Vec<Subset> {
    all_subsets_of_size(r, 2..=r)
}

/// Subsets of `{0..r}` whose size lies in `sizes`, same ordering as [`all_subsets`].
pub fn all_subsets_of_size(r: usize, sizes: std::ops::RangeInclusive<usize>) -> Vec<Subset> {
    assert!(r <= MAX_BLOCKS_LIMIT);
    let mut subsets: Vec<Subset> = (0u64..(1u64 << r))
        .map(|m| Subset(m as u32))
        .filter(|s| sizes.contains(&s.size()))
        .collect();
    subsets.sort_by_key(|s| s.lex_key());
    subsets
}

/// Non-negative weights `C_2..C_r` on subset sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", content = "value", rename_all = "snake_case")]
pub enum WeightScheme {
    /// `C_s` for `s = 2..=r`, in that order.
    Explicit(Vec<f64>),
    /// `C_s = c^(r-s)`; `c = 0` keeps only the full set.
    Geometric(f64),
}

impl Default for WeightScheme {
    fn default() -> Self {
        WeightScheme::Geometric(1.0)
    }
}

impl WeightScheme {
    /// Weight on subsets of size `s` among `r` blocks.
    pub fn weight(&self, s: usize, r: usize) -> f64 {
        match self {
            WeightScheme::Explicit(w) => w[s - 2],
            WeightScheme::Geometric(c) => {
                if s == r {
                    1.0
                } else {
                    c.powi((r - s) as i32)
                }
            }
        }
    }

    /// Weights indexed by size `0..=r` (sizes 0 and 1 carry zero).
    pub fn by_size(&self, r: usize) -> Vec<f64> {
        let mut w = vec![0.0; r + 1];
        for (s, ws) in w.iter_mut().enumerate().skip(2) {
            *ws = self.weight(s, r);
        }
        w
    }

    pub fn validate(&self, r: usize) -> Result<()> {
        match self {
            WeightScheme::Explicit(w) => {
                if w.len() != r.saturating_sub(1) {
                    return Err(Error::invalid(format!(
                        "explicit weights must cover sizes 2..={r} ({} values), got {}",
                        r.saturating_sub(1),
                        w.len()
                    )));
                }
                if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::invalid("weights must be finite and non-negative"));
                }
            }
            WeightScheme::Geometric(c) => {
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(Error::invalid(format!("geometric weight c must be >= 0, got {c}")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightScheme::Explicit(w) => {
                let parts: Vec<String> = w.iter().map(|v| format!("{v:?}")).collect();
                write!(f, "explicit:{}", parts.join(","))
            }
            WeightScheme::Geometric(c) => write!(f, "geometric:{c:?}"),
        }
    }
}

/// A linear combination of subset statistics: the quantity a test rejects on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "functional", rename_all = "snake_case")]
pub enum Functional {
    /// `sum_s C_s sum_{|S|=s} RdCov^2_n(X_S)` over all `r` blocks.
    Weighted { weights: WeightScheme },
    /// `sum_k w_k RdCov^2_n(X_{S_k})` for an explicit list.
    Subsets { terms: Vec<(Subset, f64)> },
}

impl Functional {
    pub fn joint(weights: WeightScheme) -> Self {
        Functional::Weighted { weights }
    }

    /// Sum of all pairwise statistics.
    pub fn pairwise(r: usize) -> Self {
        Functional::Subsets { terms: all_subsets_of_size(r, 2..=2).into_iter().map(|s| (s, 1.0)).collect() }
    }

    pub fn single(subset: Subset) -> Self {
        Functional::Subsets { terms: vec![(subset, 1.0)] }
    }

    pub fn validate(&self, r: usize) -> Result<()> {
        match self {
            Functional::Weighted { weights } => weights.validate(r),
            Functional::Subsets { terms } => {
                if terms.is_empty() {
                    return Err(Error::invalid("functional has no subsets"));
                }
                for (s, w) in terms {
                    s.validate(r)?;
                    if !(w.is_finite() && *w >= 0.0) {
                        return Err(Error::invalid("subset weights must be finite and non-negative"));
                    }
                }
                Ok(())
            }
        }
    }

    /// Subsets with their weights, in reporting order.
    pub fn terms(&self, r: usize) -> Vec<(Subset, f64)> {
        match self {
            Functional::Weighted { weights } => all_subsets(r).into_iter().map(|s| (s, weights.weight(s.size(), r))).collect(),
            Functional::Subsets { terms } => terms.clone(),
        }
    }

    /// Evaluates the functional on centred matrices, optionally relabelled by
    /// per-block permutations (`E_i(perm_i(a), perm_i(b))`).
    ///
    /// The summation order is fixed, so results do not depend on scheduling.
    pub fn evaluate(&self, mats: &[&CenteredDistanceMatrix], perms: Option<&[Vec<usize>]>) -> f64 {
        let r = mats.len();
        let n = mats[0].n();
        let mut buf = vec![0.0; r];
        let mut rows: Vec<&[f64]> = Vec::with_capacity(r);
        let idx = |i: usize, a: usize| -> usize { perms.map_or(a, |p| p[i][a]) };

        match self {
            Functional::Weighted { weights } => {
                let w = weights.by_size(r);
                let mut esp = vec![0.0; r + 1];
                let mut total = 0.0;
                for a in 0..n {
                    rows.clear();
                    rows.extend(mats.iter().enumerate().map(|(i, m)| m.row(idx(i, a))));
                    let mut row_sum = 0.0;
                    for b in a..n {
                        for i in 0..r {
                            buf[i] = rows[i][idx(i, b)];
                        }
                        let v = weighted_elementary(&buf, &w, &mut esp);
                        row_sum += if b == a { v } else { 2.0 * v };
                    }
                    total += row_sum;
                }
                total / (n * n) as f64
            }
            Functional::Subsets { terms } => {
                let members: Vec<Vec<usize>> = terms.iter().map(|(s, _)| s.members().collect()).collect();
                let mut total = 0.0;
                for a in 0..n {
                    rows.clear();
                    rows.extend(mats.iter().enumerate().map(|(i, m)| m.row(idx(i, a))));
                    let mut row_sum = 0.0;
                    for b in a..n {
                        for i in 0..r {
                            buf[i] = rows[i][idx(i, b)];
                        }
                        let mut v = 0.0;
                        for (mem, (_, wk)) in members.iter().zip(terms) {
                            v += wk * mem.iter().map(|&i| buf[i]).product::<f64>();
                        }
                        row_sum += if b == a { v } else { 2.0 * v };
                    }
                    total += row_sum;
                }
                total / (n * n) as f64
            }
        }
    }
}

/// `sum_s w[s] e_s(x)` where `e_s` is the elementary symmetric polynomial of degree `s`.
#[inline]
fn weighted_elementary(x: &[f64], w: &[f64], esp: &mut [f64]) -> f64 {
    esp.fill(0.0);
    esp[0] = 1.0;
    for (k, &xi) in x.iter().enumerate() {
        for s in (1..=k + 1).rev() {
            esp[s] += esp[s - 1] * xi;
        }
    }
    esp.iter().zip(w).skip(2).map(|(e, w)| e * w).sum()
}

/// One subset's statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetStatistic {
    pub subset: Subset,
    pub value: f64,
}

/// `RdCov^2_n(X_S)`; may be negative for odd `|S|`.
pub fn rdcov_subset(matrices: &[CenteredDistanceMatrix], subset: Subset) -> Result<SubsetStatistic> {
    subset.validate(matrices.len())?;
    let mats: Vec<&CenteredDistanceMatrix> = subset.members().map(|i| &matrices[i]).collect();
    let n = mats[0].n();
    if let Some(m) = mats.iter().find(|m| m.n() != n) {
        return Err(Error::SizeMismatch { expected: n, found: m.n() });
    }
    let mut total = 0.0;
    for a in 0..n {
        let rows: Vec<&[f64]> = mats.iter().map(|m| m.row(a)).collect();
        let mut row_sum = 0.0;
        for b in 0..n {
            row_sum += rows.iter().map(|r| r[b]).product::<f64>();
        }
        total += row_sum;
    }
    Ok(SubsetStatistic { subset, value: total / (n * n) as f64 })
}

/// `n^-2 sum_{a,b} prod_i (E_i(a,b) + c) - c^r`.
pub fn compact_from_matrices(matrices: &[CenteredDistanceMatrix], c: f64) -> f64 {
    let n = matrices[0].n();
    let r = matrices.len();
    let mut total = 0.0;
    for a in 0..n {
        let rows: Vec<&[f64]> = matrices.iter().map(|m| m.row(a)).collect();
        let mut row_sum = 0.0;
        for b in 0..n {
            row_sum += rows.iter().map(|row| row[b] + c).product::<f64>();
        }
        total += row_sum;
    }
    total / (n * n) as f64 - c.powi(r as i32)
}

/// One row of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionEntry {
    pub subset: Subset,
    pub size: usize,
    pub rdcov2: f64,
    pub weight: f64,
    pub contribution: f64,
}

/// Weighted total with every subset's contribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub total: f64,
    pub entries: Vec<DecompositionEntry>,
}

impl Decomposition {
    pub fn subset_statistics(&self) -> Vec<SubsetStatistic> {
        self.entries.iter().map(|e| SubsetStatistic { subset: e.subset, value: e.rdcov2 }).collect()
    }

    /// CSV with header `subset,size,rdcov2,weight,contribution`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subset", "size", "rdcov2", "weight", "contribution"])?;
        for e in &self.entries {
            w.write_record([
                e.subset.to_string(),
                e.size.to_string(),
                format!("{:?}", e.rdcov2),
                format!("{:?}", e.weight),
                format!("{:?}", e.contribution),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn is_constant(block: &Block) -> bool {
    let first = block.row(0);
    block.rows().all(|r| r == first)
}

/// A sample after rank transformation: rank maps and centred matrices for
/// every block. All statistics reuse these matrices.
#[derive(Debug, Clone)]
pub struct RankedSample {
    assignments: Vec<RankAssignment>,
    matrices: Vec<CenteredDistanceMatrix>,
    max_blocks: usize,
}

impl RankedSample {
    /// Solves the rank map of every block against its grid.
    pub fn new(sample: &BlockedSample, grids: &[ReferenceGrid]) -> Result<Self> {
        if grids.len() != sample.r() {
            return Err(Error::SizeMismatch { expected: sample.r(), found: grids.len() });
        }
        if sample.n() < 2 {
            return Err(Error::invalid("need at least 2 observations"));
        }
        let mut assignments = Vec::with_capacity(sample.r());
        let mut matrices = Vec::with_capacity(sample.r());
        for (i, (block, grid)) in sample.blocks().iter().zip(grids).enumerate() {
            let asg = solve_rank_map(block, grid)?;
            // a constant block carries no ordering: every observation shares one rank
            let m = if is_constant(block) { centered_matrix(block)? } else { centered_matrix(&rank_points(&asg, grid)?)? };
            matrices.push(m.with_block_index(i));
            assignments.push(asg);
        }
        Ok(RankedSample { assignments, matrices, max_blocks: DEFAULT_MAX_BLOCKS })
    }

    /// Wraps already-built matrices (e.g. from a 1-d CDF transform).
    pub fn from_matrices(matrices: Vec<CenteredDistanceMatrix>) -> Result<Self> {
        let n = matrices.first().map_or(0, CenteredDistanceMatrix::n);
        if let Some(m) = matrices.iter().find(|m| m.n() != n) {
            return Err(Error::SizeMismatch { expected: n, found: m.n() });
        }
        Ok(RankedSample { assignments: Vec::new(), matrices, max_blocks: DEFAULT_MAX_BLOCKS })
    }

    /// Raises or lowers the block cap (at most [`MAX_BLOCKS_LIMIT`]).
    pub fn with_max_blocks(mut self, cap: usize) -> Self {
        self.max_blocks = cap.min(MAX_BLOCKS_LIMIT);
        self
    }

    pub fn r(&self) -> usize {
        self.matrices.len()
    }

    pub fn n(&self) -> usize {
        self.matrices[0].n()
    }

    pub fn assignments(&self) -> &[RankAssignment] {
        &self.assignments
    }

    pub fn matrices(&self) -> &[CenteredDistanceMatrix] {
        &self.matrices
    }

    fn check_cap(&self) -> Result<()> {
        if self.r() > self.max_blocks {
            return Err(Error::TooManyBlocks { found: self.r(), cap: self.max_blocks });
        }
        Ok(())
    }

    pub fn subset(&self, s: Subset) -> Result<SubsetStatistic> {
        rdcov_subset(&self.matrices, s)
    }

    /// Statistic and decomposition for any functional.
    pub fn decompose(&self, functional: &Functional) -> Result<Decomposition> {
        self.check_cap()?;
        functional.validate(self.r())?;
        let mut entries = Vec::new();
        for (s, w) in functional.terms(self.r()) {
            let v = rdcov_subset(&self.matrices, s)?.value;
            entries.push(DecompositionEntry { subset: s, size: s.size(), rdcov2: v, weight: w, contribution: w * v });
        }
        let total = entries.iter().map(|e| e.contribution).sum();
        Ok(Decomposition { total, entries })
    }

    pub fn rjdcov(&self, weights: &WeightScheme) -> Result<Decomposition> {
        self.decompose(&Functional::joint(weights.clone()))
    }

    pub fn compact(&self, c: f64) -> Result<f64> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::invalid(format!("c must be >= 0, got {c}")));
        }
        Ok(compact_from_matrices(&self.matrices, c))
    }

    /// Statistic value via the fused single pass (same value as
    /// `decompose(..).total` up to rounding).
    pub fn evaluate(&self, functional: &Functional) -> Result<f64> {
        self.check_cap()?;
        functional.validate(self.r())?;
        let refs: Vec<&CenteredDistanceMatrix> = self.matrices.iter().collect();
        Ok(functional.evaluate(&refs, None))
    }
}

/// `RJdCov^2_n` with its full decomposition.
pub fn rjdcov(sample: &BlockedSample, grids: &[ReferenceGrid], weights: &WeightScheme) -> Result<Decomposition> {
    RankedSample::new(sample, grids)?.rjdcov(weights)
}

/// Product-form `RJdCov^2_n(X; c)`.
pub fn rjdcov_compact(sample: &BlockedSample, grids: &[ReferenceGrid], c: f64) -> Result<f64> {
    RankedSample::new(sample, grids)?.compact(c)
}

/// Centred matrices of the reference grids themselves.
pub fn grid_matrices(grids: &[ReferenceGrid]) -> Result<Vec<CenteredDistanceMatrix>> {
    grids
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let pts = Block::new(g.dim(), g.as_flat().to_vec())?;
            Ok(centered_matrix(&pts)?.with_block_index(i))
        })
        .collect()
}

/// The weighted statistic with rank points replaced by permuted grid points.
pub fn theta_on_grids(perms: &[Vec<usize>], grids: &[ReferenceGrid], weights: &WeightScheme) -> Result<f64> {
    if perms.len() != grids.len() {
        return Err(Error::SizeMismatch { expected: grids.len(), found: perms.len() });
    }
    for (p, g) in perms.iter().zip(grids) {
        if p.len() != g.len() {
            return Err(Error::SizeMismatch { expected: g.len(), found: p.len() });
        }
    }
    weights.validate(grids.len())?;
    let mats = grid_matrices(grids)?;
    let refs: Vec<&CenteredDistanceMatrix> = mats.iter().collect();
    Ok(Functional::joint(weights.clone()).evaluate(&refs, Some(perms)))
}
