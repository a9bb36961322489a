//! Independence tests built on the rank statistics.
//!
//! Each test kind is calibrated against the null law of its own functional:
//! the joint test against the weighted sum over all subsets, the pairwise
//! aggregate against the sum of pairwise terms, a subset test against that
//! single subset's term.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::cache::NullCache;
use crate::calibration::{p_value, NullDistribution, NullKey};
use crate::error::{Error, Result};
use crate::grid::{GridKind, ReferenceGrid};
use crate::jdcov::{Functional, RankedSample, Subset, WeightScheme, DEFAULT_MAX_BLOCKS};
use crate::sample::BlockedSample;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Shared settings of every test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    /// Number of null resamples `B`.
    pub resamples: usize,
    pub seed: u64,
    pub grid: GridKind,
    pub max_blocks: usize,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig { alpha: 0.05, resamples: 999, seed: 0, grid: GridKind::Halton, max_blocks: DEFAULT_MAX_BLOCKS }
    }
}

impl TestConfig {
    pub fn new(alpha: f64, resamples: usize, seed: u64) -> Self {
        TestConfig { alpha, resamples, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if self.resamples == 0 {
            return Err(Error::invalid("B must be >= 1"));
        }
        Ok(())
    }
}

/// What is being tested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TestKind {
    /// Mutual independence of all blocks.
    Joint { weights: WeightScheme },
    /// Sum of all pairwise statistics.
    PairwiseAggregate,
    /// The single statistic of one subset.
    Subset { subset: Subset },
}

impl TestKind {
    fn name(&self) -> &'static str {
        match self {
            TestKind::Joint { .. } => "joint",
            TestKind::PairwiseAggregate => "pairwise-aggregate",
            TestKind::Subset { .. } => "subset",
        }
    }
}

const SUBSET_CAVEAT: &str = "a subset statistic vanishes under independence of its blocks; \
     it characterises independence only when every proper sub-family of the subset is already independent";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetValue {
    #[serde(rename = "S")]
    pub subset: Subset,
    pub rdcov2: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema_version: u32,
    pub kind: String,
    pub test: TestKind,
    pub n: usize,
    pub block_dims: Vec<usize>,
    pub subsets: Vec<SubsetValue>,
    pub statistic: f64,
    pub p_value: f64,
    pub rank: usize,
    pub cutoff: f64,
    pub alpha: f64,
    pub reject: bool,
    #[serde(rename = "B")]
    pub resamples: usize,
    pub seed: u64,
    pub grid: GridKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl TestReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs tests, reusing simulated null distributions across calls.
///
/// Nulls are memoised in memory and, when a [`NullCache`] is attached,
/// persisted on disk.
#[derive(Debug)]
pub struct IndependenceTester {
    config: TestConfig,
    disk: Option<NullCache>,
    memo: Mutex<HashMap<String, Arc<NullDistribution>>>,
}

impl IndependenceTester {
    pub fn new(config: TestConfig) -> Result<Self> {
        config.validate()?;
        Ok(IndependenceTester { config, disk: None, memo: Mutex::new(HashMap::new()) })
    }

    pub fn with_cache(mut self, cache: NullCache) -> Self {
        self.disk = Some(cache);
        self
    }

    pub fn config(&self) -> &TestConfig {
        &self.config
    }

    pub fn grids_for(&self, n: usize, dims: &[usize]) -> Result<Vec<ReferenceGrid>> {
        dims.iter().map(|&d| ReferenceGrid::new(self.config.grid, n, d)).collect()
    }

    /// Rank-transforms a sample against this tester's grids.
    pub fn rank(&self, sample: &BlockedSample) -> Result<RankedSample> {
        if sample.r() > self.config.max_blocks {
            return Err(Error::TooManyBlocks { found: sample.r(), cap: self.config.max_blocks });
        }
        let grids = self.grids_for(sample.n(), &sample.block_dims())?;
        Ok(RankedSample::new(sample, &grids)?.with_max_blocks(self.config.max_blocks))
    }

    /// The null law of `functional` for samples of this shape.
    pub fn null_for(&self, n: usize, block_dims: &[usize], functional: &Functional) -> Result<Arc<NullDistribution>> {
        let key = NullKey {
            n,
            block_dims: block_dims.to_vec(),
            functional: functional.clone(),
            grid: self.config.grid,
            resamples: self.config.resamples,
            seed: self.config.seed,
        };
        let canon = key.canonical();
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&canon) {
            return Ok(Arc::clone(hit));
        }
        let null = match &self.disk {
            Some(cache) => cache.get_or_simulate(&key)?,
            None => NullDistribution::simulate(&key)?,
        };
        let null = Arc::new(null);
        self.memo.lock().expect("memo lock").insert(canon, Arc::clone(&null));
        Ok(null)
    }

    pub fn run(&self, sample: &BlockedSample, kind: &TestKind) -> Result<TestReport> {
        let ranked = self.rank(sample)?;
        self.run_ranked(&ranked, &sample.block_dims(), kind)
    }

    /// Runs a test on an already rank-transformed sample.
    pub fn run_ranked(&self, ranked: &RankedSample, block_dims: &[usize], kind: &TestKind) -> Result<TestReport> {
        let r = ranked.r();
        let n = ranked.n();
        if block_dims.len() != r {
            return Err(Error::SizeMismatch { expected: r, found: block_dims.len() });
        }
        let (functional, null_dims, null_functional, note) = match kind {
            TestKind::Joint { weights } => {
                let f = Functional::joint(weights.clone());
                (f.clone(), block_dims.to_vec(), f, None)
            }
            TestKind::PairwiseAggregate => {
                let f = Functional::pairwise(r);
                (f.clone(), block_dims.to_vec(), f, None)
            }
            TestKind::Subset { subset } => {
                subset.validate(r)?;
                // the null of a single subset depends only on that subset's dimensions
                let dims: Vec<usize> = subset.members().map(|i| block_dims[i]).collect();
                let f_null = Functional::single(Subset::full(dims.len()));
                (Functional::single(*subset), dims, f_null, Some(SUBSET_CAVEAT.to_string()))
            }
        };
        let decomposition = ranked.decompose(&functional)?;
        let null = self.null_for(n, &null_dims, &null_functional)?;
        let cal = p_value(decomposition.total, &null, self.config.alpha, self.config.seed)?;
        Ok(TestReport {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: kind.name().to_string(),
            test: kind.clone(),
            n,
            block_dims: block_dims.to_vec(),
            subsets: decomposition
                .entries
                .iter()
                .map(|e| SubsetValue { subset: e.subset, rdcov2: e.rdcov2, weight: e.weight })
                .collect(),
            statistic: cal.statistic,
            p_value: cal.p_value,
            rank: cal.rank,
            cutoff: cal.cutoff,
            alpha: cal.alpha,
            reject: cal.reject,
            resamples: null.len(),
            seed: self.config.seed,
            grid: self.config.grid,
            note,
        })
    }

    pub fn joint(&self, sample: &BlockedSample, weights: &WeightScheme) -> Result<TestReport> {
        self.run(sample, &TestKind::Joint { weights: weights.clone() })
    }

    pub fn pairwise_aggregate(&self, sample: &BlockedSample) -> Result<TestReport> {
        self.run(sample, &TestKind::PairwiseAggregate)
    }

    pub fn subset(&self, sample: &BlockedSample, subset: Subset) -> Result<TestReport> {
        self.run(sample, &TestKind::Subset { subset })
    }

    /// Pairwise screening followed by third-order tests on unlinked triples.
    pub fn dependency_structure(&self, sample: &BlockedSample) -> Result<StructureReport> {
        let r = sample.r();
        if r < 3 {
            return Err(Error::invalid(format!("dependency structure needs r >= 3 blocks, got {r}")));
        }
        let ranked = self.rank(sample)?;
        let dims = sample.block_dims();
        let alpha = self.config.alpha;

        let pair_sets = crate::jdcov::all_subsets_of_size(r, 2..=2);
        let pair_reports = pair_sets
            .iter()
            .map(|&s| self.run_ranked(&ranked, &dims, &TestKind::Subset { subset: s }))
            .collect::<Result<Vec<_>>>()?;
        let pair_adj = bh_adjust(&pair_reports.iter().map(|t| t.p_value).collect::<Vec<_>>())?;
        let pairs: Vec<StructureTest> = pair_sets
            .iter()
            .zip(&pair_reports)
            .zip(&pair_adj)
            .map(|((&s, t), &adj)| StructureTest {
                blocks: s.members().collect(),
                statistic: t.statistic,
                p_value: t.p_value,
                p_adjusted: adj,
                significant: adj <= alpha,
            })
            .collect();
        let linked = |i: usize, j: usize| pairs.iter().any(|p| p.significant && p.blocks == [i.min(j), i.max(j)]);

        let triple_sets: Vec<Subset> = crate::jdcov::all_subsets_of_size(r, 3..=3)
            .into_iter()
            .filter(|s| {
                let m: Vec<usize> = s.members().collect();
                !linked(m[0], m[1]) && !linked(m[0], m[2]) && !linked(m[1], m[2])
            })
            .collect();
        let triple_reports = triple_sets
            .iter()
            .map(|&s| self.run_ranked(&ranked, &dims, &TestKind::Subset { subset: s }))
            .collect::<Result<Vec<_>>>()?;
        let triple_adj = if triple_reports.is_empty() {
            Vec::new()
        } else {
            bh_adjust(&triple_reports.iter().map(|t| t.p_value).collect::<Vec<_>>())?
        };
        let triples: Vec<StructureTest> = triple_sets
            .iter()
            .zip(&triple_reports)
            .zip(&triple_adj)
            .map(|((&s, t), &adj)| StructureTest {
                blocks: s.members().collect(),
                statistic: t.statistic,
                p_value: t.p_value,
                p_adjusted: adj,
                significant: adj <= alpha,
            })
            .collect();

        Ok(StructureReport {
            schema_version: REPORT_SCHEMA_VERSION,
            labels: (0..r).map(|i| sample.label(i)).collect(),
            alpha,
            resamples: self.config.resamples,
            seed: self.config.seed,
            grid: self.config.grid,
            edges: pairs.iter().filter(|p| p.significant).map(|p| [p.blocks[0], p.blocks[1]]).collect(),
            hyperedges: triples.iter().filter(|t| t.significant).map(|t| [t.blocks[0], t.blocks[1], t.blocks[2]]).collect(),
            pairs,
            triples,
            multiplicity: "Benjamini-Hochberg at level alpha within the pairwise family and, separately, within \
                           the family of triples whose three pairs were all accepted"
                .to_string(),
        })
    }
}

pub fn test_joint(sample: &BlockedSample, weights: &WeightScheme, config: &TestConfig) -> Result<TestReport> {
    IndependenceTester::new(config.clone())?.joint(sample, weights)
}

pub fn test_pairwise_aggregate(sample: &BlockedSample, config: &TestConfig) -> Result<TestReport> {
    IndependenceTester::new(config.clone())?.pairwise_aggregate(sample)
}

pub fn test_subset(sample: &BlockedSample, subset: Subset, config: &TestConfig) -> Result<TestReport> {
    IndependenceTester::new(config.clone())?.subset(sample, subset)
}

pub fn dependency_structure(sample: &BlockedSample, config: &TestConfig) -> Result<StructureReport> {
    IndependenceTester::new(config.clone())?.dependency_structure(sample)
}

/// Benjamini-Hochberg step-up adjusted p-values, in input order.
pub fn bh_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if p_values.is_empty() {
        return Err(Error::invalid("no p-values to adjust"));
    }
    if let Some(p) = p_values.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::invalid(format!("p-value {p} outside (0,1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (k, &i) in order.iter().enumerate().rev() {
        running = running.min(p_values[i] * (m as f64 / (k + 1) as f64));
        adjusted[i] = running;
    }
    Ok(adjusted)
}

/// One test inside the dependency-structure workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureTest {
    /// 0-based block indices.
    pub blocks: Vec<usize>,
    pub statistic: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub schema_version: u32,
    pub labels: Vec<String>,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub resamples: usize,
    pub seed: u64,
    pub grid: GridKind,
    pub pairs: Vec<StructureTest>,
    pub triples: Vec<StructureTest>,
    pub edges: Vec<[usize; 2]>,
    pub hyperedges: Vec<[usize; 3]>,
    pub multiplicity: String,
}

impl StructureReport {
    /// Undirected DOT graph; triples are drawn as dashed labelled cliques.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph dependency {\n  node [shape=ellipse];\n");
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&format!("  n{i} [label=\"{}\"];\n", l.replace('"', "\\\"")));
        }
        for [a, b] in &self.edges {
            out.push_str(&format!("  n{a} -- n{b};\n"));
        }
        for (k, [a, b, c]) in self.hyperedges.iter().enumerate() {
            for (x, y) in [(a, b), (a, c), (b, c)] {
                out.push_str(&format!("  n{x} -- n{y} [style=dashed, label=\"T{}\"];\n", k + 1));
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::Block;

    #[test]
    fn bh_examples() {
        let adj = bh_adjust(&[0.01, 0.02, 0.03]).unwrap();
        for a in adj {
            assert!((a - 0.03).abs() < 1e-15);
        }
        assert_eq!(bh_adjust(&[0.2]).unwrap(), vec![0.2]);
        assert_eq!(bh_adjust(&[0.4, 0.4, 0.4]).unwrap(), vec![0.4, 0.4, 0.4]);
        assert!(bh_adjust(&[0.0]).is_err());
        assert!(bh_adjust(&[1.5]).is_err());
    }

    #[test]
    fn bh_monotone_and_capped() {
        let p = [0.9, 0.01, 0.5, 0.04, 0.03];
        let adj = bh_adjust(&p).unwrap();
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
        for w in order.windows(2) {
            assert!(adj[w[0]] <= adj[w[1]]);
        }
        assert!(adj.iter().all(|&a| a <= 1.0));
        assert!(adj.iter().zip(&p).all(|(a, q)| a >= q));
    }

    #[test]
    fn structure_needs_three_blocks() {
        let s = BlockedSample::new(vec![Block::from_column(vec![1.0, 2.0]), Block::from_column(vec![2.0, 1.0])]).unwrap();
        let err = dependency_structure(&s, &TestConfig::new(0.05, 9, 0)).unwrap_err();
        assert!(err.to_string().contains("r >= 3"));
    }

    #[test]
    fn invalid_config() {
        assert!(IndependenceTester::new(TestConfig::new(0.0, 9, 0)).is_err());
        assert!(IndependenceTester::new(TestConfig::new(0.05, 0, 0)).is_err());
    }

    #[test]
    fn dot_output() {
        let rep = StructureReport {
            schema_version: 1,
            labels: vec!["A".into(), "B".into(), "C".into()],
            alpha: 0.05,
            resamples: 9,
            seed: 0,
            grid: GridKind::Halton,
            pairs: vec![],
            triples: vec![],
            edges: vec![[0, 1]],
            hyperedges: vec![[0, 1, 2]],
            multiplicity: String::new(),
        };
        let dot = rep.to_dot();
        assert!(dot.starts_with("graph dependency {"));
        assert!(dot.contains("n0 -- n1;"));
        assert!(dot.contains("n1 -- n2 [style=dashed, label=\"T1\"];"));
    }
}
