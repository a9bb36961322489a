//! Empirical optimal-transport ranks.
//!
//! The rank of observation `a` is the grid point `h[perm[a]]`, where `perm`
//! minimises `sum_a |X_a - h[perm[a]]|^2` over all bijections. Duplicated
//! observations are accepted, but the distribution-free property of the
//! resulting statistics no longer holds for such data.

use crate::assignment::solve_dense;
use crate::error::{Error, Result};
use crate::grid::ReferenceGrid;
use crate::sample::Block;

/// Optimal assignment of observations to grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct RankAssignment {
    /// `perm[a]` is the grid index matched to observation `a`.
    pub perm: Vec<usize>,
    /// Total squared Euclidean transport cost.
    pub cost: f64,
}

impl RankAssignment {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Total squared distance of the matching `perm`.
pub fn transport_cost(observations: &Block, grid: &ReferenceGrid, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(a, &g)| squared_distance(observations.row(a), grid.point(g))).sum()
}

/// Solves the empirical rank map exactly.
///
/// One-dimensional inputs are matched monotonically after sorting; higher
/// dimensions use the dense assignment solver.
pub fn solve_rank_map(observations: &Block, grid: &ReferenceGrid) -> Result<RankAssignment> {
    if observations.dim() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), found: observations.dim() });
    }
    if observations.len() != grid.len() {
        return Err(Error::SizeMismatch { expected: grid.len(), found: observations.len() });
    }
    let perm = if observations.dim() == 1 {
        monotone_matching(observations.as_flat(), grid.as_flat())
    } else {
        solve_general(observations, grid)
    };
    let cost = transport_cost(observations, grid, &perm);
    Ok(RankAssignment { perm, cost })
}

/// General-dimension path; exposed for cross-checking the 1-d shortcut.
pub fn solve_general(observations: &Block, grid: &ReferenceGrid) -> Vec<usize> {
    let n = observations.len();
    let mut costs = Vec::with_capacity(n * n);
    for x in observations.rows() {
        costs.extend(grid.points().map(|h| squared_distance(x, h)));
    }
    solve_dense(&costs, n)
}

fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

fn monotone_matching(obs: &[f64], grid: &[f64]) -> Vec<usize> {
    let obs_order = argsort(obs);
    let grid_order = argsort(grid);
    let mut perm = vec![0usize; obs.len()];
    for (o, g) in obs_order.into_iter().zip(grid_order) {
        perm[o] = g;
    }
    perm
}

/// The rank-transformed sample `(h[perm[a]])_a` in observation order.
pub fn rank_points(assignment: &RankAssignment, grid: &ReferenceGrid) -> Result<Block> {
    if assignment.len() != grid.len() {
        return Err(Error::SizeMismatch { expected: grid.len(), found: assignment.len() });
    }
    let mut data = Vec::with_capacity(grid.as_flat().len());
    for &g in &assignment.perm {
        data.extend_from_slice(grid.point(g));
    }
    Block::new(grid.dim(), data)
}
