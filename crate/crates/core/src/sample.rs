//! Block-structured samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` observations of one vector-valued block, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    dim: usize,
    data: Vec<f64>,
}

impl Block {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("block dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "block data length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(Block { dim, data })
    }

    /// Builds a block from rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (a, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::invalid(format!("row {a} has {} columns, expected {dim}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Block::new(dim, data)
    }

    /// A one-dimensional block.
    pub fn from_column(values: Vec<f64>) -> Self {
        Block { dim: 1, data: values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.data[a * self.dim..(a + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Block {
        Block { dim: self.dim, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Rows reordered so that row `a` of the result is row `order[a]` of `self`.
    pub fn reorder(&self, order: &[usize]) -> Block {
        let mut data = Vec::with_capacity(self.data.len());
        for &a in order {
            data.extend_from_slice(self.row(a));
        }
        Block { dim: self.dim, data }
    }
}

/// `n` observations of `r >= 2` blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockedSample {
    n: usize,
    blocks: Vec<Block>,
    labels: Option<Vec<String>>,
}

impl BlockedSample {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.len() < 2 {
            return Err(Error::invalid(format!("need at least 2 blocks, got {}", blocks.len())));
        }
        let n = blocks[0].len();
        for b in &blocks {
            if b.len() != n {
                return Err(Error::SizeMismatch { expected: n, found: b.len() });
            }
        }
        Ok(BlockedSample { n, blocks, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.blocks.len() {
            return Err(Error::SizeMismatch { expected: self.blocks.len(), found: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Splits the columns of a row-major `n x total` matrix into consecutive blocks.
    pub fn from_columns(n: usize, total: usize, data: &[f64], dims: &[usize]) -> Result<Self> {
        if dims.iter().sum::<usize>() != total {
            return Err(Error::BlockSpec(format!(
                "block dimensions {dims:?} do not sum to the {total} data columns"
            )));
        }
        let ranges: Vec<(usize, usize)> = dims
            .iter()
            .scan(0, |start, &d| {
                let r = (*start, *start + d);
                *start += d;
                Some(r)
            })
            .collect();
        Self::from_column_ranges(n, total, data, &ranges)
    }

    /// Blocks from half-open column ranges `[start, end)` of a row-major matrix.
    pub fn from_column_ranges(n: usize, total: usize, data: &[f64], ranges: &[(usize, usize)]) -> Result<Self> {
        if data.len() != n * total {
            return Err(Error::SizeMismatch { expected: n * total, found: data.len() });
        }
        let blocks = ranges
            .iter()
            .map(|&(s, e)| {
                if s >= e || e > total {
                    return Err(Error::BlockSpec(format!("bad column range {s}..{e} for {total} columns")));
                }
                let mut v = Vec::with_capacity(n * (e - s));
                for a in 0..n {
                    v.extend_from_slice(&data[a * total + s..a * total + e]);
                }
                Block::new(e - s, v)
            })
            .collect::<Result<Vec<_>>>()?;
        BlockedSample::new(blocks)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Block {
        &self.blocks[i]
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(Block::dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(Block::dim).sum()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of block `i`, defaulting to `X{i+1}`.
    pub fn label(&self, i: usize) -> String {
        self.labels.as_ref().map_or_else(|| format!("X{}", i + 1), |l| l[i].clone())
    }

    /// Applies one common row permutation to every block.
    pub fn reorder(&self, order: &[usize]) -> BlockedSample {
        BlockedSample {
            n: self.n,
            blocks: self.blocks.iter().map(|b| b.reorder(order)).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Sub-sample restricted to the given blocks (in the given order).
    pub fn select(&self, which: &[usize]) -> Result<BlockedSample> {
        let blocks = which
            .iter()
            .map(|&i| self.blocks.get(i).cloned().ok_or_else(|| Error::invalid(format!("no block {i}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut s = BlockedSample::new(blocks)?;
        if let Some(l) = &self.labels {
            s.labels = Some(which.iter().map(|&i| l[i].clone()).collect());
        }
        Ok(s)
    }

    pub fn replace_block(&mut self, i: usize, block: Block) -> Result<()> {
        if block.len() != self.n {
            return Err(Error::SizeMismatch { expected: self.n, found: block.len() });
        }
        self.blocks[i] = block;
        Ok(())
    }

    /// Header names `b{i}_c{k}` (1-based) matching the column layout.
    pub fn column_names(&self) -> Vec<String> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(i, b)| (1..=b.dim()).map(move |k| format!("b{}_c{k}", i + 1)))
            .collect()
    }

    /// Row `a` of all blocks concatenated.
    pub fn joint_row(&self, a: usize) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.row(a).iter().copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_columns() {
        let data: Vec<f64> = (0..12).map(f64::from).collect();
        let s = BlockedSample::from_columns(3, 4, &data, &[1, 3]).unwrap();
        assert_eq!(s.r(), 2);
        assert_eq!(s.block(0).as_flat(), &[0.0, 4.0, 8.0]);
        assert_eq!(s.block(1).row(2), &[9.0, 10.0, 11.0]);
        assert_eq!(s.column_names(), vec!["b1_c1", "b2_c1", "b2_c2", "b2_c3"]);
        assert_eq!(s.joint_row(1), vec![4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(BlockedSample::new(vec![Block::from_column(vec![1.0])]).is_err());
        let a = Block::from_column(vec![1.0, 2.0]);
        let b = Block::from_column(vec![1.0]);
        assert!(matches!(BlockedSample::new(vec![a, b]), Err(Error::SizeMismatch { .. })));
        assert!(BlockedSample::from_columns(1, 3, &[1.0, 2.0, 3.0], &[1, 1]).is_err());
    }
}
