//! Reference discretizations of the uniform law on `[0,1]^d`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Dimension above which plain Halton points show visible correlation
/// between coordinates.
pub const HALTON_WARN_DIM: usize = 8;

/// How the grid points were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum GridKind {
    #[default]
    Halton,
    IidUniform { seed: u64 },
}


impl std::fmt::Display for GridKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridKind::Halton => write!(f, "halton"),
            GridKind::IidUniform { seed } => write!(f, "iid-uniform:{seed}"),
        }
    }
}

/// `n` distinct points in `[0,1]^dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGrid {
    dim: usize,
    points: Vec<f64>,
    kind: GridKind,
}

impl ReferenceGrid {
    /// Builds a grid of the requested kind.
    pub fn new(kind: GridKind, n: usize, dim: usize) -> Result<Self> {
        match kind {
            GridKind::Halton => halton_grid(n, dim),
            GridKind::IidUniform { seed } => iid_uniform_grid(n, dim, seed),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn point(&self, a: usize) -> &[f64] {
        &self.points[a * self.dim..(a + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Row-major coordinates.
    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }

    /// Writes `index,x1,...,xd` rows (1-based index) with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string()];
        header.extend((1..=self.dim).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for (a, p) in self.points().enumerate() {
            let mut rec = vec![(a + 1).to_string()];
            rec.extend(p.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Radical inverse of `index` in `base`, computed with integer digits so the
/// result is the exactly rounded rational.
pub fn radical_inverse(base: u64, mut index: u64) -> f64 {
    let mut numer: u64 = 0;
    let mut denom: u64 = 1;
    while index > 0 {
        numer = numer * base + index % base;
        denom *= base;
        index /= base;
    }
    numer as f64 / denom as f64
}

/// The first `count` primes.
pub fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| !candidate.is_multiple_of(p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// First `n` Halton points in dimension `dim`, starting at index 1.
pub fn halton_grid(n: usize, dim: usize) -> Result<ReferenceGrid> {
    check_shape(n, dim)?;
    if dim > HALTON_WARN_DIM {
        log::warn!("Halton grid in dimension {dim} > {HALTON_WARN_DIM}: unscrambled coordinates may be correlated");
    }
    let bases = first_primes(dim);
    let mut points = Vec::with_capacity(n * dim);
    for a in 1..=n as u64 {
        points.extend(bases.iter().map(|&b| radical_inverse(b, a)));
    }
    Ok(ReferenceGrid { dim, points, kind: GridKind::Halton })
}

/// `n` i.i.d. uniform points, reproducible from `seed`.
pub fn iid_uniform_grid(n: usize, dim: usize, seed: u64) -> Result<ReferenceGrid> {
    check_shape(n, dim)?;
    let mut rng = substream(seed, Stream::Grid, dim as u64);
    let mut points: Vec<f64> = Vec::with_capacity(n * dim);
    let mut a = 0;
    while a < n {
        let p: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        // a repeated point has probability zero, but distinctness is an invariant
        if points.chunks_exact(dim).any(|q| q == p.as_slice()) {
            continue;
        }
        points.extend(p);
        a += 1;
    }
    Ok(ReferenceGrid { dim, points, kind: GridKind::IidUniform { seed } })
}

fn check_shape(n: usize, dim: usize) -> Result<()> {
    if n == 0 || dim == 0 {
        return Err(Error::invalid(format!("grid needs n >= 1 and dim >= 1, got n={n}, dim={dim}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_one_dimensional() {
        let g = halton_grid(4, 1).unwrap();
        assert_eq!(g.as_flat(), &[0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn halton_two_and_three_dimensional() {
        let g = halton_grid(2, 2).unwrap();
        assert_eq!(g.point(0), &[0.5, 1.0 / 3.0]);
        assert_eq!(g.point(1), &[0.25, 2.0 / 3.0]);
        let g = halton_grid(1, 3).unwrap();
        assert_eq!(g.point(0), &[0.5, 1.0 / 3.0, 0.2]);
    }

    #[test]
    fn halton_is_deterministic_and_distinct() {
        let a = halton_grid(300, 3).unwrap();
        assert_eq!(a, halton_grid(300, 3).unwrap());
        let mut pts: Vec<Vec<u64>> = a.points().map(|p| p.iter().map(|v| v.to_bits()).collect()).collect();
        pts.sort();
        pts.dedup();
        assert_eq!(pts.len(), 300);
        assert!(a.as_flat().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn halton_moments_approach_uniform() {
        for &n in &[256usize, 1024] {
            for dim in 1..=4 {
                let g = halton_grid(n, dim).unwrap();
                for k in 0..dim {
                    let xs: Vec<f64> = g.points().map(|p| p[k]).collect();
                    let mean = xs.iter().sum::<f64>() / n as f64;
                    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
                    assert!((mean - 0.5).abs() <= 5.0 / (n as f64).powf(0.9), "n={n} k={k} mean={mean}");
                    assert!((var - 1.0 / 12.0).abs() <= 0.02);
                }
            }
        }
    }

    #[test]
    fn iid_grid_reproducible() {
        assert_eq!(iid_uniform_grid(3, 2, 11).unwrap(), iid_uniform_grid(3, 2, 11).unwrap());
        assert_ne!(iid_uniform_grid(3, 2, 11).unwrap(), iid_uniform_grid(3, 2, 12).unwrap());
        let g = iid_uniform_grid(2, 1, 5).unwrap();
        assert_ne!(g.point(0), g.point(1));
        assert!(g.as_flat().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn iid_grid_mean() {
        let g = iid_uniform_grid(1000, 1, 2024).unwrap();
        let mean = g.as_flat().iter().sum::<f64>() / 1000.0;
        assert!((mean - 0.5).abs() < 0.03);
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(halton_grid(0, 2).is_err());
        assert!(halton_grid(3, 0).is_err());
    }

    #[test]
    fn csv_export() {
        let g = halton_grid(2, 2).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "index,x1,x2");
        assert!(lines[1].starts_with("1,0.5,0.333"));
    }

    #[test]
    fn primes() {
        assert_eq!(first_primes(6), vec![2, 3, 5, 7, 11, 13]);
    }
}
