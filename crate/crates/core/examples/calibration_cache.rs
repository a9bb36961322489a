//! The null law depends only on (n, block dims, functional, B, seed). Simulate
//! it once, store it on disk, and calibrate many statistics against it.
//!
//! cargo run --release --example calibration_cache -- [cache-dir]

use std::time::Instant;

use rjdcov::prelude::*;

fn main() -> Result<()> {
    let dir = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("rjdcov-example-cache"));
    let cache = NullCache::new(&dir);
    let key = NullKey {
        n: 120,
        block_dims: vec![2, 2, 1],
        functional: Functional::joint(WeightScheme::Geometric(1.0)),
        grid: GridKind::Halton,
        resamples: 499,
        seed: 17,
    };

    let t = Instant::now();
    let null = cache.get_or_simulate(&key)?;
    println!("first lookup  {:>8.1?}  ({} draws, file {})", t.elapsed(), null.len(), cache.path_for(&key).display());
    let t = Instant::now();
    let again = cache.get_or_simulate(&key)?;
    println!("second lookup {:>8.1?}  identical: {}", t.elapsed(), again.draws() == null.draws());
    println!("5% cutoff     {:.6}", quantile_cutoff(null.draws(), 0.05)?);

    // every dataset of this shape reuses the stored draws
    let grids = key.grids()?;
    for seed in 0..4 {
        let raw = models::gen_gaussian_cov(120, 5, &models::CovKind::Ar(0.1 * seed as f64), &[2, 2, 1], seed)?;
        let stat = rjdcov_compact(&raw, &grids, 1.0)?;
        let cal = p_value(stat, &null, 0.05, key.seed)?;
        println!("AR rho = {:.1}  statistic {:.5}  p = {:.3}", 0.1 * seed as f64, stat, cal.p_value);
    }
    Ok(())
}
