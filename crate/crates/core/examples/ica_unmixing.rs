//! Recover three mixed exponential-mixture sources and report the recovery error.
//!
//! cargo run --release --example ica_unmixing -- [n] [seed]

use std::time::Instant;

use rjdcov::ica::{fit_ica, recovery_error, FitOptions};
use rjdcov::models::{gen_ica_sources, IcaSource};

fn main() -> rjdcov::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let problem = gen_ica_sources(n, 3, IcaSource::E, seed)?;
    let x = problem.observations();
    let start = Instant::now();
    let est = fit_ica(&x, &FitOptions { seed, ..FitOptions::default() })?;
    println!("sources      {}", IcaSource::E.description());
    println!("objective    {:.6e}", est.objective);
    println!("converged    {}", est.converged);
    for s in &est.restarts {
        println!("  restart {} objective {:.6e} after {} iterations", s.restart, s.objective, s.iterations);
    }
    println!("D(M_hat, M)  {:.4}", recovery_error(&est.mixing_hat, &problem.mixing)?);
    println!("elapsed      {:.2?}", start.elapsed());
    Ok(())
}
