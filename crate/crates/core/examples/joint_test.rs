//! Joint independence test on the Cauchy regression design, for a few
//! coupling strengths, plus the subset decomposition of the statistic.
//!
//! cargo run --release --example joint_test

use rjdcov::prelude::*;

fn main() -> Result<()> {
    let tester = IndependenceTester::new(TestConfig::new(0.05, 199, 11))?;
    let weights = WeightScheme::Geometric(1.0);

    for a in [0.0, 0.25, 1.0] {
        let sample = models::gen_cauchy_regression(150, a, 5)?;
        let report = tester.joint(&sample, &weights)?;
        println!(
            "a = {a:<4}  statistic {:.5}  p = {:.3}  reject {}",
            report.statistic, report.p_value, report.reject
        );
    }

    let sample = models::gen_cauchy_regression(150, 1.0, 5)?;
    let report = tester.joint(&sample, &weights)?;
    println!("\ndecomposition at a = 1 (blocks {:?})", report.block_dims);
    for s in &report.subsets {
        println!("  S = {:<8} weight {:.2}  RdCov^2 {:+.6}", s.subset.to_string(), s.weight, s.rdcov2);
    }
    Ok(())
}
