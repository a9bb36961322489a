//! Rejection rate along the Konijn alternative, written as CSV. Two sweeps:
//! the fixed mixing weight delta, and the local scaling delta = h / sqrt(n).
//!
//! cargo run --release --example power_curve -- [n] [reps]

use rjdcov::jdcov::WeightScheme;
use rjdcov::models::ModelFamily;
use rjdcov::power::{power_curve, write_power_csv};
use rjdcov::testing::{IndependenceTester, TestConfig, TestKind};

fn main() -> rjdcov::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(150);
    let reps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);

    let tester = IndependenceTester::new(TestConfig::new(0.05, 199, 8))?;
    let tests = [TestKind::Joint { weights: WeightScheme::Geometric(1.0) }, TestKind::PairwiseAggregate];
    let grid = [0.0, 0.4, 0.8, 1.2, 1.6];
    let mut rows = power_curve(&tester, ModelFamily::KonijnGaussian, &grid, n, reps, &tests, 12)?;
    rows.extend(power_curve(&tester, ModelFamily::KonijnGaussianLocal, &grid, n, reps, &tests, 12)?);
    write_power_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
