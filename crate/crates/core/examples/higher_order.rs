//! Pairwise independent, jointly dependent data: the pairwise aggregate sees
//! nothing while the third-order and joint statistics reject.
//!
//! cargo run --release --example higher_order -- [n] [reps]

use rjdcov::models::{ModelFamily, SymmetricLaw};
use rjdcov::power::{sign_model_table, write_sign_table_csv};
use rjdcov::testing::{IndependenceTester, TestConfig};

fn main() -> rjdcov::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let reps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);

    let tester = IndependenceTester::new(TestConfig::new(0.05, 199, 1))?;

    let sample = ModelFamily::Sign(SymmetricLaw::Gaussian).generate(n, 1.0, 9)?;
    let single = tester.dependency_structure(&sample)?;
    println!("one sample: {} significant pairs, {} significant triples", single.edges.len(), single.hyperedges.len());

    let rows = sign_model_table(&tester, &SymmetricLaw::TABLE, n, 1, reps, 4)?;
    write_sign_table_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
