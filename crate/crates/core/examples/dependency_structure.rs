//! Recover the dependency graph of five blocks: a correlated pair, a
//! pairwise-independent triple and nothing else. Prints the DOT graph.
//!
//! cargo run --release --example dependency_structure

use rjdcov::models::{gen_sign_model, SymmetricLaw};
use rjdcov::prelude::*;
use rjdcov::rng::{substream, Stream};
use rand_distr::{Distribution, StandardNormal};

fn main() -> Result<()> {
    let n = 250;
    let triple = gen_sign_model(n, 1, SymmetricLaw::StudentT(3.0), 21)?;

    let mut rng = substream(22, Stream::Data, 0);
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        u.push(a);
        v.push(0.6 * a + 0.8 * b);
    }

    let mut blocks = triple.blocks().to_vec();
    blocks.push(Block::from_column(u));
    blocks.push(Block::from_column(v));
    let labels = ["X", "Y", "Z", "U", "V"].map(String::from).to_vec();
    let sample = BlockedSample::new(blocks)?.with_labels(labels)?;

    let tester = IndependenceTester::new(TestConfig::new(0.05, 299, 3))?;
    let report = tester.dependency_structure(&sample)?;
    for t in report.pairs.iter().chain(&report.triples) {
        let names: Vec<&str> = t.blocks.iter().map(|&i| report.labels[i].as_str()).collect();
        println!("{:<8} p = {:.3}  BH {:.3}  {}", names.join(","), t.p_value, t.p_adjusted, if t.significant { "*" } else { "" });
    }
    println!();
    print!("{}", report.to_dot());
    Ok(())
}
