//! Monte-Carlo check of the multi-permutation combinatorial CLT: exact
//! variance against simulation, and normality of the standardised sums.
//!
//! cargo run --release --example clt_lab -- [draws]

use rjdcov::clt::{normality_diagnostic, random_centered_tensor, DEFAULT_K2};

fn main() -> rjdcov::Result<()> {
    let draws: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    println!("{:>5} {:>3} {:>12} {:>12} {:>8} {:>8}", "order", "n", "exact var", "MC var", "rel err", "KS p");
    for order in [2usize, 3, 4] {
        let sizes: &[usize] = if order == 4 { &[10, 20] } else { &[30, 60, 100] };
        for &n in sizes {
            let t = random_centered_tensor(order, n, (order * 1000 + n) as u64)?;
            let rep = normality_diagnostic(&t, draws, 5, DEFAULT_K2)?;
            println!(
                "{order:>5} {n:>3} {:>12.5} {:>12.5} {:>8.4} {:>8.3}",
                rep.analytic_var, rep.empirical_var, rep.relative_var_error, rep.ks_pvalue
            );
        }
    }
    Ok(())
}
