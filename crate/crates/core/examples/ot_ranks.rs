//! Optimal-transport ranks of a heavy-tailed 2-d sample on a Halton grid.
//!
//! cargo run --release --example ot_ranks -- [n]

use rand_distr::{Cauchy, Distribution};
use rjdcov::grid::halton_grid;
use rjdcov::ranks::{rank_points, solve_rank_map};
use rjdcov::rng::{substream, Stream};
use rjdcov::sample::Block;

fn main() -> rjdcov::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let mut rng = substream(3, Stream::Data, 0);
    let cauchy = Cauchy::new(0.0, 1.0).unwrap();
    let obs = Block::new(2, (0..2 * n).map(|_| cauchy.sample(&mut rng)).collect())?;

    let grid = halton_grid(n, 2)?;
    let map = solve_rank_map(&obs, &grid)?;
    let ranks = rank_points(&map, &grid)?;

    println!("{:>4}  {:>22}  {:>16}", "a", "observation", "rank");
    for a in 0..n {
        let x = obs.row(a);
        let h = ranks.row(a);
        println!("{a:>4}  ({:>9.3}, {:>9.3})  ({:.3}, {:.3})", x[0], x[1], h[0], h[1]);
    }
    println!("transport cost {:.4}", map.cost);

    // the same points in one dimension reduce to ordinary ranks
    let first = Block::from_column(obs.rows().map(|r| r[0]).collect());
    let grid1 = halton_grid(n, 1)?;
    let r1 = rank_points(&solve_rank_map(&first, &grid1)?, &grid1)?;
    let mut sorted = grid1.as_flat().to_vec();
    sorted.sort_by(f64::total_cmp);
    let ordinal: Vec<usize> = r1.as_flat().iter().map(|u| sorted.iter().position(|v| v == u).unwrap() + 1).collect();
    println!("1-d ranks (position in the sorted grid): {ordinal:?}");
    Ok(())
}
