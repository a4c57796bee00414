//! From a daily price table to a betting game: returns are scaled by their
//! extremes, centred with the first fraction c of the sample, and SOS is
//! played on the rest.
//!
//! Usage: cargo run --example price_table [prices.csv] [c]
//! Without arguments a synthetic two-item table is used.

use gtpbet::ingest::{transform_returns, PriceTable};
use gtpbet::sos_run;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn demo_table() -> PriceTable {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = [1000.0, 250.0];
    let rows = (0..750)
        .map(|_| {
            p[0] *= 1.0 + rng.random_range(-0.02..0.021);
            p[1] *= 1.0 + rng.random_range(-0.03..0.03);
            p.to_vec()
        })
        .collect();
    PriceTable { names: vec!["A".into(), "B".into()], rows }
}

fn main() -> gtpbet::Result<()> {
    let mut args = std::env::args().skip(1);
    let table = match args.next() {
        Some(path) => PriceTable::read_csv(path)?,
        None => demo_table(),
    };
    let c: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.17);
    let tr = transform_returns(&table.rows, c)?;
    println!("items {:?}, T = {}, F = {}", table.names, table.rows.len(), tr.transform.f);
    println!("rho = {:?}", tr.transform.rho);
    println!("training outcomes: {}", tr.training.n0());

    let run = sos_run(&tr.game()?, &tr.outcomes)?;
    let s = run.summary();
    println!("rounds {}, logK = {:.4}, hindsight {:.4}, approx {:.4}", s.n, s.log_k_true, s.log_k_hindsight, s.log_k_approx);
    println!("final alpha* = {:?}", s.alpha_star);
    Ok(())
}
