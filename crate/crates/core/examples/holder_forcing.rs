//! Limit-order embedding of a fractional Brownian price path at shrinking
//! delta: round counts, quadratic variation, the implied Hölder exponent and
//! the capital.
//!
//! Usage: cargo run --release --example holder_forcing [hurst] [seed]

use gtpbet::continuous::{gen_fbm, holder_experiment, DEFAULT_DELTA_GRID};

fn main() -> gtpbet::Result<()> {
    let mut args = std::env::args().skip(1);
    let hurst: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.7);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let path = gen_fbm(hurst, 1.0, 1.0, 2f64.powi(-20), seed)?;
    let rows = holder_experiment(&path, &DEFAULT_DELTA_GRID, 0.1)?;

    println!("H = {hurst}, {} grid points", path.len());
    println!("{:>8} {:>7} {:>9} {:>9} {:>7}", "delta", "N", "trV", "logK", "h_hat");
    for r in rows {
        let h = r.h_hat.map_or("-".to_string(), |h| format!("{h:.3}"));
        println!("{:>8} {:>7} {:>9.4} {:>9.3} {:>7}", r.delta, r.n, r.tr_v, r.log_k, h);
    }
    Ok(())
}
