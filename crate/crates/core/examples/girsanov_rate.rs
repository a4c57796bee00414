//! Betting on a simulated geometric Brownian motion through limit orders at
//! return size delta. The growth rate approaches the Kelly rate
//! mu' (sigma sigma')^-1 mu / 2 as the horizon grows.
//!
//! Usage: cargo run --release --example girsanov_rate [horizon] [seed]

use gtpbet::continuous::{girsanov_rate_experiment, GirsanovConfig};
use nalgebra::{DMatrix, DVector};

fn main() -> gtpbet::Result<()> {
    let mut args = std::env::args().skip(1);
    let horizon: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(200.0);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = GirsanovConfig {
        mu: DVector::from_element(1, 0.1),
        sigma: DMatrix::from_element(1, 1, 0.3),
        horizon,
        delta: None,
        grid_step: None,
        seed,
        epsilon0: 0.1,
    };
    let r = girsanov_rate_experiment(&cfg)?;
    println!("T = {horizon}, delta = {:.5}, grid step = {:.3e}", r.delta, r.grid_step);
    println!("rounds N     = {}", r.n);
    println!("log K        = {:.4}", r.log_k);
    println!("log K / T    = {:.5}  (Kelly rate {:.5})", r.log_k_over_t, r.target);
    println!("final alpha* = {:?}", r.alpha_star);
    Ok(())
}
