//! Runs one of the config files in examples/configs the way `gtpbet run`
//! does and prints the summary.
//!
//! Usage: cargo run --example run_config [examples/configs/imaginary.cfg]

use gtpbet::experiment::run_experiment;

fn main() -> gtpbet::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/imaginary.cfg").to_string());
    let report = run_experiment(&path)?;
    println!("scenario {} wrote:", report.scenario);
    for f in &report.files {
        println!("  {}", f.display());
    }
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    Ok(())
}
