//! Choosing how many items to trade from nested games on five items, two of
//! which carry no drift.

use gtpbet::experiment::synthetic_outcomes;
use gtpbet::model_select::{select_dimension, ModelSelectConfig};

fn main() -> gtpbet::Result<()> {
    let mu = [0.12, 0.08, 0.05, 0.0, 0.0];
    let path = synthetic_outcomes(&mu, 1500, 21)?;
    let items: Vec<Vec<f64>> = (0..mu.len()).map(|j| path.iter().map(|x| x[j]).collect()).collect();
    let report = select_dimension(&items, &[0, 1, 2, 3, 4], &ModelSelectConfig::default())?;

    println!("{:>2} {:>10} {:>9} {:>10} {:>10}", "d", "kl_term", "penalty", "criterion", "logK");
    for r in &report.rows {
        let mark = if r.d == report.selected { " <" } else { "" };
        println!("{:>2} {:>10.4} {:>9.4} {:>10.4} {:>10.4}{mark}", r.d, r.kl_term, r.penalty, r.criterion, r.log_k_true);
    }
    Ok(())
}
