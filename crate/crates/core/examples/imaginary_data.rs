//! SOS on the deterministic sequence x_n = 1/(n+1) with training {-1, 1}.
//! The series diverges slowly, so the capital grows like a power of n.

use gtpbet::{make_training, sos_run, Domain, GameConfig, Outcome, TrainingScheme};
use nalgebra::DVector;

fn main() -> gtpbet::Result<()> {
    let rounds: usize = std::env::args().nth(1).map_or(Ok(2000), |s| s.parse()).unwrap_or(2000);
    let domain = Domain::symmetric_box(1, 1.0)?;
    let training = make_training(&domain, 0.1, TrainingScheme::Corners)?;
    let game = GameConfig::new(domain, training)?;
    let path: Vec<Outcome> = (1..=rounds).map(|n| DVector::from_element(1, 1.0 / (n as f64 + 1.0))).collect();
    let run = sos_run(&game, &path)?;

    println!("{:>6} {:>12} {:>12} {:>12} {:>10}", "n", "logK", "hindsight", "approx", "alpha*");
    for (rec, st) in run.ledger.records().iter().zip(&run.rounds) {
        if rec.n.is_power_of_two() || rec.n == rounds {
            println!(
                "{:>6} {:>12.5} {:>12.5} {:>12.5} {:>10.5}",
                rec.n, rec.log_k_true, rec.diag.log_k_hindsight, rec.diag.log_k_approx, st.alpha_star[0]
            );
        }
    }
    Ok(())
}
