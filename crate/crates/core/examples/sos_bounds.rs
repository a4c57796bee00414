//! SOS on a three-item bounded path: capital, the hindsight deficiency and
//! its two upper bounds, and the strong-law ratios.

use gtpbet::sos::deficiency_bounds;
use gtpbet::{experiment::synthetic_outcomes, make_training, sos_run, Domain, GameConfig, TrainingScheme};

fn main() -> gtpbet::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let domain = Domain::symmetric_box(3, 1.0)?;
    let training = make_training(&domain, 0.1, TrainingScheme::Axis)?;
    let game = GameConfig::new(domain, training)?;
    let path = synthetic_outcomes(&[0.1, 0.0, -0.05], 3000, seed)?;
    let run = sos_run(&game, &path)?;

    let b = deficiency_bounds(&run);
    println!("C1 = {:.3}, C2 = {:.3}, C3 = {:.3}", b.c1, b.c2, b.c3);
    println!("{:>5} {:>10} {:>10} {:>12} {:>12}", "n", "logK", "deficit", "bound (det)", "bound (tr)");
    for i in [9, 99, 999, 2999] {
        let r = &run.ledger.records()[i];
        println!(
            "{:>5} {:>10.4} {:>10.4} {:>12.2} {:>12.2}",
            r.n, r.log_k_true, b.sum_delta_phi[i], b.det_bound[i], b.trace_bound[i]
        );
    }
    println!("bound violations: {}", b.violations());
    let s = run.summary();
    println!("|s|/sqrt(trV log trV) = {:.4}", s.slln_ratio);
    println!("s'V^-1 s / log|V|    = {:.4}", s.slln2_ratio.unwrap_or(f64::NAN));
    Ok(())
}
