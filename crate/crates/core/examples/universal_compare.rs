//! SOS against a 100-account universal portfolio on one item.

use gtpbet::baselines::{universal_portfolio, UniversalPortfolioConfig};
use gtpbet::{experiment::synthetic_outcomes, make_training, sos_run, Domain, GameConfig, TrainingScheme};

fn main() -> gtpbet::Result<()> {
    let domain = Domain::symmetric_box(1, 1.0)?;
    let training = make_training(&domain, 0.1, TrainingScheme::Corners)?;
    let game = GameConfig::new(domain.clone(), training)?;
    let path = synthetic_outcomes(&[0.08], 2000, 5)?;

    let run = sos_run(&game, &path)?;
    let ku0 = universal_portfolio(&UniversalPortfolioConfig::default(), &domain, &path)?;
    let ku1 = universal_portfolio(&UniversalPortfolioConfig { include_training: true, ..Default::default() }, &domain, &path)?;

    println!("{:>5} {:>10} {:>10} {:>10}", "n", "SOS", "UP", "UP+train");
    for n in [10, 100, 500, 1000, 2000] {
        let k1 = run.ledger.records()[n - 1].log_k_true;
        println!("{n:>5} {k1:>10.4} {:>10.4} {:>10.4}", ku0[n - 1], ku1[n - 1]);
    }
    Ok(())
}
