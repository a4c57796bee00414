//! Fast invariant checks run by `gtpbet selftest`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{account_grid, constant_strategy_capital, universal_portfolio, UniversalPortfolioConfig};
use crate::continuous::{embed, gen_gbm};
use crate::error::Result;
use crate::experiment::synthetic_outcomes;
use crate::game::{make_training, Domain, GameConfig, Outcome, TrainingScheme};
use crate::ingest::transform_returns;
use crate::model_select::{select_dimension, ModelSelectConfig};
use crate::optimizer::{kl_capital_identity, risk_neutral, solve_phi, PhiProblem, DEFAULT_TOL};
use crate::sos::{deficiency_bounds, sos_run};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn box_game(d: usize) -> Result<GameConfig> {
    let domain = Domain::symmetric_box(d, 1.0)?;
    let training = make_training(&domain, 0.1, TrainingScheme::Axis)?;
    GameConfig::new(domain, training)
}

pub fn run_all() -> Vec<Check> {
    vec![
        check("kl_identity", || {
            let mut worst: f64 = 0.0;
            for seed in 0..10 {
                let path = synthetic_outcomes(&[0.2, -0.1], 200, seed)?;
                let game = box_game(2)?;
                let p = PhiProblem::from_outcomes(game.training.points(), &path)?;
                let sol = solve_phi(&p, None, DEFAULT_TOL)?;
                let (_, err) = kl_capital_identity(&p, &sol, &risk_neutral(&p, &sol));
                worst = worst.max(err / sol.phi_value.abs().max(1.0));
            }
            Ok((worst < 1e-9, format!("max relative error {worst:.2e}")))
        }),
        check("risk_neutral_relation", || {
            let path = synthetic_outcomes(&[0.3, 0.0, -0.2], 1000, 1)?;
            let run = sos_run(&box_game(3)?, &path)?;
            let worst = run.rounds.iter().map(|r| r.risk_neutral_residual).fold(0.0, f64::max);
            Ok((worst <= 1e-6, format!("max |alpha* - V*^-1 s| {worst:.2e}")))
        }),
        check("deficiency_bound", || {
            let path = synthetic_outcomes(&[0.4], 2000, 2)?;
            let run = sos_run(&box_game(1)?, &path)?;
            let v = deficiency_bounds(&run).violations();
            Ok((v == 0, format!("{v} violations")))
        }),
        check("capital_accounting", || {
            let path = synthetic_outcomes(&[0.1, 0.1], 300, 3)?;
            let run = sos_run(&box_game(2)?, &path)?;
            let direct: f64 = run
                .ledger
                .records()
                .iter()
                .map(|r| (1.0 + r.alpha_used.dot(&r.x)).ln())
                .sum();
            let err = (direct - run.ledger.log_capital()).abs();
            Ok((err < 1e-9, format!("difference {err:.2e}")))
        }),
        check("universal_oracle", || {
            let path = synthetic_outcomes(&[0.05], 500, 4)?;
            let domain = Domain::symmetric_box(1, 1.0)?;
            let k = universal_portfolio(&UniversalPortfolioConfig { accounts: 20, include_training: false }, &domain, &path)?;
            let logs = account_grid(&domain, 20)?
                .iter()
                .map(|a| constant_strategy_capital(&DVector::from_element(1, *a), &path))
                .collect::<Result<Vec<_>>>()?;
            let mut sum = 0.0;
            for l in &logs {
                sum += l.exp();
            }
            let oracle = (sum / 20.0).ln();
            let last = k[k.len() - 1];
            Ok((last == oracle, format!("{last} vs {oracle}")))
        }),
        check("embedding_compounds_prices", || {
            let p = gen_gbm(&DVector::from_element(1, 0.1), &DMatrix::from_element(1, 1, 0.3), 1.0, 1e-5, 5)?;
            let e = embed(&p, 0.01)?;
            let prod: f64 = e.raw_returns.iter().map(|r| 1.0 + r[0]).product::<f64>() * (1.0 + e.residual[0]);
            let ratio = p.value(p.len() - 1)[0] / p.value(0)[0];
            let err = (prod / ratio - 1.0).abs();
            Ok((err < 1e-9, format!("relative error {err:.2e} over {} rounds", e.n())))
        }),
        check("transform_inverse", || {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let mut price = vec![100.0, 50.0];
            let prices: Vec<Vec<f64>> = (0..100)
                .map(|_| {
                    for v in price.iter_mut() {
                        *v *= 1.0 + rng.random_range(-0.03..0.03);
                    }
                    price.clone()
                })
                .collect();
            let tr = transform_returns(&prices, 0.17)?;
            let f = tr.transform.f;
            let worst = tr
                .outcomes
                .iter()
                .zip(&tr.returns[f..])
                .flat_map(|(x, r)| tr.transform.invert(x).into_iter().zip(r.clone()).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            Ok((worst < 1e-12, format!("max error {worst:.2e}")))
        }),
        check("kl_term_monotone", || {
            let path: Vec<Outcome> = synthetic_outcomes(&[0.2, 0.0, 0.1], 300, 7)?;
            let items: Vec<Vec<f64>> = (0..3).map(|j| path.iter().map(|x| x[j]).collect()).collect();
            let rep = select_dimension(&items, &[0, 1, 2], &ModelSelectConfig::default())?;
            let ok = rep.rows.windows(2).all(|w| w[1].kl_term >= w[0].kl_term - 1e-8);
            Ok((ok, format!("selected d = {}", rep.selected)))
        }),
    ]
}
