//! Best constant proportion in hindsight, its risk-neutral reweighting and
//! the capital/divergence identity.

use gtpbet::optimizer::{kl_capital_identity, risk_neutral, solve_phi, DEFAULT_TOL};
use gtpbet::{experiment::synthetic_outcomes, make_training, Domain, PhiProblem, TrainingScheme};

fn main() -> gtpbet::Result<()> {
    let domain = Domain::symmetric_box(2, 1.0)?;
    let training = make_training(&domain, 0.1, TrainingScheme::Axis)?;
    let data = synthetic_outcomes(&[0.15, -0.05], 500, 11)?;
    let problem = PhiProblem::from_outcomes(training.points(), &data)?;

    let sol = solve_phi(&problem, None, DEFAULT_TOL)?;
    println!("alpha*           = {:?}", sol.alpha_star.as_slice());
    println!("Phi(alpha*)      = {:.6}", sol.phi_value);
    println!("gradient norm    = {:.2e} after {} Newton steps", sol.gradient_norm, sol.iterations);

    let g = risk_neutral(&problem, &sol);
    println!("risk-neutral mass = {:.12}, mean = {:?}", g.total_weight(), g.mean().as_slice());
    let (kl, residual) = kl_capital_identity(&problem, &sol, &g);
    println!("(N + n0) D(g || g*) = {:.6}  (|difference| {residual:.1e})", problem.len() as f64 * kl);
    Ok(())
}
