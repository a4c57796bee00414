//! The sequential optimizing strategy: at round `n` bet the hindsight optimum
//! `alpha*_{n-1}` of all earlier outcomes (training included).
//!
//! Besides the capital itself the run tracks the running sums `s_{0,n}`,
//! `V_{0,n}` and `log|V_{0,n}|`, the deficiency increments
//! `dPhi_n = Phi_n(alpha*_n) - Phi_n(alpha*_{n-1})`, and the accumulated
//! information criterion `log[I_n]`, from which every ledger diagnostic is
//! derived.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{CapitalLedger, Diagnostics, GameConfig, Outcome};
use crate::optimizer::{solve_phi, PhiProblem, PhiSolution, DEFAULT_TOL};

#[derive(Debug, Clone, Copy)]
pub struct SosOptions {
    pub tol: f64,
    /// `V_{0,n}^{-1}` and `log|V_{0,n}|` are rebuilt from the running sum
    /// every this many rounds.
    pub recompute_every: usize,
    /// Evaluate the one-step upper bound on `dPhi_n` (one extra pass over the
    /// distinct outcomes per round).
    pub check_bounds: bool,
}

impl Default for SosOptions {
    fn default() -> Self {
        SosOptions {
            tol: DEFAULT_TOL,
            recompute_every: 64,
            check_bounds: true,
        }
    }
}

/// Running statistics after round `n`.
#[derive(Debug, Clone)]
pub struct BettingState {
    pub round: usize,
    /// `alpha*_n`, the bet for round `n + 1`.
    pub alpha_prev_star: DVector<f64>,
    /// `s_{0,n}`, training included.
    pub s0: DVector<f64>,
    /// `V_{0,n}`, training included.
    pub v0: DMatrix<f64>,
    v0_inv: DMatrix<f64>,
    pub logdet_v0: f64,
    /// `log[I_n]`.
    pub logdet_i_running: f64,
    pub delta_phi_sum: f64,
    /// `Phi_{0,n}(alpha*_n)`.
    pub hindsight: f64,
}

/// Per-round quantities kept for diagnostics and bound checks.
#[derive(Debug, Clone)]
pub struct RoundState {
    pub n: usize,
    pub alpha_star: DVector<f64>,
    pub delta_phi: f64,
    /// `log(1 + x_n(alpha*_n)ᵗ V_{0,n-1}(alpha*_{n-1}, alpha*_n)^{-1} x_n(alpha*_{n-1}))`.
    pub delta_phi_upper: Option<f64>,
    /// `1 + x_nᵗ V_{0,n-1}^{-1} x_n`.
    pub det_ratio: f64,
    pub logdet_v0: f64,
    /// `tr V_n` without training.
    pub tr_v: f64,
    /// `|alpha*_n - alpha*_{n-1}|`.
    pub alpha_step: f64,
    /// `|alpha*_n - V*_{0,n}^{-1} s_{0,n}|`.
    pub risk_neutral_residual: f64,
    /// Relative drift of the tracked `log|V_{0,n}|` from a fresh
    /// factorization, at rebuild rounds.
    pub logdet_drift: Option<f64>,
    /// `A_n = sum over training of 1 / (1 + alpha*_n.x)`.
    pub training_denominator: f64,
}

/// Quantities fixed by the training data alone.
#[derive(Debug, Clone)]
pub struct TrainingSummary {
    pub alpha0: DVector<f64>,
    /// `Phi_{0,0}(alpha*_0)`.
    pub phi00: f64,
    pub logdet_v00: f64,
    pub tr_v00: f64,
}

#[derive(Debug, Clone)]
pub struct SosRun {
    pub config: GameConfig,
    pub ledger: CapitalLedger,
    pub rounds: Vec<RoundState>,
    pub initial: TrainingSummary,
    pub state: BettingState,
    pub final_solution: PhiSolution,
    pub problem: PhiProblem,
}

#[derive(Debug, Clone, Serialize)]
pub struct SosSummary {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "logK_true")]
    pub log_k_true: f64,
    #[serde(rename = "logK_hindsight")]
    pub log_k_hindsight: f64,
    #[serde(rename = "logK_approx")]
    pub log_k_approx: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "C3")]
    pub c3: f64,
    pub slln_ratio: f64,
    pub slln2_ratio: Option<f64>,
    pub alpha_star: Vec<f64>,
}

fn logdet_spd(m: &DMatrix<f64>, what: &'static str) -> Result<(f64, DMatrix<f64>)> {
    let chol = m.clone().cholesky().ok_or(Error::Singular(what))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((logdet, chol.inverse()))
}

fn kl_divergence(problem: &PhiProblem, alpha: &DVector<f64>) -> f64 {
    let total = problem.len() as f64;
    let a = alpha.as_slice();
    problem
        .distinct()
        .map(|(x, c)| {
            let f: f64 = 1.0 + a.iter().zip(x).map(|(u, v)| u * v).sum::<f64>();
            c / total * f.ln()
        })
        .sum()
}

/// `V_{0,n}(a, b) = sum x xᵗ / ((1 + a.x)(1 + b.x))` over the problem.
fn cross_moment(problem: &PhiProblem, a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let d = problem.dim();
    let mut m = DMatrix::zeros(d, d);
    for (x, c) in problem.distinct() {
        let x = DVector::from_row_slice(x);
        let w = c / ((1.0 + a.dot(&x)) * (1.0 + b.dot(&x)));
        m += &x * x.transpose() * w;
    }
    m
}

pub fn sos_run(config: &GameConfig, path: &[Outcome]) -> Result<SosRun> {
    sos_run_with(config, path, SosOptions::default())
}

pub fn sos_run_with(config: &GameConfig, path: &[Outcome], opts: SosOptions) -> Result<SosRun> {
    let d = config.dim();
    let training = config.training.points();
    let mut problem = PhiProblem::from_outcomes(training, &[])?;
    let sol0 = solve_phi(&problem, None, opts.tol)?;

    let mut v0 = DMatrix::zeros(d, d);
    let mut s0 = DVector::zeros(d);
    for x in training {
        v0 += x * x.transpose();
        s0 += x;
    }
    let (logdet_v00, v0_inv) = logdet_spd(&v0, "training second moment")?;
    let initial = TrainingSummary {
        alpha0: sol0.alpha_star.clone(),
        phi00: sol0.phi_value,
        logdet_v00,
        tr_v00: v0.trace(),
    };
    let mut state = BettingState {
        round: 0,
        alpha_prev_star: sol0.alpha_star.clone(),
        s0,
        v0,
        v0_inv,
        logdet_v0: logdet_v00,
        logdet_i_running: 0.0,
        delta_phi_sum: 0.0,
        hindsight: sol0.phi_value,
    };
    let mut ledger = CapitalLedger::new(d);
    let mut rounds = Vec::with_capacity(path.len());
    let mut tr_v = 0.0;
    let mut last = sol0;

    for (i, x) in path.iter().enumerate() {
        let n = i + 1;
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if !config.domain.contains(x) {
            return Err(Error::OutsideDomain { round: n });
        }
        let alpha_bet = state.alpha_prev_star.clone();
        ledger.step_capital(&alpha_bet, x)?;

        let vinv_x = &state.v0_inv * x;
        let quad = x.dot(&vinv_x);
        state.logdet_v0 += quad.ln_1p();
        state.v0_inv -= &vinv_x * vinv_x.transpose() / (1.0 + quad);
        state.v0 += x * x.transpose();
        state.s0 += x;
        tr_v += x.norm_squared();

        problem.push(x)?;
        let sol = solve_phi(&problem, Some(&alpha_bet), opts.tol).map_err(|e| e.at_round(n))?;
        let alpha = &sol.alpha_star;
        let phi_at_prev = problem.phi(&alpha_bet);
        let delta_phi = sol.phi_value - phi_at_prev;

        // log|I_n(a)| - log|I_{n-1}(a)| at a = alpha*_n via a rank-1 downdate.
        let chol_i = sol
            .hessian
            .clone()
            .cholesky()
            .ok_or(Error::Singular("information matrix"))
            .map_err(|e| e.at_round(n))?;
        let x_new = x / (1.0 + alpha.dot(x));
        let q = x_new.dot(&chol_i.solve(&x_new));
        state.logdet_i_running += -(-q).ln_1p();

        let delta_phi_upper = if opts.check_bounds {
            let x_old = x / (1.0 + alpha_bet.dot(x));
            let m = cross_moment(&problem, &alpha_bet, alpha) - &x_new * x_old.transpose();
            m.cholesky()
                .map(|c| (x_new.dot(&c.solve(&x_old))).ln_1p())
        } else {
            None
        };

        let logdet_drift = if n % opts.recompute_every.max(1) == 0 || n == path.len() {
            let (fresh, inv) = logdet_spd(&state.v0, "outcome second moment")?;
            let drift = (state.logdet_v0 - fresh).abs() / fresh.abs().max(1.0);
            state.logdet_v0 = fresh;
            state.v0_inv = inv;
            Some(drift)
        } else {
            None
        };

        let vstar_s = sol
            .risk_neutral_moment
            .clone()
            .cholesky()
            .ok_or(Error::Singular("risk-neutral moment"))
            .map_err(|e| e.at_round(n))?
            .solve(&state.s0);
        let risk_neutral_residual = (alpha - &vstar_s).norm();
        let total = problem.len() as f64;

        let gr = kl_divergence(&problem, alpha);
        let log_k_true = ledger.log_capital();
        let ld2 = 0.5 * state.logdet_i_running;
        let diag = Diagnostics {
            log_k_hindsight: sol.phi_value,
            log_k_approx: total * gr - ld2,
            ld1: sol.phi_value - log_k_true - initial.phi00,
            ld2,
            ld3: 1.5 * (n as f64).ln(),
            gr,
            qr: 0.5 * state.s0.dot(&vstar_s) / total,
            dr: state.logdet_i_running / (2.0 * n as f64),
        };
        if let Some(rec) = ledger.last_mut() {
            rec.diag = diag;
        }

        let training_denominator = training.iter().map(|t| 1.0 / (1.0 + alpha.dot(t))).sum();
        rounds.push(RoundState {
            n,
            alpha_star: alpha.clone(),
            delta_phi,
            delta_phi_upper,
            det_ratio: 1.0 + quad,
            logdet_v0: state.logdet_v0,
            tr_v,
            alpha_step: (alpha - &alpha_bet).norm(),
            risk_neutral_residual,
            logdet_drift,
            training_denominator,
        });

        state.round = n;
        state.delta_phi_sum += delta_phi;
        state.hindsight = sol.phi_value;
        state.alpha_prev_star = alpha.clone();
        last = sol;
    }

    Ok(SosRun {
        config: config.clone(),
        ledger,
        rounds,
        initial,
        state,
        final_solution: last,
        problem,
    })
}

/// Constants and per-round values of the two hindsight-deficiency bounds.
#[derive(Debug, Clone)]
pub struct DeficiencyBounds {
    pub c1: f64,
    /// `C1^2 / eps0^2`; infinite when the training gives no certified margin.
    pub c2: f64,
    pub c3: f64,
    /// `C2 (log|V_{0,n}| - log|V_{0,0}|)`.
    pub det_bound: Vec<f64>,
    /// `d C2 max(0, log tr V_n) + C3`.
    pub trace_bound: Vec<f64>,
    /// Running `sum dPhi_i`.
    pub sum_delta_phi: Vec<f64>,
}

impl DeficiencyBounds {
    /// Rounds where the running deficiency exceeds either bound.
    pub fn violations(&self) -> usize {
        self.sum_delta_phi
            .iter()
            .zip(self.det_bound.iter().zip(&self.trace_bound))
            .filter(|(s, (b1, b2))| **s > **b1 + 1e-10 || **s > **b2 + 1e-10)
            .count()
    }
}

pub fn deficiency_bounds(run: &SosRun) -> DeficiencyBounds {
    let cfg = &run.config;
    let d = cfg.dim() as f64;
    let c1 = cfg
        .domain
        .max_one_step_growth()
        .max(cfg.training.max_training_growth(&cfg.domain));
    let c2 = match cfg.training.certified_epsilon0() {
        Some(eps) => c1 * c1 / (eps * eps),
        None => f64::INFINITY,
    };
    let c3 = c2 * (d * run.initial.tr_v00 - run.initial.logdet_v00);
    let mut det_bound = Vec::with_capacity(run.rounds.len());
    let mut trace_bound = Vec::with_capacity(run.rounds.len());
    let mut sum_delta_phi = Vec::with_capacity(run.rounds.len());
    let mut acc = 0.0;
    for r in &run.rounds {
        acc += r.delta_phi;
        sum_delta_phi.push(acc);
        if c2.is_infinite() {
            det_bound.push(f64::INFINITY);
            trace_bound.push(f64::INFINITY);
        } else {
            det_bound.push(c2 * (r.logdet_v0 - run.initial.logdet_v00));
            trace_bound.push(d * c2 * r.tr_v.ln().max(0.0) + c3);
        }
    }
    DeficiencyBounds {
        c1,
        c2,
        c3,
        det_bound,
        trace_bound,
        sum_delta_phi,
    }
}

/// `|s_n| / sqrt(max(1, tr V_n log tr V_n))` for every prefix, training
/// excluded.
pub fn slln_ratio(outcomes: &[Outcome]) -> Vec<f64> {
    let Some(first) = outcomes.first() else {
        return Vec::new();
    };
    let mut s = DVector::zeros(first.len());
    let mut tr = 0.0;
    outcomes
        .iter()
        .map(|x| {
            s += x;
            tr += x.norm_squared();
            let denom = if tr > 0.0 { (tr * tr.ln()).max(1.0) } else { 1.0 };
            s.norm() / denom.sqrt()
        })
        .collect()
}

/// `s_nᵗ V_n^{-1} s_n / log|V_n|` for every prefix; `None` while `V_n` is
/// singular or `log|V_n| <= 0`.
pub fn slln2_ratio(outcomes: &[Outcome]) -> Vec<Option<f64>> {
    let Some(first) = outcomes.first() else {
        return Vec::new();
    };
    let d = first.len();
    let mut s = DVector::zeros(d);
    let mut v = DMatrix::zeros(d, d);
    outcomes
        .iter()
        .map(|x| {
            s += x;
            v += x * x.transpose();
            let chol = v.clone().cholesky()?;
            let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|e| e.ln()).sum::<f64>();
            if !(logdet > 0.0) || !logdet.is_finite() {
                return None;
            }
            Some(s.dot(&chol.solve(&s)) / logdet)
        })
        .collect()
}

impl SosRun {
    pub fn outcomes(&self) -> Vec<Outcome> {
        self.ledger.outcomes().cloned().collect()
    }

    pub fn slln_ratios(&self) -> Vec<f64> {
        slln_ratio(&self.outcomes())
    }

    pub fn slln2_ratios(&self) -> Vec<Option<f64>> {
        slln2_ratio(&self.outcomes())
    }

    pub fn summary(&self) -> SosSummary {
        let bounds = deficiency_bounds(self);
        let last = self.ledger.last();
        let diag = last.map(|r| r.diag).unwrap_or_default();
        SosSummary {
            n: self.ledger.len(),
            log_k_true: self.ledger.log_capital(),
            log_k_hindsight: last.map_or(self.initial.phi00, |_| diag.log_k_hindsight),
            log_k_approx: last.map_or(self.initial.phi00, |_| diag.log_k_approx),
            c1: bounds.c1,
            c2: bounds.c2,
            c3: bounds.c3,
            slln_ratio: self.slln_ratios().last().copied().unwrap_or(0.0),
            slln2_ratio: self.slln2_ratios().last().copied().flatten(),
            alpha_star: self.state.alpha_prev_star.iter().copied().collect(),
        }
    }

    /// Summary as JSON; infinite constants are written as `null`.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(self.summary()).unwrap_or(serde_json::Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{make_training, Domain, TrainingScheme};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn box_config(d: usize, eps: f64) -> GameConfig {
        let dom = Domain::symmetric_box(d, 1.0).unwrap();
        let t = make_training(&dom, eps, TrainingScheme::Axis).unwrap();
        GameConfig::new(dom, t).unwrap()
    }

    fn random_path(seed: u64, d: usize, n: usize, drift: f64) -> Vec<Outcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| DVector::from_fn(d, |_, _| (rng.random_range(-1.0..1.0) + drift).clamp(-1.0, 1.0)))
            .collect()
    }

    #[test]
    fn zero_path_is_flat() {
        let cfg = box_config(2, 0.1);
        let path = vec![DVector::zeros(2); 50];
        let run = sos_run(&cfg, &path).unwrap();
        assert_eq!(run.ledger.log_capital(), 0.0);
        for r in &run.rounds {
            assert!(r.alpha_star.amax() < 1e-15);
            assert!(r.delta_phi.abs() < 1e-15);
        }
        let last = run.ledger.last().unwrap().diag;
        assert!(last.gr.abs() < 1e-15);
        let b = deficiency_bounds(&run);
        assert_eq!(b.violations(), 0);
        assert!(b.sum_delta_phi.last().unwrap().abs() <= b.c3);
        assert!(slln_ratio(&path).iter().all(|r| *r == 0.0));
    }

    #[test]
    fn out_of_domain_outcome_rejected() {
        let cfg = box_config(1, 0.1);
        let r = sos_run(&cfg, &[dv(&[0.5]), dv(&[1.5])]);
        assert!(matches!(r, Err(Error::OutsideDomain { round: 2 })));
    }

    #[test]
    fn exact_decomposition_and_determinant_recursion() {
        let cfg = box_config(2, 0.1);
        let path = random_path(1, 2, 600, 0.1);
        let run = sos_run(&cfg, &path).unwrap();
        let mut sum_dphi = 0.0;
        let mut logdet_prev = run.initial.logdet_v00;
        let mut v = DMatrix::zeros(2, 2);
        for t in cfg.training.points() {
            v += t * t.transpose();
        }
        for (rec, st) in run.ledger.records().iter().zip(&run.rounds) {
            sum_dphi += st.delta_phi;
            let lhs = rec.diag.log_k_hindsight - rec.log_k_true;
            assert!((lhs - (sum_dphi + run.initial.phi00)).abs() < 1e-8);
            assert!(st.delta_phi >= -1e-12);
            // Direct determinant ratio oracle.
            let before = v.determinant();
            v += &rec.x * rec.x.transpose();
            let ratio = v.determinant() / before;
            assert_relative_eq!(st.det_ratio, ratio, max_relative = 1e-8);
            assert!((st.logdet_v0 - v.determinant().ln()).abs() < 1e-8 * v.determinant().ln().abs().max(1.0));
            logdet_prev = st.logdet_v0;
            let upper = st.delta_phi_upper.unwrap();
            assert!(st.delta_phi <= upper + 1e-10);
            assert!(st.risk_neutral_residual < 1e-6);
        }
        assert!(logdet_prev.is_finite());
        assert_eq!(deficiency_bounds(&run).violations(), 0);
    }

    #[test]
    fn capital_matches_direct_product() {
        let cfg = box_config(1, 0.2);
        let path = random_path(4, 1, 300, 0.0);
        let run = sos_run(&cfg, &path).unwrap();
        let mut direct = 0.0;
        for (rec, x) in run.ledger.records().iter().zip(&path) {
            direct += (1.0 + rec.alpha_used.dot(x)).ln();
            assert_eq!(rec.log_k_true, direct);
        }
        // The bet at round n is the optimum after n-1 rounds.
        for w in run.rounds.windows(2) {
            assert_eq!(run.ledger.records()[w[1].n - 1].alpha_used, w[0].alpha_star);
        }
    }

    #[test]
    fn slln_ratio_constant_half() {
        let path = vec![dv(&[0.5]); 100];
        let r = *slln_ratio(&path).last().unwrap();
        let want = 50.0 / (25.0 * 25f64.ln()).sqrt();
        assert_relative_eq!(r, want, epsilon = 1e-12);
        assert!((r - 5.57).abs() < 0.01);
    }

    #[test]
    fn slln2_scalar_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let path: Vec<Outcome> = (0..500)
            .map(|_| dv(&[if rng.random::<bool>() { 1.0 } else { -1.0 }]))
            .collect();
        let ratios = slln2_ratio(&path);
        assert!(ratios[0].is_none());
        let mut s = 0.0;
        for (i, (x, r)) in path.iter().zip(&ratios).enumerate() {
            s += x[0];
            if i == 0 {
                continue;
            }
            let n = (i + 1) as f64;
            assert_relative_eq!(r.unwrap(), s * s / (n * n.ln()), max_relative = 1e-10);
        }
    }

    #[test]
    fn slln2_skips_singular_rounds() {
        let path = vec![dv(&[1.0, 0.0]), dv(&[1.0, 0.0]), dv(&[0.0, 1.0]), dv(&[0.0, 1.0])];
        let r = slln2_ratio(&path);
        assert!(r[0].is_none() && r[1].is_none());
        assert!(r[3].is_some());
    }

    #[test]
    fn deficiency_constants_asymmetric() {
        let dom = Domain::new_box(dv(&[-0.1]), dv(&[1.0])).unwrap();
        let t = make_training(&dom, 0.5, TrainingScheme::Axis).unwrap();
        let cfg = GameConfig::new(dom, t).unwrap();
        let run = sos_run(&cfg, &[dv(&[0.5]), dv(&[-0.05])]).unwrap();
        let b = deficiency_bounds(&run);
        assert_relative_eq!(b.c1, 11.0, epsilon = 1e-12);
        assert_relative_eq!(b.c2, 484.0, epsilon = 1e-9);
        let c = 2.0;
        let want_c3 = 484.0 * (2.0 * c * c - (2.0 * c * c as f64).ln());
        assert_relative_eq!(b.c3, want_c3, max_relative = 1e-12);
        assert_eq!(b.violations(), 0);
    }

    #[test]
    fn corner_training_has_vacuous_bound() {
        let dom = Domain::symmetric_box(1, 1.0).unwrap();
        let t = make_training(&dom, 0.5, TrainingScheme::Corners).unwrap();
        let cfg = GameConfig::new(dom, t).unwrap();
        let run = sos_run(&cfg, &random_path(2, 1, 50, 0.2)).unwrap();
        let b = deficiency_bounds(&run);
        assert_eq!(b.c1, 2.0);
        assert!(b.c2.is_infinite());
        assert_eq!(b.violations(), 0);
        let json = run.summary_json();
        assert!(json["C2"].is_null());
    }

    #[test]
    fn alpha_increments_shrink() {
        let cfg = box_config(2, 0.1);
        let path = random_path(6, 2, 10_000, 0.05);
        let run = sos_run_with(&cfg, &path, SosOptions { check_bounds: false, ..Default::default() }).unwrap();
        let median = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        let mut head: Vec<f64> = run.rounds[..1000].iter().map(|r| r.alpha_step).collect();
        let mut tail: Vec<f64> = run.rounds[9000..].iter().map(|r| r.alpha_step).collect();
        assert!(median(&mut tail) < 0.25 * median(&mut head));
    }

    #[test]
    fn drift_blows_up_capital_monotonically() {
        let cfg = box_config(1, 0.1);
        let path = random_path(9, 1, 3000, 0.3);
        let run = sos_run(&cfg, &path).unwrap();
        let caps: Vec<f64> = run.ledger.records().iter().map(|r| r.log_k_true).collect();
        assert!(*caps.last().unwrap() > 50.0);
        // Past some round the running maximum keeps being renewed in every
        // window of 100 rounds.
        for w in caps[1000..].chunks(100) {
            assert!(w.last().unwrap() > w.first().unwrap());
        }
    }
}
