//! Maximization of the hindsight log capital
//! `Phi(alpha) = sum_n log(1 + alpha.x_n)` over training and observed
//! outcomes, together with its dual object, the empirical risk-neutral
//! distribution.
//!
//! Outcomes are stored as distinct values with multiplicities. Every sum runs
//! over distinct values, which keeps the per-evaluation cost proportional to
//! the number of different outcomes (four, for a one-dimensional embedded
//! price path) rather than the number of rounds.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{rank, Outcome};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 200;

const ARMIJO_SLOPE: f64 = 1e-4;
const SHRINK: f64 = 0.5;
/// Each step keeps every `1 + alpha.x` at least this fraction of its value.
const BARRIER_FRACTION: f64 = 0.1;
/// Below this Newton decrement the full step is taken without a line search.
/// `-Phi` is self-concordant, so the pure Newton phase starts well above it.
const PURE_NEWTON_DECREMENT: f64 = 1e-6;

/// The outcomes entering `Phi_{0,N}`: training points followed by observed
/// moves, grouped by exact bit pattern.
#[derive(Debug, Clone)]
pub struct PhiProblem {
    dim: usize,
    n0: usize,
    points: Vec<f64>,
    counts: Vec<f64>,
    index: HashMap<Vec<u64>, usize>,
    total: usize,
}

/// Value and derivatives of `Phi` at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub phi: f64,
    pub gradient: DVector<f64>,
    /// `I(alpha) = sum x xᵗ / (1 + alpha.x)^2`, the negated Hessian.
    pub information: DMatrix<f64>,
    /// `V*(alpha) = sum x xᵗ / (1 + alpha.x)`, the unnormalized risk-neutral
    /// second moment.
    pub risk_neutral_moment: DMatrix<f64>,
}

impl PhiProblem {
    pub fn new(dim: usize) -> Self {
        PhiProblem {
            dim,
            n0: 0,
            points: Vec::new(),
            counts: Vec::new(),
            index: HashMap::new(),
            total: 0,
        }
    }

    /// Builds the problem from training data and observed outcomes and checks
    /// that the stacked outcomes span `R^d`.
    pub fn from_outcomes(training: &[Outcome], data: &[Outcome]) -> Result<Self> {
        let dim = training
            .first()
            .or(data.first())
            .map(|x| x.len())
            .ok_or_else(|| Error::InvalidArgument("no outcomes".into()))?;
        let mut p = PhiProblem::new(dim);
        for x in training {
            p.push(x)?;
        }
        p.n0 = training.len();
        for x in data {
            p.push(x)?;
        }
        let distinct: Vec<Outcome> = p.distinct().map(|(x, _)| DVector::from_row_slice(x)).collect();
        if rank(&distinct) < dim {
            return Err(Error::RankDeficient(
                "outcomes do not span the betting space".into(),
            ));
        }
        Ok(p)
    }

    pub fn push(&mut self, x: &Outcome) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        // -0.0 and 0.0 are the same outcome.
        let key: Vec<u64> = x.iter().map(|v| (v + 0.0).to_bits()).collect();
        match self.index.get(&key) {
            Some(&k) => self.counts[k] += 1.0,
            None => {
                self.index.insert(key, self.counts.len());
                self.points.extend(x.iter().map(|v| v + 0.0));
                self.counts.push(1.0);
            }
        }
        self.total += 1;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of training points `n0`.
    pub fn n0(&self) -> usize {
        self.n0
    }

    /// Total number of outcomes `N + n0`.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn n_distinct(&self) -> usize {
        self.counts.len()
    }

    /// Distinct outcome values with multiplicities.
    pub fn distinct(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points
            .chunks_exact(self.dim.max(1))
            .zip(self.counts.iter().copied())
    }

    fn dot(alpha: &[f64], x: &[f64]) -> f64 {
        alpha.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `Phi(alpha)`, or `-inf` outside the open feasible set.
    pub fn phi(&self, alpha: &DVector<f64>) -> f64 {
        let a = alpha.as_slice();
        let mut phi = 0.0;
        for (x, c) in self.distinct() {
            let f = 1.0 + Self::dot(a, x);
            if !(f > 0.0) {
                return f64::NEG_INFINITY;
            }
            phi += c * f.ln();
        }
        phi
    }

    pub fn is_feasible(&self, alpha: &DVector<f64>) -> bool {
        let a = alpha.as_slice();
        self.distinct().all(|(x, _)| 1.0 + Self::dot(a, x) > 0.0)
    }

    /// Value, gradient, information matrix and risk-neutral moment in one
    /// pass. `None` outside the feasible set.
    pub fn evaluate(&self, alpha: &DVector<f64>) -> Option<Evaluation> {
        let d = self.dim;
        let a = alpha.as_slice();
        let mut phi = 0.0;
        let mut grad = vec![0.0; d];
        let mut info = vec![0.0; d * d];
        let mut vstar = vec![0.0; d * d];
        for (x, c) in self.distinct() {
            let f = 1.0 + Self::dot(a, x);
            if !(f > 0.0) {
                return None;
            }
            phi += c * f.ln();
            let w1 = c / f;
            let w2 = w1 / f;
            for i in 0..d {
                grad[i] += w1 * x[i];
                for j in 0..=i {
                    let xx = x[i] * x[j];
                    info[i * d + j] += w2 * xx;
                    vstar[i * d + j] += w1 * xx;
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                info[j * d + i] = info[i * d + j];
                vstar[j * d + i] = vstar[i * d + j];
            }
        }
        Some(Evaluation {
            phi,
            gradient: DVector::from_vec(grad),
            information: DMatrix::from_row_slice(d, d, &info),
            risk_neutral_moment: DMatrix::from_row_slice(d, d, &vstar),
        })
    }

    /// Largest step `t <= 1` along `dir` keeping each `1 + alpha.x` above
    /// `BARRIER_FRACTION` of its current value.
    fn max_step(&self, alpha: &DVector<f64>, dir: &DVector<f64>) -> f64 {
        let (a, p) = (alpha.as_slice(), dir.as_slice());
        let mut t = 1.0_f64;
        for (x, _) in self.distinct() {
            let px = Self::dot(p, x);
            if px < 0.0 {
                let f = 1.0 + Self::dot(a, x);
                t = t.min((1.0 - BARRIER_FRACTION) * f / -px);
            }
        }
        t
    }
}

/// The hindsight optimum and its curvature.
#[derive(Debug, Clone)]
pub struct PhiSolution {
    pub alpha_star: DVector<f64>,
    /// `Phi(alpha*)` in nats.
    pub phi_value: f64,
    pub gradient_norm: f64,
    /// Observed information `I_N(alpha*) = -Hessian of Phi`.
    pub hessian: DMatrix<f64>,
    /// `V*_{0,N} = sum x xᵗ / (1 + alpha*.x)`.
    pub risk_neutral_moment: DMatrix<f64>,
    pub iterations: usize,
}

/// Damped Newton ascent on `Phi` with Armijo backtracking, never leaving the
/// open feasible set.
pub fn solve_phi(problem: &PhiProblem, warm_start: Option<&DVector<f64>>, tol: f64) -> Result<PhiSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let d = problem.dim();
    let mut alpha = match warm_start {
        Some(a) if a.len() == d && problem.is_feasible(a) => a.clone(),
        Some(a) if a.len() != d => {
            return Err(Error::DimensionMismatch { expected: d, got: a.len() })
        }
        _ => DVector::zeros(d),
    };
    let mut ev = problem
        .evaluate(&alpha)
        .ok_or(Error::InvalidArgument("origin is infeasible".into()))?;
    let mut best = (ev.gradient.norm(), alpha.clone());

    for iter in 0..=MAX_ITERATIONS {
        let gnorm = ev.gradient.norm();
        if gnorm < best.0 {
            best = (gnorm, alpha.clone());
        }
        let chol = ev
            .information
            .clone()
            .cholesky()
            .ok_or(Error::Singular("information matrix"))?;
        let dir = chol.solve(&ev.gradient);
        let decrement = ev.gradient.dot(&dir);
        // A vanishing gradient alone is not enough: along an unbounded ray of
        // a log objective the gradient decays while the decrement does not.
        if gnorm <= tol && decrement <= tol {
            return Ok(PhiSolution {
                alpha_star: alpha,
                phi_value: ev.phi,
                gradient_norm: gnorm,
                hessian: ev.information,
                risk_neutral_moment: ev.risk_neutral_moment,
                iterations: iter,
            });
        }
        if iter == MAX_ITERATIONS {
            break;
        }
        let mut t = problem.max_step(&alpha, &dir);

        let next = if decrement < PURE_NEWTON_DECREMENT {
            let cand = &alpha + &dir * t;
            problem.evaluate(&cand).map(|e| (cand, e))
        } else {
            let mut accepted = None;
            while t > 1e-16 {
                let cand = &alpha + &dir * t;
                let phi = problem.phi(&cand);
                if phi >= ev.phi + ARMIJO_SLOPE * t * decrement {
                    accepted = problem.evaluate(&cand).map(|e| (cand, e));
                    break;
                }
                t *= SHRINK;
            }
            accepted
        };
        match next {
            Some((a, e)) => {
                alpha = a;
                ev = e;
            }
            None => break,
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        gradient_norm: best.0,
        best: best.1.iter().copied().collect(),
    })
}

/// Reweighting of the outcomes under which they have mean zero.
#[derive(Debug, Clone)]
pub struct RiskNeutralDist {
    /// `(value, g_N, g*_N)` for each distinct outcome.
    pub entries: Vec<(Outcome, f64, f64)>,
}

impl RiskNeutralDist {
    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|(_, _, w)| w).sum()
    }

    pub fn mean(&self) -> DVector<f64> {
        let d = self.entries.first().map_or(0, |e| e.0.len());
        self.entries
            .iter()
            .fold(DVector::zeros(d), |acc, (x, _, w)| acc + x * *w)
    }
}

/// `g*_N(x) = g_N(x) / (1 + alpha*.x)`.
pub fn risk_neutral(problem: &PhiProblem, sol: &PhiSolution) -> RiskNeutralDist {
    let total = problem.len() as f64;
    let a = sol.alpha_star.as_slice();
    let entries = problem
        .distinct()
        .map(|(x, c)| {
            let g = c / total;
            let f = 1.0 + PhiProblem::dot(a, x);
            (DVector::from_row_slice(x), g, g / f)
        })
        .collect();
    RiskNeutralDist { entries }
}

/// Returns `D(g_N || g*_N)` and the residual `|Phi(alpha*) - (N+n0) D|`.
pub fn kl_capital_identity(problem: &PhiProblem, sol: &PhiSolution, dist: &RiskNeutralDist) -> (f64, f64) {
    let kl: f64 = dist
        .entries
        .iter()
        .map(|(_, g, gs)| if *g > 0.0 { g * (g / gs).ln() } else { 0.0 })
        .sum();
    let check = (sol.phi_value - problem.len() as f64 * kl).abs();
    (kl, check)
}

/// Per-step quantities of
/// `y_n = (u_1 u_1ᵗ + .. + u_{n-1} u_{n-1}ᵗ)^{-1} u_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YnStep {
    pub n: usize,
    pub norm: f64,
    /// `u_nᵗ y_n`, equal to the squared norm of the symmetric-root version.
    pub u_dot_y: f64,
}

/// `|y_n|` for `n = d+1 ..= N`, using Sherman-Morrison inverse updates.
pub fn yn_norms(outcomes: &[Outcome]) -> Result<Vec<f64>> {
    Ok(yn_steps(outcomes)?.into_iter().map(|s| s.norm).collect())
}

pub fn yn_steps(outcomes: &[Outcome]) -> Result<Vec<YnStep>> {
    let d = outcomes
        .first()
        .map(|u| u.len())
        .ok_or_else(|| Error::InvalidArgument("empty sequence".into()))?;
    if outcomes.len() < d {
        return Err(Error::RankDeficient(format!("need at least {d} outcomes")));
    }
    let mut gram = DMatrix::zeros(d, d);
    for u in &outcomes[..d] {
        gram += u * u.transpose();
    }
    if rank(&outcomes[..d]) < d {
        return Err(Error::RankDeficient(
            "the first d outcomes are linearly dependent".into(),
        ));
    }
    let mut inv = gram
        .try_inverse()
        .ok_or(Error::Singular("initial Gram matrix"))?;
    let mut steps = Vec::with_capacity(outcomes.len() - d);
    for (i, u) in outcomes.iter().enumerate().skip(d) {
        let y = &inv * u;
        let uy = u.dot(&y);
        steps.push(YnStep {
            n: i + 1,
            norm: y.norm(),
            u_dot_y: uy,
        });
        inv -= &y * y.transpose() / (1.0 + uy);
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{make_training, Domain, TrainingScheme};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn random_problem(seed: u64, d: usize, n: usize) -> PhiProblem {
        let dom = Domain::symmetric_box(d, 1.0).unwrap();
        let train = make_training(&dom, 0.2, TrainingScheme::Axis).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<Outcome> = (0..n)
            .map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0) + 0.1))
            .map(|x: DVector<f64>| x.map(|v| v.clamp(-1.0, 1.0)))
            .collect();
        PhiProblem::from_outcomes(train.points(), &data).unwrap()
    }

    fn random_feasible(p: &PhiProblem, rng: &mut ChaCha8Rng) -> DVector<f64> {
        loop {
            let a = DVector::from_fn(p.dim(), |_, _| rng.random_range(-0.5..0.5));
            if p.is_feasible(&a) {
                return a;
            }
        }
    }

    #[test]
    fn symmetric_data_gives_zero() {
        let p = PhiProblem::from_outcomes(&[dv(&[2.0]), dv(&[-2.0])], &[dv(&[0.3]), dv(&[-0.3])]).unwrap();
        let sol = solve_phi(&p, None, DEFAULT_TOL).unwrap();
        assert!(sol.alpha_star[0].abs() < 1e-14);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn duplicates_are_grouped() {
        let p = PhiProblem::from_outcomes(
            &[dv(&[-1.0]), dv(&[1.0])],
            &[dv(&[1.0]), dv(&[0.5]), dv(&[-0.0]), dv(&[0.0])],
        )
        .unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p.n_distinct(), 4);
        assert_eq!(p.n0(), 2);
    }

    #[test]
    fn rank_deficient_problem_rejected() {
        let r = PhiProblem::from_outcomes(&[dv(&[1.0, 1.0]), dv(&[-1.0, -1.0])], &[]);
        assert!(matches!(r, Err(Error::RankDeficient(_))));
    }

    #[test]
    fn solution_invariants() {
        let p = random_problem(3, 3, 200);
        let sol = solve_phi(&p, None, DEFAULT_TOL).unwrap();
        assert!(sol.gradient_norm <= DEFAULT_TOL);
        assert!(p.is_feasible(&sol.alpha_star));
        let eig = sol.hessian.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0);
        // The returned curvature is evaluated at alpha*.
        let ev = p.evaluate(&sol.alpha_star).unwrap();
        assert_relative_eq!(ev.information, sol.hessian, max_relative = 1e-12);
    }

    #[test]
    fn risk_neutral_at_zero_is_empirical() {
        let p = PhiProblem::from_outcomes(&[dv(&[0.5]), dv(&[-0.5])], &[]).unwrap();
        let sol = solve_phi(&p, None, DEFAULT_TOL).unwrap();
        let dist = risk_neutral(&p, &sol);
        for (_, g, gs) in &dist.entries {
            assert_eq!(g, gs);
            assert_eq!(*gs, 0.5);
        }
        let (kl, check) = kl_capital_identity(&p, &sol, &dist);
        assert_eq!(kl, 0.0);
        assert_eq!(sol.phi_value, 0.0);
        assert_eq!(check, 0.0);
    }

    #[test]
    fn risk_neutral_sums_to_one_with_zero_mean() {
        let p = random_problem(11, 1, 50);
        let sol = solve_phi(&p, None, DEFAULT_TOL).unwrap();
        let dist = risk_neutral(&p, &sol);
        // Direct summation, independent of the accessor methods.
        let mut total = 0.0;
        let mut mean = 0.0;
        for (x, _, w) in &dist.entries {
            total += w;
            mean += w * x[0];
        }
        assert!((total - 1.0).abs() < 1e-10);
        assert!(mean.abs() < 1e-8);
        let (_, check) = kl_capital_identity(&p, &sol, &dist);
        assert!(check < 1e-9 * p.len() as f64);
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        // Unbounded direction: no training in the positive direction.
        let mut p = PhiProblem::new(1);
        p.push(&dv(&[1.0])).unwrap();
        p.push(&dv(&[0.5])).unwrap();
        match solve_phi(&p, None, DEFAULT_TOL) {
            Err(Error::NoConvergence { best, gradient_norm, .. }) => {
                assert_eq!(best.len(), 1);
                assert!(gradient_norm > 0.0);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn alternating_axes_yn_pattern() {
        let e1 = dv(&[1.0, 0.0]);
        let e2 = dv(&[0.0, 1.0]);
        let us: Vec<Outcome> = (0..40).map(|i| if i % 2 == 0 { e1.clone() } else { e2.clone() }).collect();
        let steps = yn_steps(&us).unwrap();
        for s in steps {
            // Oracle: the Gram matrix is diagonal, so y_n = u_n / (#earlier
            // copies of the same axis).
            let axis = (s.n - 1) % 2;
            let earlier = (0..s.n - 1).filter(|i| i % 2 == axis).count();
            assert_relative_eq!(s.norm, 1.0 / earlier as f64, epsilon = 1e-13);
            assert_eq!(earlier, (s.n - 1) / 2);
        }
    }

    #[test]
    fn scalar_yn_is_harmonic() {
        let us: Vec<Outcome> = (0..30).map(|_| dv(&[1.0])).collect();
        for s in yn_steps(&us).unwrap() {
            assert_relative_eq!(s.norm, 1.0 / (s.n - 1) as f64, epsilon = 1e-14);
        }
    }

    #[test]
    fn yn_rejects_dependent_prefix() {
        let us = vec![dv(&[1.0, 1.0]), dv(&[2.0, 2.0]), dv(&[1.0, 0.0])];
        assert!(matches!(yn_norms(&us), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn symmetric_root_corollary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let us: Vec<Outcome> = (0..300)
            .map(|_| {
                let v = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
                let n: f64 = v.norm();
                v / n.max(1.0)
            })
            .collect();
        let steps = yn_steps(&us).unwrap();
        let mut gram: DMatrix<f64> = DMatrix::zeros(3, 3);
        for (i, u) in us.iter().enumerate() {
            if i >= 3 && i % 37 == 0 {
                let eig = gram.clone().symmetric_eigen();
                let inv_root = &eig.eigenvectors
                    * DMatrix::from_diagonal(&eig.eigenvalues.map(|l: f64| 1.0 / l.sqrt()))
                    * eig.eigenvectors.transpose();
                let ytilde: DVector<f64> = inv_root * u;
                let s = steps[i - 3];
                assert_eq!(s.n, i + 1);
                assert!((ytilde.norm_squared() - s.u_dot_y).abs() < 1e-10);
            }
            gram += u * u.transpose();
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn phi_is_concave(seed in 0u64..1000, t in 0.01f64..0.99) {
            let p = random_problem(seed, 2, 40);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let a = random_feasible(&p, &mut rng);
            let b = random_feasible(&p, &mut rng);
            let mid = &a * t + &b * (1.0 - t);
            prop_assert!(p.phi(&mid) >= t * p.phi(&a) + (1.0 - t) * p.phi(&b) - 1e-10);
        }

        #[test]
        fn solution_is_permutation_invariant(seed in 0u64..1000) {
            let dom = Domain::symmetric_box(2, 1.0).unwrap();
            let train = make_training(&dom, 0.2, TrainingScheme::Axis).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut data: Vec<Outcome> = (0..60)
                .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let a = solve_phi(&PhiProblem::from_outcomes(train.points(), &data).unwrap(), None, DEFAULT_TOL).unwrap();
            data.reverse();
            data.rotate_left(seed as usize % 60);
            let b = solve_phi(&PhiProblem::from_outcomes(train.points(), &data).unwrap(), None, DEFAULT_TOL).unwrap();
            prop_assert!((a.alpha_star - b.alpha_star).amax() < 1e-8);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = random_problem(17, 3, 80);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let h = 1e-5;
        for _ in 0..100 {
            let a = random_feasible(&p, &mut rng);
            let ev = p.evaluate(&a).unwrap();
            for i in 0..3 {
                let mut up = a.clone();
                let mut dn = a.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (p.phi(&up) - p.phi(&dn)) / (2.0 * h);
                assert!((fd - ev.gradient[i]).abs() <= 1e-4 * ev.gradient[i].abs().max(1.0));
                let gu = p.evaluate(&up).unwrap().gradient;
                let gd = p.evaluate(&dn).unwrap().gradient;
                for j in 0..3 {
                    let fd2 = -(gu[j] - gd[j]) / (2.0 * h);
                    let an = ev.information[(i, j)];
                    assert!((fd2 - an).abs() <= 1e-4 * an.abs().max(1.0));
                }
            }
        }
    }
}
