//! Comparison strategies: constant proportions, a grid universal portfolio
//! for one item, and the analytic Kelly growth rate of a geometric Brownian
//! motion.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{Domain, DomainKind, Outcome};

/// Log capital (nats) of betting the fixed proportion `alpha` every round.
pub fn constant_strategy_capital(alpha: &DVector<f64>, path: &[Outcome]) -> Result<f64> {
    let mut acc = 0.0;
    for (i, x) in path.iter().enumerate() {
        if x.len() != alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: alpha.len(),
                got: x.len(),
            });
        }
        let f = 1.0 + alpha.dot(x);
        if !(f > 0.0) {
            return Err(Error::Collateral {
                round: i + 1,
                value: f,
            });
        }
        acc += f.ln();
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniversalPortfolioConfig {
    /// Number of accounts `M`.
    pub accounts: usize,
    /// Prepend the domain's two endpoints as training outcomes.
    pub include_training: bool,
}

impl Default for UniversalPortfolioConfig {
    fn default() -> Self {
        UniversalPortfolioConfig {
            accounts: 100,
            include_training: false,
        }
    }
}

/// `A = {alpha : 1 + alpha x >= 0 for all x in D}` for a one-dimensional box.
pub fn prudent_interval(domain: &Domain) -> Result<(f64, f64)> {
    match domain.kind() {
        DomainKind::Box { lo, hi } if domain.dim() == 1 => Ok((-1.0 / hi[0], -1.0 / lo[0])),
        _ => Err(Error::InvalidArgument(
            "the universal portfolio is implemented for one-dimensional box domains only".into(),
        )),
    }
}

/// Midpoints of `M` equal-width subintervals of the prudent interval.
pub fn account_grid(domain: &Domain, accounts: usize) -> Result<Vec<f64>> {
    if accounts < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 accounts, got {accounts}"
        )));
    }
    let (a, b) = prudent_interval(domain)?;
    let width = (b - a) / accounts as f64;
    Ok((0..accounts).map(|m| a + (m as f64 + 0.5) * width).collect())
}

/// `log((1/M) sum_m exp(l_m))`. Accounts are summed in order; the sum is only
/// rescaled when an exponential would overflow.
pub fn mean_capital_log(log_caps: &[f64]) -> f64 {
    let top = log_caps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    let m = log_caps.len() as f64;
    if top < 700.0 {
        let mut acc = 0.0;
        for l in log_caps {
            acc += l.exp();
        }
        (acc / m).ln()
    } else {
        let mut acc = 0.0;
        for l in log_caps {
            acc += (l - top).exp();
        }
        top + (acc / m).ln()
    }
}

/// Per-round log capital `log K^U_n`, `n = 1..=N`, of the grid universal
/// portfolio on a one-dimensional path.
pub fn universal_portfolio(config: &UniversalPortfolioConfig, domain: &Domain, path: &[Outcome]) -> Result<Vec<f64>> {
    if domain.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "universal portfolio supports d = 1 only, got d = {}",
            domain.dim()
        )));
    }
    let grid = account_grid(domain, config.accounts)?;
    let training: Vec<f64> = if config.include_training {
        domain
            .corners()
            .map(|c| c.iter().map(|v| v[0]).collect())
            .unwrap_or_default()
    } else {
        Vec::new()
    };
    // Zero-capital accounts (alpha on the boundary of A) stay in the average.
    let growth = |alpha: f64, x: f64| (1.0 + alpha * x).max(0.0).ln();
    let mut logs: Vec<f64> = grid
        .iter()
        .map(|&a| {
            let mut acc = 0.0;
            for &t in &training {
                acc += growth(a, t);
            }
            acc
        })
        .collect();
    let mut out = Vec::with_capacity(path.len());
    for (i, x) in path.iter().enumerate() {
        if x.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: x.len() });
        }
        if !domain.contains(x) {
            return Err(Error::OutsideDomain { round: i + 1 });
        }
        for (l, &a) in logs.iter_mut().zip(&grid) {
            *l += growth(a, x[0]);
        }
        out.push(mean_capital_log(&logs));
    }
    Ok(out)
}

fn covariance(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !sigma.is_square() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            got: sigma.ncols(),
        });
    }
    Ok(sigma * sigma.transpose())
}

fn quadratic_rate(mu: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(Error::Singular("volatility covariance"))?;
    // Rounding can leave a tiny positive pivot on an exactly singular matrix.
    let scale = cov.diagonal().max();
    let pivot = chol.l_dirty().diagonal().map(|l| l * l).min();
    if !(pivot > 1e-12 * scale) {
        return Err(Error::Singular("volatility covariance"));
    }
    Ok(0.5 * mu.dot(&chol.solve(mu)))
}

/// Optimal exponential growth rate `Q(S) = mu' (sigma sigmaᵗ)^{-1} mu / 2`.
pub fn kelly_gbm_rate(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let cov = covariance(sigma)?;
    if mu.len() != cov.nrows() {
        return Err(Error::DimensionMismatch {
            expected: cov.nrows(),
            got: mu.len(),
        });
    }
    quadratic_rate(mu, &cov)
}

/// Sum of `Q(S_[k])` over the groups of a partition of the items, each group
/// traded on its own with the sub-block of `sigma sigmaᵗ`.
pub fn partition_rate(mu: &DVector<f64>, sigma: &DMatrix<f64>, partition: &[Vec<usize>]) -> Result<f64> {
    let cov = covariance(sigma)?;
    let d = cov.nrows();
    if mu.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: mu.len() });
    }
    let mut seen = vec![false; d];
    for &j in partition.iter().flatten() {
        if j >= d || std::mem::replace(&mut seen[j], true) {
            return Err(Error::InvalidArgument(format!(
                "item {j} is out of range or repeated in the partition"
            )));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidArgument("partition does not cover every item".into()));
    }
    partition
        .iter()
        .map(|group| {
            let sub_mu = DVector::from_fn(group.len(), |i, _| mu[group[i]]);
            let sub_cov = DMatrix::from_fn(group.len(), group.len(), |i, j| cov[(group[i], group[j])]);
            quadratic_rate(&sub_mu, &sub_cov)
        })
        .sum()
}
