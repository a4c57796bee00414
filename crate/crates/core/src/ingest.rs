//! Price tables and the return transform that maps daily returns onto a
//! centred box game.
//!
//! Returns of item `j` are scaled to `z in [-1, 1]` by its extreme returns.
//! The first `F = floor(c T)` of them only estimate the centring `rho`; the
//! game is played on the remaining ones, shifted by `rho`, after the `2^d`
//! corners of the shifted box as training.

use std::fs::File;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{make_training, Domain, GameConfig, Outcome, TrainingScheme, TrainingSet, DEFAULT_EPSILON0};

/// Prices with one row per day and one column per item.
#[derive(Debug, Clone)]
pub struct PriceTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PriceTable {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Header row, first column (date or index) ignored, prices after it.
    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let names: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
        if names.is_empty() {
            return Err(Error::InvalidPrices("no price columns after the first".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = (1..=names.len())
                .map(|j| {
                    let s = rec.get(j).unwrap_or("").trim();
                    s.parse::<f64>()
                        .map_err(|_| Error::InvalidPrices(format!("row {}: cannot parse `{s}`", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(PriceTable { names, rows })
    }
}

/// Scaling and centring of one price table.
#[derive(Debug, Clone, Serialize)]
pub struct ReturnTransform {
    pub s_max: Vec<f64>,
    pub s_min: Vec<f64>,
    /// Number of leading returns used only for the centring.
    #[serde(rename = "F")]
    pub f: usize,
    pub rho: Vec<f64>,
}

impl ReturnTransform {
    /// `z = ((s - s_min) - (s_max - s)) / (s_max - s_min)`, exactly `+-1` at
    /// the extremes.
    pub fn scale(&self, s: &[f64]) -> DVector<f64> {
        DVector::from_fn(s.len(), |j, _| {
            let (hi, lo) = (self.s_max[j], self.s_min[j]);
            ((s[j] - lo) - (hi - s[j])) / (hi - lo)
        })
    }

    pub fn unscale(&self, z: &DVector<f64>) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(j, z)| {
                let (hi, lo) = (self.s_max[j], self.s_min[j]);
                0.5 * (z * (hi - lo) + hi + lo)
            })
            .collect()
    }

    /// Daily returns behind a game outcome `x = z - rho`.
    pub fn invert(&self, x: &Outcome) -> Vec<f64> {
        let z = x + DVector::from_row_slice(&self.rho);
        self.unscale(&z)
    }

    /// The shifted box `[-1 - rho, 1 - rho]`.
    pub fn domain(&self) -> Result<Domain> {
        let d = self.rho.len();
        Domain::new_box(
            DVector::from_fn(d, |j, _| -1.0 - self.rho[j]),
            DVector::from_fn(d, |j, _| 1.0 - self.rho[j]),
        )
    }
}

#[derive(Debug, Clone)]
pub struct TransformedReturns {
    pub returns: Vec<Vec<f64>>,
    pub z: Vec<DVector<f64>>,
    /// Played outcomes `z_t - rho`, `t > F`.
    pub outcomes: Vec<Outcome>,
    pub domain: Domain,
    pub training: TrainingSet,
    pub transform: ReturnTransform,
}

impl TransformedReturns {
    pub fn game(&self) -> Result<GameConfig> {
        GameConfig::new(self.domain.clone(), self.training.clone())
    }
}

/// Simple returns `P_t / P_{t-1} - 1`.
pub fn daily_returns(prices: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = prices.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::InvalidPrices("empty price table".into()));
    }
    for (i, row) in prices.iter().enumerate() {
        if row.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
        if let Some(p) = row.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidPrices(format!("non-positive price {p} in row {}", i + 1)));
        }
    }
    Ok(prices
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b / a - 1.0).collect())
        .collect())
}

pub fn transform_returns(prices: &[Vec<f64>], c: f64) -> Result<TransformedReturns> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidArgument(format!("c must lie in (0, 1), got {c}")));
    }
    let t = prices.len();
    if t < 3 {
        return Err(Error::InvalidPrices(format!("need at least 3 price rows, got {t}")));
    }
    let returns = daily_returns(prices)?;
    let d = returns[0].len();
    let mut s_max = vec![f64::NEG_INFINITY; d];
    let mut s_min = vec![f64::INFINITY; d];
    for r in &returns {
        for j in 0..d {
            s_max[j] = s_max[j].max(r[j]);
            s_min[j] = s_min[j].min(r[j]);
        }
    }
    if let Some(j) = (0..d).find(|&j| !(s_max[j] > s_min[j])) {
        return Err(Error::InvalidPrices(format!("item {} has constant returns", j + 1)));
    }
    let f = (c * t as f64).floor() as usize;
    if f >= returns.len() {
        return Err(Error::InvalidArgument(format!(
            "F = floor(c T) = {f} leaves no returns to play out of {}",
            returns.len()
        )));
    }
    let mut transform = ReturnTransform { s_max, s_min, f, rho: vec![0.0; d] };
    let z: Vec<DVector<f64>> = returns.iter().map(|r| transform.scale(r)).collect();
    // The 2^d corners sum to zero, so they only enter through the divisor.
    let corners = 2f64.powi(d as i32);
    for j in 0..d {
        transform.rho[j] = z[..f].iter().map(|v| v[j]).sum::<f64>() / (corners + f as f64);
    }
    let rho = DVector::from_row_slice(&transform.rho);
    let outcomes = z[f..].iter().map(|v| v - &rho).collect();
    let domain = transform.domain()?;
    let training = make_training(&domain, DEFAULT_EPSILON0, TrainingScheme::Corners)?;
    Ok(TransformedReturns {
        returns,
        z,
        outcomes,
        domain,
        training,
        transform,
    })
}
