//! Continuous-time price paths and their embedding into the discrete game.
//!
//! A path is cut at the successive grid points where the return since the
//! previous cut first reaches Euclidean norm `delta`. Each such return becomes
//! one outcome, rescaled onto the sphere of radius `delta`; the true price at
//! the cut is kept as the next anchor so prices compound exactly.

use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::baselines::kelly_gbm_rate;
use crate::error::{Error, Result};
use crate::game::{make_training, Domain, GameConfig, Outcome, TrainingScheme};
use crate::output::{csv_writer, fmt_float, fmt_opt};
use crate::sos::{sos_run_with, SosOptions, SosRun};

/// Largest fGn length for which the dense Cholesky fallback is attempted.
pub const CHOLESKY_FALLBACK_MAX: usize = 4096;

/// Default `delta` grid for Hölder experiments.
pub const DEFAULT_DELTA_GRID: [f64; 4] = [0.02, 0.01, 0.005, 0.0025];

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Gbm { mu: Vec<f64>, sigma: Vec<f64> },
    Fbm { hurst: f64, scale: f64 },
    External,
}

/// Positive prices on a strictly increasing time grid, stored row-major.
#[derive(Debug, Clone)]
pub struct PricePath {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
    pub generator: Generator,
    pub seed: Option<u64>,
}

impl PricePath {
    /// `values` holds `times.len()` rows of `dim` prices.
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPrices("price path needs at least one item".into()));
        }
        if times.is_empty() || values.len() != times.len() * dim {
            return Err(Error::InvalidPrices(format!(
                "{} values do not fill {} rows of {dim} items",
                values.len(),
                times.len()
            )));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPrices(format!(
                "time grid not strictly increasing at row {}",
                i + 1
            )));
        }
        if let Some(i) = values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidPrices(format!(
                "non-positive price {} at row {}",
                values[i],
                i / dim
            )));
        }
        Ok(PricePath {
            times,
            values,
            dim,
            generator: Generator::External,
            seed: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of grid points `K + 1`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// `log S^j(T) - log S^j(0)`.
    pub fn log_return(&self) -> DVector<f64> {
        let first = self.value(0);
        let last = self.value(self.len() - 1);
        DVector::from_fn(self.dim, |j, _| (last[j] / first[j]).ln())
    }

    /// Indices of items whose log-price range over the path is at most
    /// `threshold`.
    pub fn inactive_items(&self, threshold: f64) -> Vec<usize> {
        (0..self.dim)
            .filter(|&j| {
                let (lo, hi) = (0..self.len())
                    .map(|i| self.value(i)[j].ln())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                hi - lo <= threshold
            })
            .collect()
    }

    /// CSV with header `time,S1,..,Sd`.
    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let dim = rdr.headers()?.len().saturating_sub(1);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidPrices(format!("row {}: cannot parse `{s}`", row + 1)))
            };
            times.push(parse(&rec[0])?);
            for j in 1..=dim {
                values.push(parse(rec.get(j).unwrap_or(""))?);
            }
        }
        PricePath::new(times, values, dim)
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv_writer(file);
        let mut header = vec!["time".to_string()];
        header.extend((1..=self.dim).map(|j| format!("S{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![fmt_float(self.times[i])];
            row.extend(self.value(i).iter().map(|v| fmt_float(*v)));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn grid_steps(t_end: f64, grid_step: f64) -> Result<usize> {
    if !(t_end > 0.0) || !(grid_step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon and grid step must be positive, got T = {t_end}, h = {grid_step}"
        )));
    }
    Ok(((t_end / grid_step).round() as usize).max(1))
}

/// Geometric Brownian motion sampled by the exact log-Euler scheme, one grid
/// point at a time. `S(0) = 1` for every item. The step is adjusted so that
/// the last grid point falls on `T` exactly.
pub struct GbmStream {
    drift: DVector<f64>,
    vol: DMatrix<f64>,
    log_price: DVector<f64>,
    price: Vec<f64>,
    z: DVector<f64>,
    index: usize,
    steps: usize,
    t_end: f64,
    rng: ChaCha8Rng,
}

impl GbmStream {
    pub fn new(mu: &DVector<f64>, sigma: &DMatrix<f64>, t_end: f64, grid_step: f64, seed: u64) -> Result<Self> {
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: sigma.nrows() });
        }
        if !sigma.clone().lu().is_invertible() {
            return Err(Error::Singular("volatility matrix"));
        }
        let steps = grid_steps(t_end, grid_step)?;
        let h = t_end / steps as f64;
        let var = (sigma * sigma.transpose()).diagonal();
        Ok(GbmStream {
            drift: (mu - var * 0.5) * h,
            vol: sigma * h.sqrt(),
            log_price: DVector::zeros(d),
            price: vec![1.0; d],
            z: DVector::zeros(d),
            index: 0,
            steps,
            t_end,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn time(&self) -> f64 {
        if self.index == self.steps {
            self.t_end
        } else {
            self.t_end * self.index as f64 / self.steps as f64
        }
    }

    pub fn price(&self) -> &[f64] {
        &self.price
    }

    /// Moves to the next grid point; `false` once `T` has been reached.
    pub fn advance(&mut self) -> bool {
        if self.index >= self.steps {
            return false;
        }
        let d = self.price.len();
        if d == 1 {
            let z: f64 = self.rng.sample(StandardNormal);
            self.log_price[0] += self.drift[0] + self.vol[(0, 0)] * z;
        } else {
            for j in 0..d {
                self.z[j] = self.rng.sample(StandardNormal);
            }
            self.log_price += &self.drift;
            self.log_price.gemv(1.0, &self.vol, &self.z, 1.0);
        }
        for j in 0..d {
            self.price[j] = self.log_price[j].exp();
        }
        self.index += 1;
        true
    }
}

pub fn gen_gbm(mu: &DVector<f64>, sigma: &DMatrix<f64>, t_end: f64, grid_step: f64, seed: u64) -> Result<PricePath> {
    let mut stream = GbmStream::new(mu, sigma, t_end, grid_step, seed)?;
    let d = mu.len();
    let mut times = Vec::with_capacity(stream.steps() + 1);
    let mut values = Vec::with_capacity((stream.steps() + 1) * d);
    loop {
        times.push(stream.time());
        values.extend_from_slice(stream.price());
        if !stream.advance() {
            break;
        }
    }
    let mut path = PricePath::new(times, values, d)?;
    path.generator = Generator::Gbm {
        mu: mu.iter().copied().collect(),
        sigma: sigma.transpose().iter().copied().collect(),
    };
    path.seed = Some(seed);
    Ok(path)
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let k = k as f64;
    let h2 = 2.0 * hurst;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// `k` samples of unit-step fractional Gaussian noise by circulant embedding.
pub fn fgn<R: Rng + ?Sized>(hurst: f64, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::InvalidArgument(format!("Hurst exponent must lie in (0, 1), got {hurst}")));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let half = k.next_power_of_two();
    let m = 2 * half;
    let mut buf: Vec<Complex<f64>> = (0..m)
        .map(|i| {
            let lag = if i <= half { i } else { m - i };
            Complex::new(fgn_autocovariance(hurst, lag), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut buf);
    let top = buf.iter().map(|c| c.re).fold(0.0, f64::max);
    let lowest = buf.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
    if lowest < -1e-10 * top {
        log::warn!("circulant embedding has a negative eigenvalue ({lowest:e}); using Cholesky");
        drop(buf);
        return fgn_cholesky(hurst, k, rng);
    }
    let scale = 1.0 / m as f64;
    for c in buf.iter_mut() {
        let amp = (c.re.max(0.0) * scale).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *c = Complex::new(amp * re, amp * im);
    }
    fft.process(&mut buf);
    Ok(buf[..k].iter().map(|c| c.re).collect())
}

/// Exact but `O(k^3)` generator, used when circulant embedding fails.
pub fn fgn_cholesky<R: Rng + ?Sized>(hurst: f64, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if k > CHOLESKY_FALLBACK_MAX {
        return Err(Error::InvalidArgument(format!(
            "dense fGn fallback limited to {CHOLESKY_FALLBACK_MAX} points, got {k}"
        )));
    }
    let cov = DMatrix::from_fn(k, k, |i, j| fgn_autocovariance(hurst, i.abs_diff(j)));
    let chol = cov.cholesky().ok_or(Error::Singular("fGn covariance"))?;
    let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((chol.l() * z).iter().copied().collect())
}

/// `S(t) = exp(scale B_H(t))` on `[0, T]` for a fractional Brownian motion
/// with `B_H(0) = 0`.
pub fn gen_fbm(hurst: f64, scale: f64, t_end: f64, grid_step: f64, seed: u64) -> Result<PricePath> {
    let steps = grid_steps(t_end, grid_step)?;
    let h = t_end / steps as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = fgn(hurst, steps, &mut rng)?;
    let step_scale = scale * h.powf(hurst);
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut b = 0.0;
    times.push(0.0);
    values.push(1.0);
    for (i, z) in noise.iter().enumerate() {
        b += z;
        times.push(if i + 1 == steps { t_end } else { (i + 1) as f64 * h });
        values.push((step_scale * b).exp());
    }
    let mut path = PricePath::new(times, values, 1)?;
    path.generator = Generator::Fbm { hurst, scale };
    path.seed = Some(seed);
    Ok(path)
}

/// Outcomes of the limit-order embedding.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub delta: f64,
    pub dim: usize,
    /// Grid index of every cut after the start.
    pub stop_indices: Vec<usize>,
    pub stop_times: Vec<f64>,
    /// Returns between cuts rescaled to norm `delta`.
    pub outcomes: Vec<Outcome>,
    /// True returns between cuts.
    pub raw_returns: Vec<Outcome>,
    /// Return from the last cut to the end of the path.
    pub residual: DVector<f64>,
    pub horizon: f64,
}

impl Embedding {
    /// Number of completed rounds `N`.
    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    /// `tr V_N`, equal to `N delta^2` up to rounding.
    pub fn trace_v(&self) -> f64 {
        self.outcomes.iter().map(|x| x.norm_squared()).sum()
    }
}

/// Incremental form of [`embed`] for paths too long to store.
#[derive(Debug, Clone)]
pub struct Embedder {
    delta: f64,
    dim: usize,
    anchor: Vec<f64>,
    prev: Vec<f64>,
    ret: Vec<f64>,
    started: bool,
    last_time: f64,
    stop_indices: Vec<usize>,
    stop_times: Vec<f64>,
    outcomes: Vec<Outcome>,
    raw_returns: Vec<Outcome>,
}

impl Embedder {
    pub fn new(delta: f64, dim: usize) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        Ok(Embedder {
            delta,
            dim,
            anchor: vec![0.0; dim],
            prev: vec![0.0; dim],
            ret: vec![0.0; dim],
            started: false,
            last_time: 0.0,
            stop_indices: Vec::new(),
            stop_times: Vec::new(),
            outcomes: Vec::new(),
            raw_returns: Vec::new(),
        })
    }

    /// Feeds grid point `index` at time `time`; returns `true` when it
    /// completes a round.
    pub fn push(&mut self, index: usize, time: f64, price: &[f64]) -> Result<bool> {
        if price.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: price.len() });
        }
        if let Some(p) = price.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidPrices(format!("non-positive price {p} at grid index {index}")));
        }
        self.last_time = time;
        if !self.started {
            self.anchor.copy_from_slice(price);
            self.prev.copy_from_slice(price);
            self.started = true;
            return Ok(false);
        }
        let mut step = 0.0;
        let mut norm = 0.0;
        for j in 0..self.dim {
            let s = price[j] / self.prev[j] - 1.0;
            step += s * s;
            let r = price[j] / self.anchor[j] - 1.0;
            self.ret[j] = r;
            norm += r * r;
        }
        let limit = 2.0 * self.delta;
        if step.sqrt() > limit {
            return Err(Error::GridTooCoarse { index, norm: step.sqrt(), limit });
        }
        self.prev.copy_from_slice(price);
        let norm = norm.sqrt();
        if norm < self.delta {
            return Ok(false);
        }
        let raw = DVector::from_row_slice(&self.ret);
        self.outcomes.push(&raw * (self.delta / norm));
        self.raw_returns.push(raw);
        self.stop_indices.push(index);
        self.stop_times.push(time);
        self.anchor.copy_from_slice(price);
        Ok(true)
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn finish(self) -> Embedding {
        let residual = if self.started {
            DVector::from_fn(self.dim, |j, _| self.prev[j] / self.anchor[j] - 1.0)
        } else {
            DVector::zeros(self.dim)
        };
        Embedding {
            delta: self.delta,
            dim: self.dim,
            stop_indices: self.stop_indices,
            stop_times: self.stop_times,
            outcomes: self.outcomes,
            raw_returns: self.raw_returns,
            residual,
            horizon: self.last_time,
        }
    }
}

pub fn embed(path: &PricePath, delta: f64) -> Result<Embedding> {
    let mut e = Embedder::new(delta, path.dim())?;
    for i in 0..path.len() {
        e.push(i, path.time(i), path.value(i))?;
    }
    Ok(e.finish())
}

/// The game on the sphere of radius `delta` with axis training.
pub fn embedded_game(dim: usize, delta: f64, epsilon0: f64) -> Result<GameConfig> {
    let domain = Domain::sphere(dim, delta)?;
    let training = make_training(&domain, epsilon0, TrainingScheme::Axis)?;
    GameConfig::new(domain, training)
}

/// SOS on an embedding, with the capital carried to the horizon through the
/// final partial interval.
#[derive(Debug, Clone)]
pub struct EmbeddedRun {
    pub run: SosRun,
    /// `log K_delta(T)`.
    pub log_k: f64,
}

pub fn run_embedding(embedding: &Embedding, epsilon0: f64, opts: SosOptions) -> Result<EmbeddedRun> {
    let config = embedded_game(embedding.dim, embedding.delta, epsilon0)?;
    let run = sos_run_with(&config, &embedding.outcomes, opts)?;
    let last = 1.0 + run.state.alpha_prev_star.dot(&embedding.residual);
    if !(last > 0.0) {
        return Err(Error::Collateral { round: embedding.n() + 1, value: last });
    }
    let log_k = run.ledger.log_capital() + last.ln();
    Ok(EmbeddedRun { run, log_k })
}

fn fast_options() -> SosOptions {
    SosOptions {
        check_bounds: false,
        ..SosOptions::default()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderRow {
    pub delta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "trV_N")]
    pub tr_v: f64,
    #[serde(rename = "logK_delta")]
    pub log_k: f64,
    /// Hölder estimate from this and the previous (coarser) `delta`.
    pub h_hat: Option<f64>,
    /// `delta |alpha*_N|`.
    pub delta_alpha_norm: f64,
}

pub const HOLDER_HEADER: [&str; 6] = ["delta", "N", "trV_N", "logK_delta", "h_hat", "delta_alpha_norm"];

impl HolderRow {
    pub fn fields(&self) -> Vec<String> {
        vec![
            fmt_float(self.delta),
            self.n.to_string(),
            fmt_float(self.tr_v),
            fmt_float(self.log_k),
            fmt_opt(self.h_hat),
            fmt_float(self.delta_alpha_norm),
        ]
    }
}

/// Solves `tr V_N ~ delta^(2 - 1/H)` for `H` between two cells.
pub fn holder_estimate(delta_a: f64, tr_a: f64, delta_b: f64, tr_b: f64) -> Option<f64> {
    if !(tr_a > 0.0 && tr_b > 0.0) || delta_a == delta_b {
        return None;
    }
    let slope = (tr_b.ln() - tr_a.ln()) / (delta_b.ln() - delta_a.ln());
    let h = 1.0 / (2.0 - slope);
    (h.is_finite() && h > 0.0).then_some(h)
}

/// Embeds `path` at each `delta` and runs SOS on the result.
pub fn holder_experiment(path: &PricePath, deltas: &[f64], epsilon0: f64) -> Result<Vec<HolderRow>> {
    let mut rows: Vec<HolderRow> = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let inactive = path.inactive_items(10.0 * delta);
        if !inactive.is_empty() {
            log::warn!("items {inactive:?} barely move at delta = {delta}");
        }
        let embedding = embed(path, delta)?;
        let er = run_embedding(&embedding, epsilon0, fast_options())?;
        let tr_v = embedding.trace_v();
        let h_hat = rows.last().and_then(|p| holder_estimate(p.delta, p.tr_v, delta, tr_v));
        rows.push(HolderRow {
            delta,
            n: embedding.n(),
            tr_v,
            log_k: er.log_k,
            h_hat,
            delta_alpha_norm: delta * er.run.state.alpha_prev_star.norm(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct GirsanovConfig {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub horizon: f64,
    /// Defaults to `0.02 T^(-1/4)`.
    pub delta: Option<f64>,
    /// Defaults to a step whose return has standard deviation `delta / 8`.
    pub grid_step: Option<f64>,
    pub seed: u64,
    pub epsilon0: f64,
}

impl GirsanovConfig {
    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(0.02 * self.horizon.powf(-0.25))
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step.unwrap_or_else(|| {
            let cov = &self.sigma * self.sigma.transpose();
            let vol = cov.diagonal().max().sqrt();
            (self.delta() / (8.0 * vol)).powi(2)
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GirsanovResult {
    pub delta: f64,
    pub grid_step: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "logK")]
    pub log_k: f64,
    #[serde(rename = "logK_over_T")]
    pub log_k_over_t: f64,
    pub target: f64,
    pub alpha_star: Vec<f64>,
}

/// Simulates a GBM without storing it, embeds it, and bets with SOS.
pub fn girsanov_rate_experiment(cfg: &GirsanovConfig) -> Result<GirsanovResult> {
    let target = kelly_gbm_rate(&cfg.mu, &cfg.sigma)?;
    let delta = cfg.delta();
    let grid_step = cfg.grid_step();
    let mut stream = GbmStream::new(&cfg.mu, &cfg.sigma, cfg.horizon, grid_step, cfg.seed)?;
    let mut embedder = Embedder::new(delta, cfg.mu.len())?;
    loop {
        embedder.push(stream.index(), stream.time(), stream.price())?;
        if !stream.advance() {
            break;
        }
    }
    let embedding = embedder.finish();
    let er = run_embedding(&embedding, cfg.epsilon0, fast_options())?;
    Ok(GirsanovResult {
        delta,
        grid_step,
        n: embedding.n(),
        log_k: er.log_k,
        log_k_over_t: er.log_k / cfg.horizon,
        target,
        alpha_star: er.run.state.alpha_prev_star.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn exp_path(h: f64, t_end: f64) -> PricePath {
        let k = (t_end / h).round() as usize;
        let times: Vec<f64> = (0..=k).map(|i| i as f64 * h).collect();
        let values = times.iter().map(|t| t.exp()).collect();
        PricePath::new(times, values, 1).unwrap()
    }

    fn lag1(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
        let cov: f64 = v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        cov / var
    }

    fn log_increments(path: &PricePath) -> Vec<f64> {
        (1..path.len())
            .map(|i| (path.value(i)[0] / path.value(i - 1)[0]).ln())
            .collect()
    }

    #[test]
    fn path_validation() {
        assert!(PricePath::new(vec![0.0, 1.0], vec![1.0, -1.0], 1).is_err());
        assert!(PricePath::new(vec![0.0, 0.0], vec![1.0, 1.0], 1).is_err());
        assert!(PricePath::new(vec![0.0, 1.0], vec![1.0], 1).is_err());
        assert!(PricePath::new(vec![0.0, 1.0], vec![1.0, 2.0], 1).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = gen_gbm(&dv(&[0.1, 0.0]), &DMatrix::from_diagonal(&dv(&[0.2, 0.3])), 1.0, 0.01, 4).unwrap();
        let file = dir.path().join("p.csv");
        p.write_csv(&file).unwrap();
        let q = PricePath::read_csv(&file).unwrap();
        assert_eq!(q.dim(), 2);
        assert_eq!(q.times(), p.times());
        for i in 0..p.len() {
            assert_eq!(q.value(i), p.value(i));
        }
    }

    #[test]
    fn exponential_stop_spacing() {
        let h = 1e-5;
        let e = embed(&exp_path(h, 1.0), 0.01).unwrap();
        let target = 1.01f64.ln();
        assert!(e.n() > 90);
        let mut prev = 0.0;
        for t in &e.stop_times {
            let gap = t - prev;
            assert!(gap >= target - 1e-9 && gap < target + h + 1e-9, "{gap}");
            prev = *t;
        }
    }

    #[test]
    fn constant_path_has_no_rounds() {
        let p = PricePath::new(vec![0.0, 0.5, 1.0], vec![2.0; 3], 1).unwrap();
        let e = embed(&p, 0.01).unwrap();
        assert_eq!(e.n(), 0);
        assert_eq!(e.residual[0], 0.0);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let p = PricePath::new(vec![0.0, 1.0], vec![1.0, 1.05], 1).unwrap();
        assert!(matches!(embed(&p, 0.01), Err(Error::GridTooCoarse { index: 1, .. })));
    }

    #[test]
    fn embedding_invariants_on_gbm() {
        let sigma = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.1, 0.2]);
        let p = gen_gbm(&dv(&[0.05, -0.02]), &sigma, 1.0, 1e-5, 11).unwrap();
        let delta = 0.01;
        let e = embed(&p, delta).unwrap();
        for x in &e.outcomes {
            assert_relative_eq!(x.norm(), delta, max_relative = 1e-14);
        }
        assert_relative_eq!(e.trace_v(), e.n() as f64 * delta * delta, max_relative = 1e-12);
        let last = *e.stop_indices.last().unwrap();
        for j in 0..2 {
            let prod: f64 = e.raw_returns.iter().map(|r| 1.0 + r[j]).product();
            let ratio = p.value(last)[j] / p.value(0)[j];
            assert_relative_eq!(prod, ratio, max_relative = 1e-9);
            let total = prod * (1.0 + e.residual[j]);
            assert_relative_eq!(total, p.value(p.len() - 1)[j] / p.value(0)[j], max_relative = 1e-9);
        }
    }

    #[test]
    fn gbm_round_count_tracks_quadratic_variation() {
        let p = gen_gbm(&dv(&[0.0]), &DMatrix::from_element(1, 1, 0.3), 1.0, 1e-6, 2).unwrap();
        let n = embed(&p, 0.005).unwrap().n() as f64;
        assert!((n - 3600.0).abs() < 0.2 * 3600.0, "{n}");
    }

    #[test]
    fn refinement_moves_stops_by_less_than_a_coarse_step() {
        let fine = exp_path(1e-5, 0.5);
        let idx: Vec<usize> = (0..fine.len()).step_by(4).collect();
        let coarse = PricePath::new(
            idx.iter().map(|&i| fine.time(i)).collect(),
            idx.iter().map(|&i| fine.value(i)[0]).collect(),
            1,
        )
        .unwrap();
        let a = embed(&fine, 0.01).unwrap();
        let b = embed(&coarse, 0.01).unwrap();
        assert_eq!(a.n(), b.n());
        for (s, t) in a.stop_times.iter().zip(&b.stop_times) {
            assert!((s - t).abs() < 4e-5 + 1e-12);
        }
    }

    #[test]
    fn gbm_is_reproducible() {
        let mu = dv(&[0.1]);
        let s = DMatrix::from_element(1, 1, 0.3);
        let a = gen_gbm(&mu, &s, 1.0, 1e-3, 9).unwrap();
        let b = gen_gbm(&mu, &s, 1.0, 1e-3, 9).unwrap();
        let c = gen_gbm(&mu, &s, 1.0, 1e-3, 10).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
        assert_eq!(a.horizon(), 1.0);
    }

    #[test]
    fn gbm_deterministic_limit() {
        let p = gen_gbm(&dv(&[0.1, -0.2]), &(DMatrix::identity(2, 2) * 1e-12), 2.0, 0.01, 1).unwrap();
        let last = p.value(p.len() - 1);
        assert_relative_eq!(last[0], 0.2f64.exp(), max_relative = 1e-6);
        assert_relative_eq!(last[1], (-0.4f64).exp(), max_relative = 1e-6);
    }

    #[test]
    fn gbm_log_moments() {
        let (mu, sig, t) = (0.1, 0.3, 1.0);
        let n = 10_000;
        let logs: Vec<f64> = (0..n)
            .map(|s| gen_gbm(&dv(&[mu]), &DMatrix::from_element(1, 1, sig), t, 0.25, s).unwrap().log_return()[0])
            .collect();
        let mean = logs.iter().sum::<f64>() / n as f64;
        let se = sig * (t / n as f64).sqrt();
        assert!((mean - (mu - sig * sig / 2.0) * t).abs() < 3.0 * se);

        let sigma = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.15, 0.2]);
        let target = &sigma * sigma.transpose();
        let rets: Vec<DVector<f64>> = (0..n)
            .map(|s| gen_gbm(&dv(&[0.0, 0.0]), &sigma, 1.0, 1.0, s).unwrap().log_return())
            .collect();
        let m = rets.iter().fold(DVector::zeros(2), |a, r| a + r) / n as f64;
        let cov = rets.iter().fold(DMatrix::zeros(2, 2), |a, r| a + (r - &m) * (r - &m).transpose()) / (n - 1) as f64;
        assert!((cov - &target).norm() < 0.05 * target.norm());
    }

    #[test]
    fn fbm_starts_at_zero_and_is_reproducible() {
        for h in [0.3, 0.5, 0.7] {
            let p = gen_fbm(h, 1.0, 1.0, 1e-3, 5).unwrap();
            assert_eq!(p.value(0)[0], 1.0);
            assert_eq!(p.len(), 1001);
            assert_eq!(p.values, gen_fbm(h, 1.0, 1.0, 1e-3, 5).unwrap().values);
        }
        assert!(gen_fbm(1.0, 1.0, 1.0, 0.1, 0).is_err());
    }

    #[test]
    fn fbm_increment_correlation() {
        let k = 1 << 16;
        let p = gen_fbm(0.5, 1.0, 1.0, 1.0 / k as f64, 21).unwrap();
        assert!(lag1(&log_increments(&p)).abs() < 3.0 / (k as f64).sqrt());
        let p = gen_fbm(0.7, 1.0, 1.0, 1.0 / k as f64, 21).unwrap();
        let target = 2f64.powf(0.4) - 1.0;
        assert!((lag1(&log_increments(&p)) - target).abs() < 0.05);
        let p = gen_fbm(0.3, 1.0, 1.0, 1.0 / k as f64, 21).unwrap();
        assert!((lag1(&log_increments(&p)) - (2f64.powf(-0.4) - 1.0)).abs() < 0.05);
    }

    #[test]
    fn fgn_variance_and_cholesky_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = fgn(0.7, 1 << 14, &mut rng).unwrap();
        let var = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        assert!((var - 1.0).abs() < 0.1);
        let w = fgn_cholesky(0.7, 2000, &mut rng).unwrap();
        assert!((lag1(&w) - (2f64.powf(0.4) - 1.0)).abs() < 0.1);
        assert!(fgn_cholesky(0.7, CHOLESKY_FALLBACK_MAX + 1, &mut rng).is_err());
    }

    #[test]
    fn holder_estimate_on_gbm_is_brownian() {
        let p = gen_gbm(&dv(&[0.0]), &DMatrix::from_element(1, 1, 0.3), 1.0, 1e-6, 8).unwrap();
        let rows = holder_experiment(&p, &[0.02, 0.01, 0.005], 0.1).unwrap();
        assert!(rows[0].h_hat.is_none());
        for r in &rows[1..] {
            let h = r.h_hat.unwrap();
            assert!((0.4..=0.6).contains(&h), "{h}");
        }
    }

    #[test]
    fn holder_estimate_formula() {
        // tr V ~ delta^(2 - 1/H) with H = 0.7.
        let f = |d: f64| d.powf(2.0 - 1.0 / 0.7);
        assert_relative_eq!(holder_estimate(0.02, f(0.02), 0.01, f(0.01)).unwrap(), 0.7, epsilon = 1e-12);
        assert!(holder_estimate(0.02, 0.0, 0.01, 1.0).is_none());
    }

    #[test]
    fn horizon_capital_includes_partial_interval() {
        let p = gen_gbm(&dv(&[0.3]), &DMatrix::from_element(1, 1, 0.3), 1.0, 1e-5, 3).unwrap();
        let e = embed(&p, 0.01).unwrap();
        let er = run_embedding(&e, 0.1, SosOptions::default()).unwrap();
        let partial = (1.0 + er.run.state.alpha_prev_star.dot(&e.residual)).ln();
        assert_relative_eq!(er.log_k, er.run.ledger.log_capital() + partial, epsilon = 1e-14);
        assert!(e.residual.norm() < 0.01);
    }

    #[test]
    fn girsanov_without_drift_is_flat() {
        let cfg = GirsanovConfig {
            mu: dv(&[0.0]),
            sigma: DMatrix::from_element(1, 1, 0.3),
            horizon: 5.0,
            delta: Some(0.01),
            grid_step: None,
            seed: 1,
            epsilon0: 0.1,
        };
        let r = girsanov_rate_experiment(&cfg).unwrap();
        assert_eq!(r.target, 0.0);
        // No edge: the hindsight gain is O(1) and the information penalty
        // costs about log(N) / 2, so the rate vanishes like log(N) / T.
        let band = 0.5 * (r.n as f64).ln() + 3.0;
        assert!(r.log_k.abs() < band, "{r:?}");
    }

    #[test]
    fn girsanov_two_items_diagonal() {
        let mu = dv(&[0.5, 0.4]);
        let sigma = DMatrix::from_diagonal(&dv(&[0.3, 0.3]));
        let blocks = kelly_gbm_rate(&dv(&[0.5]), &DMatrix::from_element(1, 1, 0.3)).unwrap()
            + kelly_gbm_rate(&dv(&[0.4]), &DMatrix::from_element(1, 1, 0.3)).unwrap();
        let cfg = GirsanovConfig {
            mu,
            sigma,
            horizon: 20.0,
            delta: Some(0.03),
            grid_step: None,
            seed: 6,
            epsilon0: 0.1,
        };
        let r = girsanov_rate_experiment(&cfg).unwrap();
        assert_relative_eq!(r.target, blocks, max_relative = 1e-12);
        assert!((r.log_k_over_t - blocks).abs() < 0.3 * blocks, "{r:?}");
    }
}
