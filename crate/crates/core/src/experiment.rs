//! Scenario runner behind `gtpbet run`.
//!
//! A config is a flat `key = value` text file; `#` starts a comment. Vectors
//! are comma-separated and matrix rows are separated by `;`. Relative paths
//! are resolved against the config file's directory. `GTPBET_SEED`, when set,
//! replaces the configured seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::baselines::{universal_portfolio, UniversalPortfolioConfig};
use crate::continuous::{gen_fbm, girsanov_rate_experiment, holder_experiment, GirsanovConfig, PricePath, HOLDER_HEADER};
use crate::error::{Error, Result};
use crate::game::{make_training, Domain, GameConfig, Outcome, TrainingScheme, DEFAULT_EPSILON0};
use crate::ingest::{transform_returns, PriceTable};
use crate::model_select::{select_dimension, ModelSelectConfig};
use crate::output::{fmt_float, write_csv, write_json};
use crate::sos::{deficiency_bounds, sos_run, SosRun};

pub const SEED_ENV: &str = "GTPBET_SEED";

pub const SCENARIOS: [&str; 7] = [
    "sos_csv",
    "sos_synthetic",
    "universal_compare",
    "holder",
    "girsanov",
    "model_select",
    "imaginary",
];

const KEYS: [&str; 19] = [
    "scenario",
    "input",
    "output",
    "seed",
    "delta",
    "deltas",
    "mu",
    "sigma",
    "c",
    "M",
    "d_max",
    "dim",
    "rounds",
    "horizon",
    "hurst",
    "scale",
    "epsilon0",
    "grid_step",
    "training",
];

#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", i + 1)));
            }
            if values.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        if !values.contains_key("scenario") {
            return Err(Error::Config("missing `scenario`".into()));
        }
        Ok(Config {
            values,
            base_dir: base_dir.into(),
        })
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::parse(&text, base)
    }

    /// Applies `GTPBET_SEED` if it is set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("{SEED_ENV} is not an unsigned integer: `{s}`")))?;
            self.values.insert("seed".into(), s.trim().to_string());
        }
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn scenario(&self) -> &str {
        &self.values["scenario"]
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    fn num_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.num(key)?.unwrap_or(default))
    }

    fn vector(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`")))
                    })
                    .collect()
            })
            .transpose()
    }

    fn matrix(&self, key: &str, d: usize) -> Result<Option<DMatrix<f64>>> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        let rows: Vec<Vec<f64>> = v
            .split(';')
            .map(|r| {
                r.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`")))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        if rows.len() == 1 && rows[0].len() == 1 {
            return Ok(Some(DMatrix::identity(d, d) * rows[0][0]));
        }
        if rows.len() == 1 && rows[0].len() == d {
            return Ok(Some(DMatrix::from_diagonal(&DVector::from_row_slice(&rows[0]))));
        }
        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Config(format!("`{key}` must be a scalar, {d} values or a {d}x{d} matrix")));
        }
        Ok(Some(DMatrix::from_fn(d, d, |i, j| rows[i][j])))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|p| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                self.base_dir.join(p)
            }
        })
    }

    fn input(&self) -> Result<PathBuf> {
        let p = self.path("input").ok_or_else(|| Error::Config("missing `input`".into()))?;
        if !p.is_file() {
            return Err(Error::Config(format!("input file {} not found", p.display())));
        }
        Ok(p)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.path("output").unwrap_or_else(|| self.base_dir.join("gtpbet-out"))
    }

    pub fn seed(&self) -> Result<u64> {
        self.num_or("seed", 0)
    }
}

/// What a scenario wrote.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: String,
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// Reads, seeds from the environment, and runs a config file.
pub fn run_experiment<P: AsRef<Path>>(config_path: P) -> Result<RunReport> {
    let cfg = Config::from_file(config_path)?.with_env_seed()?;
    run_config(&cfg)
}

pub fn run_config(cfg: &Config) -> Result<RunReport> {
    let scenario = cfg.scenario().to_string();
    if !SCENARIOS.contains(&scenario.as_str()) {
        return Err(Error::UnknownScenario(scenario));
    }
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut w = Writer { dir: out.clone(), files: Vec::new() };
    let result = match scenario.as_str() {
        "imaginary" => imaginary(cfg, &mut w),
        "sos_csv" => sos_csv(cfg, &mut w),
        "sos_synthetic" => sos_synthetic(cfg, &mut w),
        "universal_compare" => universal_compare(cfg, &mut w),
        "holder" => holder(cfg, &mut w),
        "girsanov" => girsanov(cfg, &mut w),
        "model_select" => model_select(cfg, &mut w),
        _ => unreachable!(),
    };
    let summary = result.map_err(|e| Error::Scenario {
        scenario: scenario.clone(),
        source: Box::new(e),
    })?;
    Ok(RunReport {
        scenario,
        output_dir: out,
        files: w.files,
        summary,
    })
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn csv<H: AsRef<str>>(&mut self, name: &str, header: &[H], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let p = self.dir.join(name);
        write_csv(&p, header, rows)?;
        self.files.push(p);
        Ok(())
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<()> {
        let p = self.dir.join(name);
        write_json(&p, v)?;
        self.files.push(p);
        Ok(())
    }

    fn ledger(&mut self, run: &SosRun) -> Result<()> {
        let p = self.dir.join("ledger.csv");
        run.ledger.write_csv(&p)?;
        self.files.push(p);
        Ok(())
    }

    /// Long-format `series,n,value` table.
    fn series(&mut self, columns: &[(&str, Vec<f64>)]) -> Result<()> {
        let rows = columns.iter().flat_map(|(name, values)| {
            values
                .iter()
                .enumerate()
                .map(move |(i, v)| vec![name.to_string(), (i + 1).to_string(), fmt_float(*v)])
        });
        self.csv("series.csv", &["series", "n", "value"], rows)
    }
}

fn sos_series(run: &SosRun) -> Vec<(&'static str, Vec<f64>)> {
    let recs = run.ledger.records();
    vec![
        ("LK1", recs.iter().map(|r| r.log_k_true).collect()),
        ("LK_hindsight", recs.iter().map(|r| r.diag.log_k_hindsight).collect()),
        ("LK_approx", recs.iter().map(|r| r.diag.log_k_approx).collect()),
    ]
}

fn sos_summary(run: &SosRun) -> Value {
    let mut v = run.summary_json();
    let b = deficiency_bounds(run);
    v["deficiency_violations"] = json!(b.violations());
    v
}

fn finish_sos(run: &SosRun, w: &mut Writer, extra: Value) -> Result<Value> {
    w.ledger(run)?;
    w.series(&sos_series(run))?;
    let mut summary = sos_summary(run);
    if let (Some(s), Some(e)) = (summary.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            s.insert(k.clone(), v.clone());
        }
    }
    w.json("summary.json", &summary)?;
    Ok(summary)
}

fn imaginary(cfg: &Config, w: &mut Writer) -> Result<Value> {
    let rounds: usize = cfg.num_or("rounds", 2000)?;
    let domain = Domain::symmetric_box(1, 1.0)?;
    let training = make_training(&domain, cfg.num_or("epsilon0", DEFAULT_EPSILON0)?, TrainingScheme::Corners)?;
    let game = GameConfig::new(domain, training)?;
    let path: Vec<Outcome> = (1..=rounds).map(|n| DVector::from_element(1, 1.0 / (n as f64 + 1.0))).collect();
    let run = sos_run(&game, &path)?;
    finish_sos(&run, w, json!({ "rounds": rounds }))
}

fn sos_csv(cfg: &Config, w: &mut Writer) -> Result<Value> {
    let table = PriceTable::read_csv(cfg.input()?)?;
    let c = cfg.num_or("c", 0.17)?;
    let tr = transform_returns(&table.rows, c)?;
    let run = sos_run(&tr.game()?, &tr.outcomes)?;
    finish_sos(&run, w, json!({ "items": table.names, "transform": tr.transform }))
}

fn scheme(cfg: &Config) -> Result<TrainingScheme> {
    match cfg.raw("training").unwrap_or("axis") {
        "axis" => Ok(TrainingScheme::Axis),
        "corners" => Ok(TrainingScheme::Corners),
        v => Err(Error::Config(format!("`training` must be axis or corners, got `{v}`"))),
    }
}

/// Bounded synthetic outcomes on `[-1, 1]^d`: uniform noise shrunk around a
/// per-coordinate mean `mu_j`.
pub fn synthetic_outcomes(mu: &[f64], rounds: usize, seed: u64) -> Result<Vec<Outcome>> {
    if let Some(m) = mu.iter().find(|m| !(m.abs() < 1.0)) {
        return Err(Error::InvalidArgument(format!("drift {m} must lie in (-1, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..rounds)
        .map(|_| DVector::from_fn(mu.len(), |j, _| mu[j] + (1.0 - mu[j].abs()) * rng.random_range(-1.0..=1.0)))
        .collect())
}

fn drift(cfg: &Config) -> Result<Vec<f64>> {
    let dim: Option<usize> = cfg.num("dim")?;
    match (cfg.vector("mu")?, dim) {
        (Some(mu), Some(d)) if mu.len() == 1 => Ok(vec![mu[0]; d]),
        (Some(mu), Some(d)) if mu.len() != d => Err(Error::Config(format!("`mu` has {} values, `dim` is {d}", mu.len()))),
        (Some(mu), _) => Ok(mu),
        (None, d) => Ok(vec![0.0; d.unwrap_or(1)]),
    }
}

fn sos_synthetic(cfg: &Config, w: &mut Writer) -> Result<Value> {
    let mu = drift(cfg)?;
    let rounds: usize = cfg.num_or("rounds", 2000)?;
    let path = synthetic_outcomes(&mu, rounds, cfg.seed()?)?;
    let domain = Domain::symmetric_box(mu.len(), 1.0)?;
    let training = make_training(&domain, cfg.num_or("epsilon0", DEFAULT_EPSILON0)?, scheme(cfg)?)?;
    let run = sos_run(&GameConfig::new(domain, training)?, &path)?;
    finish_sos(&run, w, json!({ "seed": cfg.seed()?, "mu": mu }))
}

fn universal_compare(cfg: &Config, w: &mut Writer) -> Result<Value> {
    let (domain, path, game) = match cfg.raw("input") {
        Some(_) => {
            let table = PriceTable::read_csv(cfg.input()?)?;
            if table.dim() != 1 {
                return Err(Error::Config("universal_compare needs a single price column".into()));
            }
            let tr = transform_returns(&table.rows, cfg.num_or("c", 0.17)?)?;
            let game = tr.game()?;
            (tr.domain, tr.outcomes, game)
        }
        None => {
            let mu = cfg.num_or("mu", 0.1)?;
            let path = synthetic_outcomes(&[mu], cfg.num_or("rounds", 2000)?, cfg.seed()?)?;
            let domain = Domain::symmetric_box(1, 1.0)?;
            let training = make_training(&domain, DEFAULT_EPSILON0, TrainingScheme::Corners)?;
            let game = GameConfig::new(domain.clone(), training)?;
            (domain, path, game)
        }
    };
    let accounts = cfg.num_or("M", 100)?;
    let run = sos_run(&game, &path)?;
    let k1: Vec<f64> = run.ledger.records().iter().map(|r| r.log_k_true).collect();
    let ku0 = universal_portfolio(&UniversalPortfolioConfig { accounts, include_training: false }, &domain, &path)?;
    let ku1 = universal_portfolio(&UniversalPortfolioConfig { accounts, include_training: true }, &domain, &path)?;
    let rows = (0..path.len()).map(|i| vec![(i + 1).to_string(), fmt_float(k1[i]), fmt_float(ku0[i]), fmt_float(ku1[i])]);
    w.csv("compare.csv", &["n", "K1", "KU0", "KU1"], rows)?;
    w.ledger(&run)?;
    let last = |v: &[f64]| v.last().copied().unwrap_or(0.0);
    let summary = json!({
        "N": path.len(),
        "M": accounts,
        "logK1": last(&k1),
        "logKU0": last(&ku0),
        "logKU1": last(&ku1),
    });
    w.series(&[("K1", k1), ("KU0", ku0), ("KU1", ku1)])?;
    w.json("summary.json", &summary)?;
    Ok(summary)
}

fn holder(cfg: &Config, w: &mut Writer) -> Result<Value> {
    let path = match cfg.raw("input") {
        Some(_) => PricePath::read_csv(cfg.input()?)?,
        None => gen_fbm(
            cfg.num_or("hurst", 0.5)?,
            cfg.num_or("scale", 1.0)?,
            cfg.num_or("horizon", 1.0)?,
            cfg.num_or("grid_step", 1.0 / (1u64 << 19) as f64)?,
            cfg.seed()?,
        )?,
    };
    let deltas = cfg.vector("deltas")?.unwrap_or_else(|| vec![0.02, 0.01, 0.005]);
    let rows = holder_experiment(&path, &deltas, cfg.num_or("epsilon0", DEFAULT_EPSILON0)?)?;
    w.csv("holder.csv", &HOLDER_HEADER, rows.iter().map(|r| r.fields()))?;
    let summary = json!({
        "hurst": cfg.num::<f64>("hurst")?,
        "seed": cfg.seed()?,
        "rows": rows,
    });
    w.json("summary.json", &summary)?;
    Ok(summary)
}

fn girsanov(cfg: &Config, w: &mut Writer) -> Result<Value> {
    let mu = DVector::from_vec(cfg.vector("mu")?.unwrap_or_else(|| vec![0.1]));
    let d = mu.len();
    let sigma = cfg.matrix("sigma", d)?.unwrap_or_else(|| DMatrix::identity(d, d) * 0.3);
    let gc = GirsanovConfig {
        mu,
        sigma,
        horizon: cfg.num_or("horizon", 200.0)?,
        delta: cfg.num("delta")?,
        grid_step: cfg.num("grid_step")?,
        seed: cfg.seed()?,
        epsilon0: cfg.num_or("epsilon0", DEFAULT_EPSILON0)?,
    };
    let r = girsanov_rate_experiment(&gc)?;
    let summary = serde_json::to_value(&r)?;
    w.json("summary.json", &summary)?;
    Ok(summary)
}

fn model_select(cfg: &Config, w: &mut Writer) -> Result<Value> {
    let eps = cfg.num_or("epsilon0", DEFAULT_EPSILON0)?;
    let (items, bounds) = match cfg.raw("input") {
        Some(_) => {
            let table = PriceTable::read_csv(cfg.input()?)?;
            let tr = transform_returns(&table.rows, cfg.num_or("c", 0.17)?)?;
            let d = table.dim();
            let items: Vec<Vec<f64>> = (0..d).map(|j| tr.outcomes.iter().map(|x| x[j]).collect()).collect();
            let bounds = tr.transform.rho.iter().map(|r| (-1.0 - r, 1.0 - r)).collect();
            (items, Some(bounds))
        }
        None => {
            let mu = drift(cfg)?;
            let path = synthetic_outcomes(&mu, cfg.num_or("rounds", 1000)?, cfg.seed()?)?;
            let items = (0..mu.len()).map(|j| path.iter().map(|x| x[j]).collect()).collect();
            (items, None)
        }
    };
    let d_max = cfg.num_or("d_max", items.len())?.min(items.len());
    let order: Vec<usize> = (0..d_max).collect();
    let report = select_dimension(&items, &order, &ModelSelectConfig { epsilon0: eps, bounds })?;
    let p = w.dir.join("report.csv");
    report.write_csv(&p)?;
    w.files.push(p);
    let summary = serde_json::to_value(&report)?;
    w.json("summary.json", &summary)?;
    Ok(summary)
}
