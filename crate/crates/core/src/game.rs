//! The bounded forecasting game: outcome domains, training data and exact
//! capital accounting.
//!
//! Skeptic bets a proportion vector `alpha` of the current capital and
//! Reality answers with an outcome `x` from a compact domain `D` whose convex
//! hull contains the origin. Capital evolves as `K_n = K_{n-1} (1 + alpha.x)`
//! and is stored only in log space (nats).

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::output::{csv_writer, fmt_float};

/// A move of Reality: a vector of `d` dimensionless returns.
pub type Outcome = DVector<f64>;

/// Absolute slack applied to every boundary test.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

/// Default interiority margin used when a config does not set one.
pub const DEFAULT_EPSILON0: f64 = 0.1;

/// Largest dimension accepted by the corner training scheme.
pub const MAX_CORNER_DIM: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    /// Component-wise interval `[lo_j, hi_j]` with `lo_j < 0 < hi_j`.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// Euclidean ball (its boundary is the sphere `C_delta`).
    Sphere { radius: f64 },
    /// Only a bound on the norm of the outcomes is known.
    ExplicitBound { bound: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    dim: usize,
    kind: DomainKind,
}

impl Domain {
    pub fn new_box(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::InvalidDomain("dimension must be positive".into()));
        }
        for j in 0..lo.len() {
            if !(lo[j] < 0.0 && hi[j] > 0.0) || !lo[j].is_finite() || !hi[j].is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "box coordinate {j} is [{}, {}]; the origin must be interior",
                    lo[j], hi[j]
                )));
            }
        }
        Ok(Domain {
            dim: lo.len(),
            kind: DomainKind::Box { lo, hi },
        })
    }

    /// The cube `[-half_width, half_width]^dim`.
    pub fn symmetric_box(dim: usize, half_width: f64) -> Result<Self> {
        Self::new_box(
            DVector::from_element(dim, -half_width),
            DVector::from_element(dim, half_width),
        )
    }

    pub fn sphere(dim: usize, radius: f64) -> Result<Self> {
        Self::check_radius(dim, radius)?;
        Ok(Domain {
            dim,
            kind: DomainKind::Sphere { radius },
        })
    }

    pub fn explicit_bound(dim: usize, bound: f64) -> Result<Self> {
        Self::check_radius(dim, bound)?;
        Ok(Domain {
            dim,
            kind: DomainKind::ExplicitBound { bound },
        })
    }

    fn check_radius(dim: usize, r: f64) -> Result<()> {
        if dim == 0 {
            return Err(Error::InvalidDomain("dimension must be positive".into()));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidDomain(format!("radius must be positive, got {r}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    /// `max_{x in D} |x|`.
    pub fn max_norm(&self) -> f64 {
        match &self.kind {
            DomainKind::Box { lo, hi } => lo
                .iter()
                .zip(hi.iter())
                .map(|(l, h)| l.abs().max(h.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            DomainKind::Sphere { radius } => *radius,
            DomainKind::ExplicitBound { bound } => *bound,
        }
    }

    pub fn contains(&self, x: &Outcome) -> bool {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.kind {
            DomainKind::Box { lo, hi } => (0..self.dim)
                .all(|j| x[j] >= lo[j] - MEMBERSHIP_SLACK && x[j] <= hi[j] + MEMBERSHIP_SLACK),
            DomainKind::Sphere { radius: r } | DomainKind::ExplicitBound { bound: r } => {
                x.norm() <= r + MEMBERSHIP_SLACK
            }
        }
    }

    /// `sup (1 + alpha.x)` over prudent `alpha` and `x` in `D`: the largest
    /// one-step capital multiple allowed by the collateral duty.
    pub fn max_one_step_growth(&self) -> f64 {
        match &self.kind {
            // Spending the whole collateral budget on the most lopsided
            // coordinate is optimal; the program is linear per coordinate.
            DomainKind::Box { lo, hi } => {
                let best = lo
                    .iter()
                    .zip(hi.iter())
                    .map(|(l, h)| (h / -l).max(-l / h))
                    .fold(0.0_f64, f64::max);
                1.0 + best
            }
            DomainKind::Sphere { .. } | DomainKind::ExplicitBound { .. } => 2.0,
        }
    }

    /// Vertices of a box domain, `None` for other kinds.
    pub fn corners(&self) -> Option<Vec<Outcome>> {
        let DomainKind::Box { lo, hi } = &self.kind else {
            return None;
        };
        let d = self.dim;
        if d > MAX_CORNER_DIM {
            return None;
        }
        // Bit j of the index selects hi (set) or lo (clear) for coordinate
        // d-1-j, so index 0 is the all-lo corner.
        Some(
            (0..1usize << d)
                .map(|mask| {
                    DVector::from_fn(d, |j, _| {
                        if mask >> (d - 1 - j) & 1 == 1 {
                            hi[j]
                        } else {
                            lo[j]
                        }
                    })
                })
                .collect(),
        )
    }

    /// Draws a point of `D` (uniform for boxes, uniform in the ball otherwise).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Outcome {
        match &self.kind {
            DomainKind::Box { lo, hi } => {
                DVector::from_fn(self.dim, |j, _| rng.random_range(lo[j]..=hi[j]))
            }
            DomainKind::Sphere { radius: r } | DomainKind::ExplicitBound { bound: r } => {
                let dir = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let norm = dir.norm().max(f64::MIN_POSITIVE);
                let u: f64 = rng.random();
                dir * (r * u.powf(1.0 / self.dim as f64) / norm)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingScheme {
    /// `2d` vectors `(0, .., +-c, .., 0)` with `c = max|x| sqrt(d) / (1 - eps0)`.
    Axis,
    /// The `2^d` vertices of a box domain.
    Corners,
}

/// Synthetic outcomes prepended to the game, indices `-n0+1 ..= 0`.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    epsilon0: f64,
    points: Vec<Outcome>,
    scheme: TrainingScheme,
}

impl TrainingSet {
    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    pub fn points(&self) -> &[Outcome] {
        &self.points
    }

    pub fn scheme(&self) -> TrainingScheme {
        self.scheme
    }

    pub fn n0(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// The interiority margin that is actually guaranteed for every `x` in
    /// the domain. Corner training only keeps the hindsight optimum strictly
    /// inside the prudent set, with no uniform margin.
    pub fn certified_epsilon0(&self) -> Option<f64> {
        match self.scheme {
            TrainingScheme::Axis => Some(self.epsilon0),
            TrainingScheme::Corners => None,
        }
    }

    /// Axis training with an explicit half-width `c`. Nested games share one
    /// `c` so that a smaller game's training is the projection of a larger
    /// one's. `c` must be at least `max|x| sqrt(d) / (1 - eps0)` for the
    /// margin to be certified; this is checked.
    pub fn axis_with_scale(domain: &Domain, epsilon0: f64, c: f64) -> Result<Self> {
        check_epsilon(epsilon0)?;
        let d = domain.dim();
        let needed = axis_scale(domain, epsilon0);
        if !(c >= needed * (1.0 - 1e-12)) {
            return Err(Error::InvalidTraining(format!(
                "axis half-width {c} is below the certified minimum {needed}"
            )));
        }
        let mut points = Vec::with_capacity(2 * d);
        for i in 0..d {
            for sign in [1.0, -1.0] {
                let mut v = DVector::zeros(d);
                v[i] = sign * c;
                points.push(v);
            }
        }
        let set = TrainingSet {
            epsilon0,
            points,
            scheme: TrainingScheme::Axis,
        };
        set.spot_check(domain)?;
        Ok(set)
    }

    /// Largest `1 + alpha.x_n` over training points and `alpha` in the
    /// training polytope.
    pub(crate) fn max_training_growth(&self, domain: &Domain) -> f64 {
        match self.scheme {
            // |alpha_i| <= 1/c, so 1 + alpha.(+-c e_i) <= 2.
            TrainingScheme::Axis => 2.0,
            // The polytope is the prudent set of the box itself.
            TrainingScheme::Corners => domain.max_one_step_growth(),
        }
    }

    /// Sampled check of the interiority implication: for alpha at the
    /// vertices of the axis polytope and x drawn from D, `1 + alpha.x >= eps0`.
    fn spot_check(&self, domain: &Domain) -> Result<()> {
        let d = domain.dim();
        let c = self.points[0].amax();
        let mut rng = ChaCha8Rng::seed_from_u64(0x7261_696e);
        let vertices: Vec<DVector<f64>> = if d <= 10 {
            (0..1usize << d)
                .map(|mask| DVector::from_fn(d, |j, _| if mask >> j & 1 == 1 { 1.0 / c } else { -1.0 / c }))
                .collect()
        } else {
            (0..256)
                .map(|_| DVector::from_fn(d, |_, _| if rng.random::<bool>() { 1.0 / c } else { -1.0 / c }))
                .collect()
        };
        let mut worst = f64::INFINITY;
        for _ in 0..1000 {
            let x = domain.sample(&mut rng);
            for a in &vertices {
                worst = worst.min(1.0 + a.dot(&x));
            }
        }
        if worst < self.epsilon0 - 1e-12 {
            return Err(Error::InvalidTraining(format!(
                "sampled 1 + alpha.x = {worst} falls below eps0 = {}",
                self.epsilon0
            )));
        }
        Ok(())
    }
}

fn check_epsilon(epsilon0: f64) -> Result<()> {
    if epsilon0 > 0.0 && epsilon0 < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon0))
    }
}

/// Minimal certified half-width for axis training.
pub fn axis_scale(domain: &Domain, epsilon0: f64) -> f64 {
    domain.max_norm() * (domain.dim() as f64).sqrt() / (1.0 - epsilon0)
}

/// Builds the training data for `domain`.
pub fn make_training(domain: &Domain, epsilon0: f64, scheme: TrainingScheme) -> Result<TrainingSet> {
    check_epsilon(epsilon0)?;
    match scheme {
        TrainingScheme::Axis => {
            TrainingSet::axis_with_scale(domain, epsilon0, axis_scale(domain, epsilon0))
        }
        TrainingScheme::Corners => {
            if domain.dim() > MAX_CORNER_DIM {
                return Err(Error::InvalidTraining(format!(
                    "corner training needs 2^{} points; dimension above {MAX_CORNER_DIM} rejected",
                    domain.dim()
                )));
            }
            let points = domain.corners().ok_or_else(|| {
                Error::InvalidTraining("corner training requires a box domain".into())
            })?;
            Ok(TrainingSet {
                epsilon0,
                points,
                scheme: TrainingScheme::Corners,
            })
        }
    }
}

/// Rank of a set of vectors (used to confirm training data spans R^d).
pub fn rank(points: &[Outcome]) -> usize {
    if points.is_empty() {
        return 0;
    }
    let d = points[0].len();
    let m = DMatrix::from_fn(points.len(), d, |i, j| points[i][j]);
    m.rank(1e-10 * m.amax().max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Sequential optimizing strategy: bet the previous round's hindsight optimum.
    Sequential,
}

#[derive(Debug, Clone)]
pub struct GameConfig {
    pub domain: Domain,
    pub training: TrainingSet,
    pub strategy: Strategy,
    pub seed: u64,
}

impl GameConfig {
    pub fn new(domain: Domain, training: TrainingSet) -> Result<Self> {
        if training.dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: training.dim(),
            });
        }
        Ok(GameConfig {
            domain,
            training,
            strategy: Strategy::Sequential,
            seed: 0,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }
}

/// Diagnostic series attached to a round. Unset values are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// `Phi_{0,n}(alpha*_n)`, training included.
    pub log_k_hindsight: f64,
    /// `(n + n0) D(g_n || g*_n) - log[I_n] / 2`.
    pub log_k_approx: f64,
    /// `log_k_hindsight - log_k_true - Phi_{0,0}(alpha*_0)`, i.e. the summed
    /// hindsight deficiency.
    pub ld1: f64,
    /// `log[I_n] / 2`.
    pub ld2: f64,
    /// `(3/2) log n`.
    pub ld3: f64,
    /// `D(g_n || g*_n)`.
    pub gr: f64,
    /// `x_bar' V_bar*^{-1} x_bar / 2`.
    pub qr: f64,
    /// `log[I_n] / (2n)`.
    pub dr: f64,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Diagnostics {
            log_k_hindsight: f64::NAN,
            log_k_approx: f64::NAN,
            ld1: f64::NAN,
            ld2: f64::NAN,
            ld3: f64::NAN,
            gr: f64::NAN,
            qr: f64::NAN,
            dr: f64::NAN,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub n: usize,
    pub alpha_used: DVector<f64>,
    pub x: Outcome,
    pub log_k_true: f64,
    pub diag: Diagnostics,
}

/// Per-round capital history of one game.
#[derive(Debug, Clone)]
pub struct CapitalLedger {
    dim: usize,
    records: Vec<RoundRecord>,
}

pub const LEDGER_HEADER: [&str; 10] = [
    "n",
    "logK_true",
    "logK_hindsight",
    "logK_approx",
    "LD1",
    "LD2",
    "LD3",
    "GR",
    "QR",
    "DR",
];

impl CapitalLedger {
    pub fn new(dim: usize) -> Self {
        CapitalLedger {
            dim,
            records: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&RoundRecord> {
        self.records.last()
    }

    pub(crate) fn last_mut(&mut self) -> Option<&mut RoundRecord> {
        self.records.last_mut()
    }

    /// Current log capital in nats (0 before the first round).
    pub fn log_capital(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.log_k_true)
    }

    pub fn capital(&self) -> f64 {
        self.log_capital().exp()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &Outcome> {
        self.records.iter().map(|r| &r.x)
    }

    /// Plays one round with proportion `alpha` against `x` and returns the
    /// log-capital increment.
    pub fn step_capital(&mut self, alpha: &DVector<f64>, x: &Outcome) -> Result<f64> {
        let round = self.records.len() + 1;
        for v in [alpha.len(), x.len()] {
            if v != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: v,
                });
            }
        }
        let factor = 1.0 + alpha.dot(x);
        if !(factor > 0.0) {
            return Err(Error::Collateral { round, value: factor });
        }
        let inc = factor.ln();
        let log_k_true = self.log_capital() + inc;
        self.records.push(RoundRecord {
            n: round,
            alpha_used: alpha.clone(),
            x: x.clone(),
            log_k_true,
            diag: Diagnostics::default(),
        });
        Ok(inc)
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv_writer(w);
        w.write_record(LEDGER_HEADER)?;
        for r in &self.records {
            let d = &r.diag;
            let row = [
                r.n.to_string(),
                fmt_float(r.log_k_true),
                fmt_float(d.log_k_hindsight),
                fmt_float(d.log_k_approx),
                fmt_float(d.ld1),
                fmt_float(d.ld2),
                fmt_float(d.ld3),
                fmt_float(d.gr),
                fmt_float(d.qr),
                fmt_float(d.dr),
            ];
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<ledger>", e))?;
        Ok(())
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }
}
