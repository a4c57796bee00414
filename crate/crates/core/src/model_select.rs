//! Choosing how many betting items to trade.
//!
//! Items are added one at a time in a fixed order, giving nested games. For
//! each prefix the hindsight term `(N + n0) D(g || g*)` is traded off against
//! half the accumulated log information, and the prefix with the largest
//! difference wins.

use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{axis_scale, Domain, GameConfig, Outcome, TrainingSet, DEFAULT_EPSILON0};
use crate::output::{fmt_float, write_csv};
use crate::sos::sos_run;

/// Relative tolerance under which two criteria count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ModelSelectConfig {
    pub epsilon0: f64,
    /// Outcome bounds `(lo, hi)` per item, indexed like the input items.
    /// `None` means `[-1, 1]` for every item.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for ModelSelectConfig {
    fn default() -> Self {
        ModelSelectConfig {
            epsilon0: DEFAULT_EPSILON0,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DimensionRow {
    pub d: usize,
    pub kl_term: f64,
    pub penalty: f64,
    pub criterion: f64,
    #[serde(rename = "logK_true")]
    pub log_k_true: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NestedGameReport {
    pub rows: Vec<DimensionRow>,
    pub selected: usize,
    /// Items in the order they were added.
    pub order: Vec<usize>,
}

pub const REPORT_HEADER: [&str; 6] = ["d", "kl_term", "penalty", "criterion", "logK_true", "selected"];

impl NestedGameReport {
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let rows = self.rows.iter().map(|r| {
            vec![
                r.d.to_string(),
                fmt_float(r.kl_term),
                fmt_float(r.penalty),
                fmt_float(r.criterion),
                fmt_float(r.log_k_true),
                u8::from(r.d == self.selected).to_string(),
            ]
        });
        write_csv(path, &REPORT_HEADER, rows)
    }
}

/// Runs SOS on every prefix `order[..d]` of the items. `items[j][n]` is the
/// outcome of item `j` at round `n`.
pub fn select_dimension(items: &[Vec<f64>], order: &[usize], config: &ModelSelectConfig) -> Result<NestedGameReport> {
    if order.is_empty() {
        return Err(Error::InvalidArgument("item order is empty".into()));
    }
    let mut seen = vec![false; items.len()];
    for &j in order {
        if j >= items.len() || std::mem::replace(&mut seen[j], true) {
            return Err(Error::InvalidArgument(format!("item {j} is out of range or repeated in the order")));
        }
    }
    let n = items[order[0]].len();
    if let Some(&j) = order.iter().find(|&&j| items[j].len() != n) {
        return Err(Error::InvalidArgument(format!(
            "item {j} has {} outcomes, item {} has {n}",
            items[j].len(),
            order[0]
        )));
    }
    let bound = |j: usize| config.bounds.as_ref().map_or((-1.0, 1.0), |b| b[j]);
    if let Some(b) = &config.bounds {
        if b.len() != items.len() {
            return Err(Error::DimensionMismatch { expected: items.len(), got: b.len() });
        }
    }
    let domain_for = |d: usize| {
        Domain::new_box(
            DVector::from_fn(d, |i, _| bound(order[i]).0),
            DVector::from_fn(d, |i, _| bound(order[i]).1),
        )
    };
    // One training scale for all prefixes: the smaller game's training is
    // then the projection of the larger one's and the hindsight optimum can
    // only grow with d.
    let full = domain_for(order.len())?;
    let c = axis_scale(&full, config.epsilon0);

    let mut rows = Vec::with_capacity(order.len());
    for d in 1..=order.len() {
        let domain = domain_for(d)?;
        let training = TrainingSet::axis_with_scale(&domain, config.epsilon0, c)?;
        let game = GameConfig::new(domain, training)?;
        let path: Vec<Outcome> = (0..n)
            .map(|t| DVector::from_fn(d, |i, _| items[order[i]][t]))
            .collect();
        let run = sos_run(&game, &path)?;
        let total = run.problem.len() as f64;
        let (kl_term, penalty) = match run.ledger.last() {
            Some(rec) => (total * rec.diag.gr, rec.diag.ld2),
            None => (run.initial.phi00, 0.0),
        };
        rows.push(DimensionRow {
            d,
            kl_term,
            penalty,
            criterion: kl_term - penalty,
            log_k_true: run.ledger.log_capital(),
        });
    }
    for w in rows.windows(2) {
        if w[1].penalty < w[0].penalty {
            log::warn!(
                "penalty decreases from d = {} ({}) to d = {} ({})",
                w[0].d,
                w[0].penalty,
                w[1].d,
                w[1].penalty
            );
        }
    }
    let mut selected = 0;
    for (i, r) in rows.iter().enumerate() {
        let best = rows[selected].criterion;
        if r.criterion > best + TIE_TOLERANCE * best.abs().max(1.0) {
            selected = i;
        }
    }
    Ok(NestedGameReport {
        selected: rows[selected].d,
        rows,
        order: order.to_vec(),
    })
}
