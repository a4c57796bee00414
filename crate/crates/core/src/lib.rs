//! Sequential optimizing strategies for bounded forecasting games.
//!
//! A bettor holds capital `K` and each round stakes a proportion vector
//! `alpha` against an outcome `x` from a bounded domain, so that
//! `K_n = K_{n-1} (1 + alpha.x_n)`. The sequential optimizing strategy bets
//! the constant proportion that would have been best on all earlier rounds.
//!
//! Modules:
//! - [`game`]: domains, training data, the capital ledger.
//! - [`optimizer`]: the hindsight problem and its risk-neutral dual.
//! - [`sos`]: the strategy itself with exact deficiency accounting.
//! - [`baselines`]: constant strategies, the universal portfolio, Kelly rates.
//! - [`continuous`]: price paths, limit-order embedding, Hölder and growth-rate experiments.
//! - [`model_select`]: choosing the number of items for nested games.
//! - [`ingest`]: price tables and the return transform.
//! - [`experiment`]: config-driven scenarios behind the command line.

pub mod baselines;
pub mod continuous;
pub mod error;
pub mod experiment;
pub mod game;
pub mod ingest;
pub mod model_select;
pub mod optimizer;
pub mod output;
pub mod selftest;
pub mod sos;

pub use error::{Error, Result};
pub use game::{make_training, Domain, GameConfig, Outcome, TrainingScheme, TrainingSet};
pub use optimizer::{solve_phi, PhiProblem, PhiSolution};
pub use sos::{sos_run, SosRun};
