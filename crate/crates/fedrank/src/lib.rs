//! Federated learning-to-rank toolkit.
//!
//! Three pieces work together:
//!
//! * per-record-type linear rankers trained by coordinate ascent, with a
//!   frequency-based weight initialization for binary features ([`ltr_ca`]);
//! * a global collator whose per-record-type fusion weights are found by
//!   Nelder-Mead simplex search directly on mean NDCG@k, seeded by a pairwise
//!   linear ranker ([`fusion`]);
//! * evaluation: NDCG and S-recall ([`metrics::relevance`]), plus normalized
//!   cumulative entropy whose normalizer is an integer max-entropy problem
//!   solved in closed form and cross-checked by branch-and-bound
//!   ([`metrics::diversity`], [`maxent`]).
//!
//! The numeric kernels are generic over the scalar type via [`scalar::Scalar`];
//! everything above them (trainers, IO, CLI) uses the concrete [`Real`] alias.

pub mod core;
pub mod error;
pub mod fusion;
pub mod io;
pub mod ltr_ca;
pub mod maxent;
pub mod metrics;
pub mod scalar;

pub mod cli;

/// Concrete scalar used by trainers, IO and the CLI.
pub type Real = f64;

/// Ranking over [`Real`] scores, the form produced by trainers and parsers.
pub type Ranking = core::Ranking<Real>;

pub use error::{Error, Result};
