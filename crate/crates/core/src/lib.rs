//! Adapted margin cosine losses for prior-robust classification.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense vectors/matrices, normalization geometry, stable
//!   reductions, a finite-difference oracle and a reproducible RNG.
//! - [`dataset`]: answer vocabularies, question-type registries, VQA-CP
//!   ingestion, soft targets and the synthetic prior-shift generator.
//! - [`margin`]: normalized frequencies, adapted margins, type entropies and
//!   scale-factor lower bounds.
//! - [`losses`]: forward/backward passes for `ce`, `nsl`, `lmc` and `adavqa`.
//! - [`trainer`]: a deterministic SGD trainer, gradient checks and the
//!   fixed-vs-adapted margin sweep.
//! - [`evaluate`]: the soft VQA accuracy metric, aggregated reports and
//!   embedding export.

pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod losses;
pub mod margin;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
