//! Partition-function estimation for discrete pairwise Markov random fields.
//!
//! Three variational estimators are provided, with their well-known ordering
//! `Ã_MF ≤ Ã_Bethe ≤ Ã_TRW` and `Ã_MF ≤ log Z ≤ Ã_TRW`:
//!
//! * [`meanfield`]: naive mean field (lower bound),
//! * [`bethe`]: loopy belief propagation on the Bethe free energy,
//! * [`trw`]: tree-reweighted belief propagation (upper bound).
//!
//! [`clamping`] refines any of them by clamping variables and summing the
//! approximate sub-partition functions; [`select`] scores which variable to
//! clamp next. [`exact`] supplies ground truth for small and grid-sized models.

pub mod bethe;
pub mod clamping;
pub mod error;
pub mod exact;
pub mod gen;
pub mod harness;
pub mod logspace;
pub mod meanfield;
pub mod model;
pub mod passing;
pub mod result;
pub mod select;
pub mod trw;

pub use error::{Error, Result};
pub use model::{BinaryView, ClampMap, ModelBuilder, PairwiseModel};
pub use result::{Bound, InferenceResult, Marginals, Method};
