//! Deep negative correlation learning.
//!
//! A shared feature trunk feeds `K` linear heads, each reading a disjoint
//! block of trunk features. Heads are trained jointly with a loss that
//! rewards accuracy and penalizes agreement with the ensemble mean. The
//! crate also carries the diagnostics used to study such ensembles
//! (bias-variance-covariance decomposition, ambiguity, pairwise diversity,
//! empirical Rademacher complexity) and the usual regression metrics.
//!
//! ```
//! use dncl::data::{gen_spirals, SpiralsSpec};
//! use dncl::ensemble::{train, NclEnsemble, TrainConfig};
//! use dncl::netcore::{Activation, LayerSpec, Rng};
//!
//! # fn main() -> dncl::Result<()> {
//! let spec = SpiralsSpec { points_per_arm: 20, ..Default::default() };
//! let data = gen_spirals(&spec)?;
//! let trunk = [
//!     LayerSpec::Dense { in_dim: 2, out_dim: 12 },
//!     LayerSpec::Activation(Activation::Tanh),
//! ];
//! let mut model = NclEnsemble::new(2, &trunk, 3, 1, 5e-3, false, &mut Rng::new(7))?;
//! let cfg = TrainConfig { epochs: 5, ..Default::default() };
//! let outcome = train(&mut model, &data, &cfg)?;
//! assert_eq!(outcome.log.rows.len(), 5);
//! # Ok(())
//! # }
//! ```

pub mod data;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod losses;
pub mod netcore;

pub use error::{CheckpointError, Error, Result};
