//! Two-layer granulation loops.
//!
//! A rectangular self-organizing map compresses the training data into crisp
//! granules (prototype vectors with attached decisions). A second layer then
//! either fits a first-order Takagi–Sugeno fuzzy system on those granules
//! ([`dynamics::run_sonfis`]) or discretizes them with 1-D SOM scaling and
//! induces rough-set decision rules ([`dynamics::run_sorst_as`]). The error of
//! the second layer on held-out data feeds back into the neuron count of the
//! next SOM through the affine growth law
//!
//! ```text
//! N(t+1) = alpha * N(t) + beta * E(t) + gamma
//! ```
//!
//! and the resulting neuron-growth trajectory is the order/disorder
//! observable that [`sweep`] aggregates over parameter grids.

pub mod dataset;
pub mod dynamics;
mod error;
pub mod nfis;
pub mod rst;
pub mod seed;
pub mod som;
pub mod sweep;

pub use error::{Error, Result};
