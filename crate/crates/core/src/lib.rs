//! Feedback communication over unifilar channels.
//!
//! * [`channel`]: kernels, next-state maps, built-in binary families.
//! * [`capacity`]: belief-MDP relative value iteration for the feedback capacity.
//! * [`exponent`]: the two-state hypothesis MDP and its divergence rates.
//! * [`encoding`]: DRPM interval matching and the stage encoders.
//! * [`scheme`]: the variable-length transmission state machine.
//! * [`montecarlo`]: trial batches, sweeps and CSV output.
//! * [`diagnostics`]: empirical drift and belief-process checks.
//! * [`cli`]: the `unifeed` command-line front end.

// `!(x > 0.0)` is used on purpose so NaN is rejected; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod capacity;
pub mod channel;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod encoding;
pub mod error;
pub mod exponent;
pub mod montecarlo;
pub mod real;
pub mod scheme;
pub mod simplex;
pub mod units;

pub use error::{Error, Result};
