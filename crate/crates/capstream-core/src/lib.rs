//! Stream sampling for frequency-cap statistics.
//!
//! Estimates Q(f, H) = sum over keys in segment H of f(total key weight)
//! from a small sample of an unaggregated key/weight stream, without ever
//! aggregating the data.  The sampling schemes are capped variants of
//! sample-and-hold, parametrized by a cap l that makes a key's inclusion
//! probability roughly proportional to min(weight, l): l = 1 is distinct
//! sampling, l = infinity is classic sample-and-hold, and intermediate l
//! targets cap statistics with T near l.
//!
//! The crate provides:
//! * discrete samplers for unit-weight streams and continuous samplers for
//!   arbitrary positive weights, in fixed-threshold and fixed-size variants
//!   ([`discrete`], [`continuous`]);
//! * unbiased estimators for both, streaming (partial counts) and two-pass
//!   (exact weights) ([`discrete_est`], [`continuous_est`]);
//! * a mergeable two-pass pipeline for sharded or distributed data
//!   ([`twopass`]);
//! * coordinated multi-objective samples covering a whole set of cap
//!   parameters at once ([`multiobjective`]);
//! * a simulation harness with Zipf streams and error grids ([`harness`]).
//!
//! All randomness derives from explicit 64-bit seeds, so every sampler is a
//! pure function of (seeds, input stream).

pub mod continuous;
pub mod continuous_est;
pub mod discrete;
pub mod discrete_est;
mod error;
pub mod harness;
pub mod io;
pub mod multiobjective;
pub mod random;
pub mod stats;
pub mod twopass;
pub mod types;

pub use error::{Error, Result};
pub use random::{KeyHasher, RandomSource};
pub use types::{Element, Ell, FrequencyFunction, Key, KeyRecord, SegmentPredicate, Threshold};
