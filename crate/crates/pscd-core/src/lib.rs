//! Parallel sequential change detection with compound risk control.
//!
//! `K` independent data streams each switch from a pre-change to a post-change
//! distribution at an unknown time `τ_k` drawn from a known prior. At every
//! step the procedure observes the still-active streams, updates the posterior
//! probability `W_{k,t} = P(τ_k < t | data)` per stream, and shrinks the active
//! set so that a user-chosen risk functional of the posteriors stays below a
//! tolerance `α` while a utility functional is maximized. Deactivating a
//! stream declares its change point and stops its data collection permanently.
//!
//! Modules:
//! - [`prior`]: change-point priors (geometric with an atom at ∞, tabulated).
//! - [`model`]: pre/post observation models, ground-truth sampling.
//! - [`posterior`]: the log-space recursion for `W_{k,t}` plus a direct-sum
//!   reference evaluator.
//! - [`metrics`]: the six risk/utility functionals and admissibility checks.
//! - [`policy`]: one-step subset selection (exhaustive and sorted-prefix
//!   rules) and the sequential driver.
//! - [`oracle`]: brute-force validators, including a finite-horizon MDP
//!   solver for toy instances.
//!
//! The crate is `no_std`-compatible (`alloc` required); disable the default
//! `std` feature for embedded use.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
mod math;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod posterior;
pub mod prior;

pub use error::Error;
