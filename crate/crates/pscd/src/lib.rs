//! Monte Carlo harness and command line front end for [`pscd_core`].
//!
//! The core crate owns the mathematics: posterior recursions, compound
//! risk/utility functionals, and the one-step selection rules. This crate
//! owns everything that needs an operating system:
//!
//! - [`config`]: TOML experiment files, one per preset, parsed strictly.
//! - [`harness`]: the replication engine and the ex-post scoring of decision
//!   traces against the sampled ground truth.
//! - [`report`]: tidy CSV emission (`trajectory.csv`, `summary.csv`).
//! - [`trace`]: JSON serialization of decision traces.
//! - [`suites`]: brute-force validation suites behind `pscd oracle-check`.
//! - [`cli`]: the `pscd` binary (`simulate`, `oracle-check`, `schedule`).

pub mod cli;
pub mod config;
pub mod harness;
pub mod report;
pub mod suites;
pub mod trace;
