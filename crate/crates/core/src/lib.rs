//! Discrete gradient estimation for multi-agent actor-critic training.
//!
//! The crate provides, bottom to top:
//!
//! * [`tensor`] / [`tape`] / [`optim`] — a minimal dense-tensor reverse-mode
//!   autodiff core sufficient for small MLPs, softmax relaxations, and
//!   straight-through composition, plus Adam.
//! * [`estimators`] — five discrete gradient estimators over categorical
//!   actions: STGS-1, STGS-T, TAGS, GRMC-K, and GST.
//! * [`oracle`] — an exact enumeration gradient oracle and empirical
//!   bias/variance/MSE measurement of any estimator against it.
//! * [`envs`] — compact Level-Based Foraging and Multi-Robot Warehouse
//!   grid worlds behind a shared partially-observable game interface.
//! * [`maddpg`] — a MADDPG trainer with centralised critics, decentralised
//!   policies, and a pluggable estimator in the actor update.
//! * [`evalstats`] — return summaries, Welch's t-test, and mini-batch
//!   gradient-variance records.
//! * [`bench`] — a wall-clock microbenchmark of the estimator classes.

pub mod bench;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod evalstats;
pub mod maddpg;
pub mod optim;
pub mod oracle;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
