//! Contextual online matching bandits: markets where agents learn linear
//! score models over arm contexts while a platform matches them to arms by
//! deferred acceptance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod bounds;
pub mod environment;
pub mod error;
pub mod harness;
pub mod market;
pub mod matching;
pub mod policy;
pub mod regret;
pub mod rng;
pub mod scenario;

pub use error::{Error, ErrorCategory, Result};
