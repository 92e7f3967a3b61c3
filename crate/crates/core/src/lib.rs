//! Stability-based memorisation scores for small neural classifiers.
//!
//! The crate trains ensembles of dense networks on random subsamples of a dataset,
//! estimates per-example memorisation from their in-sample and out-of-sample accuracy,
//! checks the estimate against brute-force leave-one-out retraining, and analyses how
//! scores move across a ladder of model sizes and under distillation.

pub mod bench;
pub mod cli;
pub mod config;
pub mod data;
pub mod distill;
pub mod ensemble;
pub mod error;
pub mod fsutil;
pub mod jobs;
pub mod memscore;
pub mod nn;
pub mod proxies;
pub mod report;
pub mod seed;
pub mod trajectory;

pub use error::{Error, Result};
